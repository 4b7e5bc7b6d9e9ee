//! Experiment configuration: one JSON document, matrices as arrays of rows.

use std::path::Path;

use delaylqr::data::{make_sigma_phi, InputSignal, NoiseModel};
use delaylqr::matrix_serde;
use delaylqr::sdp::SdpSettings;
use delaylqr::synthesis::LmiSettings;
use delaylqr::{CostWeights, DelayPlant, Mat, Vector};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Ground truth for data generation, simulation and model-based design.
    #[serde(default)]
    pub plant: Option<PlantSpec>,
    #[serde(default)]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub phi: Option<PhiSpec>,
    pub weights: WeightsSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub sdp: SdpSettings,
    #[serde(default)]
    pub lmi: LmiSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(rename = "A", with = "matrix_serde")]
    pub a: Mat,
    #[serde(rename = "B", with = "matrix_serde")]
    pub b: Mat,
    pub delay: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub samples: usize,
    #[serde(default)]
    pub t0: usize,
    pub signal: SignalSpec,
    #[serde(default, with = "matrix_serde::option")]
    pub noise_cov: Option<Mat>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Initial state of the experiment; zero when omitted.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// `u_{−d} … u_{−1}`, oldest first; taken from the signal when omitted.
    #[serde(default)]
    pub u_hist: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Sinusoid {
        amplitude: f64,
        rate: f64,
    },
    Prbs {
        amplitude: f64,
        seed: u64,
    },
    Samples {
        #[serde(default)]
        start: isize,
        values: Vec<Vec<f64>>,
    },
    /// CSV without header, one row per time step starting at `start`.
    /// Relative paths resolve against the config file.
    File {
        path: String,
        #[serde(default)]
        start: isize,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PhiSpec {
    Sigma {
        sigma: f64,
    },
    Blocks {
        #[serde(with = "matrix_serde")]
        phi11: Mat,
        #[serde(with = "matrix_serde")]
        phi12: Mat,
        #[serde(with = "matrix_serde")]
        phi22: Mat,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    #[serde(rename = "Q0", with = "matrix_serde")]
    pub q0: Mat,
    /// `Q_1 … Q_d`.
    #[serde(rename = "Q")]
    pub q: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R", with = "matrix_serde")]
    pub r: Mat,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x0: Vec<f64>,
    /// `u_{−d} … u_{−1}`, oldest first.
    pub u_hist: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub grid: GridSpec,
    /// Also locate the feasible interval by bisection up to `sigma_hi`.
    #[serde(default)]
    pub interval: Option<IntervalSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GridSpec {
    Values(Vec<f64>),
    Linear {
        start: f64,
        stop: f64,
        points: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub sigma_hi: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_rel_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub horizon: usize,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec { horizon: 60 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmiSpec {
    pub delta: f64,
    pub validation_samples: usize,
    pub validation_seed: u64,
    pub gamma_backoff: f64,
}

impl Default for LmiSpec {
    fn default() -> Self {
        let d = LmiSettings::default();
        LmiSpec {
            delta: d.delta,
            validation_samples: d.validation_samples,
            validation_seed: d.validation_seed,
            gamma_backoff: d.gamma_backoff,
        }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn vector(field: &str, v: &[f64], len: usize) -> Result<Vector, CliError> {
    if v.len() != len {
        return Err(config_err(
            field,
            format!("expected {len} entries, got {}", v.len()),
        ));
    }
    Ok(Vector::from_column_slice(v))
}

fn history(field: &str, rows: &[Vec<f64>], d: usize, m: usize) -> Result<Vec<Vector>, CliError> {
    if rows.len() != d {
        return Err(config_err(
            field,
            format!("expected {d} past inputs, got {}", rows.len()),
        ));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| vector(&format!("{field}[{i}]"), r, m))
        .collect()
}

/// The loaded configuration and the directory it came from.
pub struct Loaded {
    pub config: ExperimentConfig,
    base: std::path::PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Loaded { config, base };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        if let Some(p) = &c.plant {
            self.plant()?;
            self.weights_for(p.a.nrows(), p.b.ncols(), p.delay)?;
            if let Some(init) = &c.initial {
                vector("initial.x0", &init.x0, p.a.nrows())?;
                history("initial.u_hist", &init.u_hist, p.delay, p.b.ncols())?;
            }
        }
        if let Some(d) = &c.data {
            if d.samples == 0 {
                return Err(config_err("data.samples", "must be positive"));
            }
            if d.noise_cov.is_some() && d.seed.is_none() {
                return Err(config_err(
                    "data.seed",
                    "required when data.noise_cov is set",
                ));
            }
        }
        if let Some(PhiSpec::Sigma { sigma }) = &c.phi {
            if !(sigma.is_finite() && *sigma >= 0.0) {
                return Err(config_err("phi.sigma", "must be finite and nonnegative"));
            }
        }
        if let Some(s) = &c.sweep {
            if let GridSpec::Linear {
                points,
                start,
                stop,
            } = s.grid
            {
                if points == 0 || !(start <= stop) {
                    return Err(config_err("sweep.grid", "need points ≥ 1 and start ≤ stop"));
                }
            }
        }
        if c.simulation.horizon == 0 {
            return Err(config_err("simulation.horizon", "must be positive"));
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<DelayPlant, CliError> {
        let p = self
            .config
            .plant
            .as_ref()
            .ok_or_else(|| config_err("plant", "missing"))?;
        DelayPlant::new(p.a.clone(), p.b.clone(), p.delay).map_err(|e| config_err("plant", e))
    }

    pub fn weights_for(&self, n: usize, m: usize, d: usize) -> Result<CostWeights, CliError> {
        let w = &self.config.weights;
        let q = w
            .q
            .iter()
            .enumerate()
            .map(|(i, rows)| {
                matrix_serde::from_rows(rows).map_err(|e| config_err(&format!("weights.Q[{i}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let weights =
            CostWeights::new(w.q0.clone(), q, w.r.clone()).map_err(|e| config_err("weights", e))?;
        weights
            .check_dims(n, m, d)
            .map_err(|e| config_err("weights", e))?;
        Ok(weights)
    }

    pub fn data_spec(&self) -> Result<&DataSpec, CliError> {
        self.config
            .data
            .as_ref()
            .ok_or_else(|| config_err("data", "missing"))
    }

    /// The data-generation seed, with an optional command-line override.
    pub fn seed(&self, over: Option<u64>) -> Result<u64, CliError> {
        let d = self.data_spec()?;
        match (over, d.seed, &d.noise_cov) {
            (Some(s), _, _) | (None, Some(s), _) => Ok(s),
            (None, None, None) => Ok(0),
            (None, None, Some(_)) => Err(config_err(
                "data.seed",
                "required when data.noise_cov is set",
            )),
        }
    }

    pub fn signal(&self, m: usize) -> Result<InputSignal, CliError> {
        Ok(match &self.data_spec()?.signal {
            SignalSpec::Sinusoid { amplitude, rate } => InputSignal::Sinusoid {
                amplitude: *amplitude,
                rate: *rate,
            },
            SignalSpec::Prbs { amplitude, seed } => InputSignal::Prbs {
                amplitude: *amplitude,
                seed: *seed,
            },
            SignalSpec::Samples { start, values } => InputSignal::Samples {
                start: *start,
                values: values.clone(),
            },
            SignalSpec::File { path, start } => {
                let path = self.base.join(path);
                let mut rd = csv::ReaderBuilder::new()
                    .has_headers(false)
                    .from_path(&path)
                    .map_err(|e| {
                        config_err("data.signal.file.path", format!("{}: {e}", path.display()))
                    })?;
                let mut values = Vec::new();
                for (i, rec) in rd.records().enumerate() {
                    let rec = rec.map_err(|e| config_err("data.signal.file", e))?;
                    let row = rec
                        .iter()
                        .map(|c| c.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| config_err("data.signal.file", format!("row {i}: {e}")))?;
                    if row.len() != m {
                        return Err(config_err(
                            "data.signal.file",
                            format!("row {i} has {} entries, expected {m}", row.len()),
                        ));
                    }
                    values.push(row);
                }
                InputSignal::Samples {
                    start: *start,
                    values,
                }
            }
        })
    }

    pub fn data_x0(&self, n: usize) -> Result<Vector, CliError> {
        match &self.data_spec()?.x0 {
            Some(x) => vector("data.x0", x, n),
            None => Ok(Vector::zeros(n)),
        }
    }

    pub fn data_history(&self, d: usize, m: usize) -> Result<Option<Vec<Vector>>, CliError> {
        self.data_spec()?
            .u_hist
            .as_ref()
            .map(|h| history("data.u_hist", h, d, m))
            .transpose()
    }

    /// Augmented initial state `[x₀; u_{−d}; …; u_{−1}]`.
    pub fn initial_state(&self, n: usize, m: usize, d: usize) -> Result<Vector, CliError> {
        let init = self
            .config
            .initial
            .as_ref()
            .ok_or_else(|| config_err("initial", "missing"))?;
        let x = vector("initial.x0", &init.x0, n)?;
        let hist = history("initial.u_hist", &init.u_hist, d, m)?;
        Ok(Vector::from_iterator(
            n + m * d,
            x.iter().chain(hist.iter().flat_map(|u| u.iter())).copied(),
        ))
    }

    /// `Φ` from the config, or `diag(σ²T I, −I)` when `sigma` overrides it.
    pub fn phi(
        &self,
        sigma: Option<f64>,
        n: usize,
        samples: usize,
    ) -> Result<NoiseModel, CliError> {
        let sigma_phi =
            |s: f64| make_sigma_phi(s, n, samples).map_err(|e| config_err("phi.sigma", e));
        match (sigma, &self.config.phi) {
            (Some(s), _) => sigma_phi(s),
            (None, Some(PhiSpec::Sigma { sigma })) => sigma_phi(*sigma),
            (
                None,
                Some(PhiSpec::Blocks {
                    phi11,
                    phi12,
                    phi22,
                }),
            ) => NoiseModel::new(phi11.clone(), phi12.clone(), phi22.clone())
                .map_err(|e| config_err("phi", e)),
            (None, None) => Err(config_err("phi", "missing (or pass --sigma)")),
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        let s = self
            .config
            .sweep
            .as_ref()
            .ok_or_else(|| config_err("sweep", "missing"))?;
        let grid = match &s.grid {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Linear {
                start,
                stop,
                points: 1,
            } => vec![0.5 * (start + stop)],
            GridSpec::Linear {
                start,
                stop,
                points,
            } => (0..*points)
                .map(|i| start + (stop - start) * i as f64 / (*points - 1) as f64)
                .collect(),
        };
        if grid.is_empty() {
            return Err(config_err("sweep.grid", "empty"));
        }
        if grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(config_err("sweep.grid", "must be ascending"));
        }
        Ok(grid)
    }

    pub fn lmi_settings(&self) -> LmiSettings {
        let l = &self.config.lmi;
        LmiSettings {
            delta: l.delta,
            sdp: self.config.sdp,
            validation_samples: l.validation_samples,
            validation_seed: l.validation_seed,
            gamma_backoff: l.gamma_backoff,
        }
    }
}

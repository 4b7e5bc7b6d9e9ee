use std::fs;
use std::io::BufWriter;
use std::path::Path;

use delaylqr::data::{build_data, collect_data, compute_psi, is_consistent, DataSet};
use delaylqr::synthesis::{
    feasible_sigma_interval, preflight, sigma_lower_bound, solve_data_driven, solve_model_based,
    solve_stabilization_only, sweep_sigma, GammaMode, SweepPoint, SweepStatus, SynthesisResult,
};
use delaylqr::{closed_loop, evaluate_cost, linalg, AugmentedState, Execution, InputSource, Mat};
use serde::Serialize;

use crate::config::Loaded;
use crate::{CliError, Mode};

fn out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(delaylqr::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(delaylqr::Error::from)?;
    Ok(())
}

fn read_data(path: &Path) -> Result<DataSet, CliError> {
    let text = fs::read_to_string(path).map_err(delaylqr::Error::from)?;
    Ok(DataSet::from_json(&text)?)
}

#[derive(Serialize)]
struct GenerateReport {
    seed: u64,
    samples: usize,
    t0: usize,
    /// `sqrt(λmax(W₋W₋ᵀ)/T)`, the smallest σ whose bound admits the noise.
    realized_sigma: f64,
}

pub fn generate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let cfg = Loaded::read(config)?;
    let plant = cfg.plant()?;
    let spec = cfg.data_spec()?;
    let seed = cfg.seed(seed)?;
    let (n, m, d) = (plant.n(), plant.m(), plant.delay());
    let hist = cfg.data_history(d, m)?;
    let signal = cfg.signal(m)?;
    let (traj, _) = collect_data(
        &plant,
        &cfg.data_x0(n)?,
        hist.as_deref(),
        &signal,
        spec.t0 + spec.samples,
        spec.noise_cov.as_ref(),
        seed,
    )?;
    let data = build_data(&traj, d, spec.t0, spec.samples)?;
    // Record W₋ = 0 explicitly for noiseless runs.
    let data = match data.w_minus() {
        Some(_) => data,
        None => DataSet::new(
            data.x_plus().clone(),
            data.x_minus().clone(),
            data.u_minus_d().clone(),
            Some(Mat::zeros(n, spec.samples)),
            d,
            data.t0(),
        )?,
    };
    let w = data.w_minus().expect("set above");
    let realized_sigma =
        (linalg::max_eig(&(w * w.transpose())).max(0.0) / spec.samples as f64).sqrt();

    out_dir(out)?;
    fs::write(out.join("data.json"), data.to_json()? + "\n").map_err(delaylqr::Error::from)?;
    let file = fs::File::create(out.join("trajectory.csv")).map_err(delaylqr::Error::from)?;
    traj.write_csv(BufWriter::new(file))?;
    write_json(
        &out.join("generate.json"),
        &GenerateReport {
            seed,
            samples: spec.samples,
            t0: spec.t0,
            realized_sigma,
        },
    )?;
    println!(
        "wrote {} samples (n = {n}, m = {m}, d = {d}), seed {seed}, realized σ {realized_sigma:.6}",
        spec.samples
    );
    Ok(())
}

pub fn synthesize(
    data: Option<&Path>,
    config: &Path,
    out: &Path,
    mode: Mode,
    sigma: Option<f64>,
) -> Result<(), CliError> {
    let cfg = Loaded::read(config)?;
    let settings = cfg.lmi_settings();
    let result = match mode {
        Mode::Model => {
            let plant = cfg.plant()?;
            let weights = cfg.weights_for(plant.n(), plant.m(), plant.delay())?;
            solve_model_based(&plant, &weights, GammaMode::Minimize, &settings)?
        }
        Mode::Dd | Mode::Stabilize => {
            let path = data
                .ok_or_else(|| CliError::Config("a data set is required for this mode".into()))?;
            let data = read_data(path)?;
            let weights = cfg.weights_for(data.n(), data.m(), data.delay())?;
            let phi = cfg.phi(sigma, data.n(), data.samples())?;
            if mode == Mode::Dd {
                solve_data_driven(&data, &phi, &weights, GammaMode::Minimize, &settings)?
            } else {
                solve_stabilization_only(&data, &phi, &weights, &settings)?
            }
        }
    };
    out_dir(out)?;
    fs::write(out.join("result.json"), result.to_json()? + "\n").map_err(delaylqr::Error::from)?;
    match result.gamma {
        Some(g) => println!("γ = {g:.6e}, K = {:?}", gain_row(&result)),
        None => println!("stabilizing K = {:?}", gain_row(&result)),
    }
    Ok(())
}

fn gain_row(r: &SynthesisResult) -> Vec<f64> {
    r.k.iter().copied().collect::<Vec<_>>()
}

#[derive(Serialize)]
struct SimulationSummary {
    /// Infinite-horizon cost from the Lyapunov equation.
    cost: f64,
    gamma: Option<f64>,
    /// `γ‖X₀‖²`.
    bound: Option<f64>,
    bound_holds: Option<bool>,
    spectral_radius: f64,
    horizon: usize,
}

pub fn simulate(result: &Path, config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = Loaded::read(config)?;
    let plant = cfg.plant()?;
    let text = fs::read_to_string(result).map_err(delaylqr::Error::from)?;
    let res = SynthesisResult::from_json(&text)?;
    let (n, m, d) = (plant.n(), plant.m(), plant.delay());
    if (res.n, res.m, res.d) != (n, m, d) {
        return Err(CliError::Config(format!(
            "result is for (n, m, d) = ({}, {}, {}), plant has ({n}, {m}, {d})",
            res.n, res.m, res.d
        )));
    }
    let weights = cfg.weights_for(n, m, d)?;
    let x0 = cfg.initial_state(n, m, d)?;
    let model = plant.lift();
    let gain = res.gain();
    let rho = linalg::spectral_radius(&closed_loop(&model, &gain)?);
    let horizon = cfg.config.simulation.horizon;
    let start = AugmentedState::unstack(&x0, n, m, d)?;
    let traj = delaylqr::simulate(
        &plant,
        &start.x,
        &start.u_hist,
        InputSource::Feedback(&gain),
        horizon,
        None,
    )?;

    out_dir(out)?;
    let file = fs::File::create(out.join("closed_loop.csv")).map_err(delaylqr::Error::from)?;
    traj.write_csv(BufWriter::new(file))?;
    if !(rho < 1.0) {
        return Err(CliError::Guarantee(format!(
            "closed loop on the config plant has spectral radius {rho:.6}"
        )));
    }
    let cost = evaluate_cost(&model, &gain, &weights, &x0)?;
    let bound = res.gamma.map(|g| g * x0.norm_squared());
    let bound_holds = bound.map(|b| cost <= b * (1.0 + 1e-7) + 1e-300);
    write_json(
        &out.join("summary.json"),
        &SimulationSummary {
            cost,
            gamma: res.gamma,
            bound,
            bound_holds,
            spectral_radius: rho,
            horizon,
        },
    )?;
    match bound {
        Some(b) => println!("J = {cost:.6e}, γ‖X₀‖² = {b:.6e}, ρ = {rho:.6}"),
        None => println!("J = {cost:.6e}, ρ = {rho:.6}"),
    }
    if bound_holds == Some(false) {
        return Err(CliError::Guarantee(format!(
            "J = {cost:.6e} exceeds γ‖X₀‖² = {:.6e}",
            bound.unwrap_or_default()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepReport {
    points: Vec<SweepPoint>,
    /// Smallest and largest feasible grid values.
    feasible_range: Option<(f64, f64)>,
    /// γ non-decreasing over feasible points, within 1e-6 relative.
    monotone: bool,
    /// Bisection-refined feasible interval, when requested.
    interval: Option<(f64, f64)>,
    sigma_lower_bound: f64,
}

pub fn sweep(data: &Path, config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = Loaded::read(config)?;
    let data = read_data(data)?;
    let weights = cfg.weights_for(data.n(), data.m(), data.delay())?;
    let settings = cfg.lmi_settings();
    let grid = cfg.grid()?;
    let curve = sweep_sigma(&data, &weights, &grid, &settings, Execution::Parallel)?;
    let feasible: Vec<f64> = curve
        .points
        .iter()
        .filter(|p| p.status == SweepStatus::Feasible)
        .filter_map(|p| p.gamma)
        .collect();
    let monotone = feasible.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-6));
    let interval = match cfg.config.sweep.as_ref().and_then(|s| s.interval.as_ref()) {
        Some(iv) => feasible_sigma_interval(&data, &weights, iv.sigma_hi, iv.rel_tol, &settings)?,
        None => None,
    };

    out_dir(out)?;
    let mut wr = csv::Writer::from_path(out.join("sweep.csv")).map_err(delaylqr::Error::from)?;
    wr.write_record(["sigma", "status", "gamma"])
        .map_err(delaylqr::Error::from)?;
    for p in &curve.points {
        let status = serde_json::to_value(p.status).map_err(delaylqr::Error::from)?;
        let gamma = p.gamma.map(|g| g.to_string()).unwrap_or_default();
        wr.write_record([
            p.sigma.to_string(),
            status.as_str().unwrap_or_default().to_string(),
            gamma,
        ])
        .map_err(delaylqr::Error::from)?;
    }
    wr.flush().map_err(delaylqr::Error::from)?;
    let report = SweepReport {
        feasible_range: curve.feasible_range,
        points: curve.points,
        monotone,
        interval,
        sigma_lower_bound: sigma_lower_bound(&data),
    };
    write_json(&out.join("sweep.json"), &report)?;
    match report.feasible_range {
        Some((a, b)) => println!(
            "feasible on grid: [{a}, {b}], {} points, monotone: {monotone}",
            feasible.len()
        ),
        None => println!("no feasible grid point"),
    }
    if let Some((a, b)) = interval {
        println!("feasible interval: [{a:.6}, {b:.6}]");
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckReport {
    #[serde(flatten)]
    preflight: delaylqr::synthesis::Preflight,
    sigma_lower_bound: f64,
    /// Least-squares center split as `[A B]`, rows.
    center: Vec<Vec<f64>>,
    /// Whether the config plant lies in `Σ_D`, when one is given.
    plant_consistent: Option<bool>,
}

pub fn check(data: &Path, config: &Path, out: &Path, sigma: Option<f64>) -> Result<(), CliError> {
    let cfg = Loaded::read(config)?;
    let data = read_data(data)?;
    let phi = cfg.phi(sigma, data.n(), data.samples())?;
    let (psi, pre) = preflight(&data, &phi)?;
    let (a, b) = psi.center();
    let plant_consistent = match &cfg.config.plant {
        Some(_) => {
            let plant = cfg.plant()?;
            Some(is_consistent(plant.a(), plant.b(), &compute_psi(&data, &phi)?, None)?.consistent)
        }
        None => None,
    };
    let mut ab = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    ab.columns_mut(0, a.ncols()).copy_from(&a);
    ab.columns_mut(a.ncols(), b.ncols()).copy_from(&b);
    let report = CheckReport {
        center: delaylqr::matrix_serde::to_rows(&ab),
        sigma_lower_bound: sigma_lower_bound(&data),
        plant_consistent,
        preflight: pre,
    };
    out_dir(out)?;
    write_json(&out.join("check.json"), &report)?;
    let p = &report.preflight;
    println!(
        "rank {} (full row rank: {}), kernel condition: {}, Σ_D nonempty: {} (margin {:.3e}), σ lower bound {:.6}",
        p.regressor_rank, p.full_row_rank, p.kernel_condition, p.nonempty, p.emptiness_margin, report.sigma_lower_bound
    );
    if let Some(c) = plant_consistent {
        println!("config plant consistent with the data: {c}");
    }
    if !(p.kernel_condition && p.nonempty) {
        return Err(CliError::Core(delaylqr::Error::Infeasible(
            "data fail the preflight checks".into(),
        )));
    }
    Ok(())
}

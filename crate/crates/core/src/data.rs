//! Input/state data, the noise bound `Φ` and the set `Σ_D` of models
//! consistent with the data.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::matrix_serde;
use crate::par::Execution;
use crate::plant::{simulate, DelayPlant, InputSource, Trajectory};
use crate::random;
use crate::slemma::QuadraticSet;

/// Data matrices `X₊`, `X₋`, `U₋ᵈ` collected over `T` transitions starting
/// at `t₀`. `W₋` is kept when the noise realization is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DataSetRepr", into = "DataSetRepr")]
pub struct DataSet {
    x_plus: Mat,
    x_minus: Mat,
    u_minus_d: Mat,
    w_minus: Option<Mat>,
    delay: usize,
    t0: isize,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct DataSetRepr {
    n: usize,
    m: usize,
    T: usize,
    d: usize,
    t0: isize,
    #[serde(with = "matrix_serde")]
    X_plus: Mat,
    #[serde(with = "matrix_serde")]
    X_minus: Mat,
    #[serde(with = "matrix_serde")]
    U_minus_d: Mat,
    #[serde(
        with = "matrix_serde::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    W_minus: Option<Mat>,
}

impl TryFrom<DataSetRepr> for DataSet {
    type Error = Error;

    fn try_from(r: DataSetRepr) -> Result<Self> {
        let ds = DataSet::new(r.X_plus, r.X_minus, r.U_minus_d, r.W_minus, r.d, r.t0)?;
        if ds.n() != r.n || ds.m() != r.m || ds.samples() != r.T {
            return dim_err(format!(
                "declared (n, m, T) = ({}, {}, {}) but matrices give ({}, {}, {})",
                r.n,
                r.m,
                r.T,
                ds.n(),
                ds.m(),
                ds.samples()
            ));
        }
        Ok(ds)
    }
}

impl From<DataSet> for DataSetRepr {
    fn from(d: DataSet) -> Self {
        DataSetRepr {
            n: d.n(),
            m: d.m(),
            T: d.samples(),
            d: d.delay,
            t0: d.t0,
            X_plus: d.x_plus,
            X_minus: d.x_minus,
            U_minus_d: d.u_minus_d,
            W_minus: d.w_minus,
        }
    }
}

impl DataSet {
    pub fn new(
        x_plus: Mat,
        x_minus: Mat,
        u_minus_d: Mat,
        w_minus: Option<Mat>,
        delay: usize,
        t0: isize,
    ) -> Result<Self> {
        let (n, t) = x_minus.shape();
        if t == 0 || n == 0 {
            return Err(Error::Invalid("data needs n ≥ 1 and T ≥ 1".into()));
        }
        if delay == 0 {
            return Err(Error::Invalid("delay must be at least 1".into()));
        }
        if x_plus.shape() != (n, t) || u_minus_d.ncols() != t || u_minus_d.nrows() == 0 {
            return dim_err(format!(
                "X₊ {:?}, X₋ {:?}, U₋ᵈ {:?} do not share T columns",
                x_plus.shape(),
                x_minus.shape(),
                u_minus_d.shape()
            ));
        }
        if let Some(w) = &w_minus {
            if w.shape() != (n, t) {
                return dim_err(format!("W₋ is {:?}, expected {n}×{t}", w.shape()));
            }
        }
        let finite = [&x_plus, &x_minus, &u_minus_d]
            .iter()
            .all(|m| linalg::all_finite(m))
            && w_minus.as_ref().is_none_or(linalg::all_finite);
        if !finite {
            return Err(Error::Invalid("data contains non-finite entries".into()));
        }
        Ok(DataSet {
            x_plus,
            x_minus,
            u_minus_d,
            w_minus,
            delay,
            t0,
        })
    }

    pub fn n(&self) -> usize {
        self.x_minus.nrows()
    }

    pub fn m(&self) -> usize {
        self.u_minus_d.nrows()
    }

    /// Number of samples `T`.
    pub fn samples(&self) -> usize {
        self.x_minus.ncols()
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn t0(&self) -> isize {
        self.t0
    }

    pub fn x_plus(&self) -> &Mat {
        &self.x_plus
    }

    pub fn x_minus(&self) -> &Mat {
        &self.x_minus
    }

    pub fn u_minus_d(&self) -> &Mat {
        &self.u_minus_d
    }

    pub fn w_minus(&self) -> Option<&Mat> {
        self.w_minus.as_ref()
    }

    /// `[X₋; U₋ᵈ]`.
    pub fn regressor(&self) -> Mat {
        let (n, m, t) = (self.n(), self.m(), self.samples());
        let mut s = Mat::zeros(n + m, t);
        s.rows_mut(0, n).copy_from(&self.x_minus);
        s.rows_mut(n, m).copy_from(&self.u_minus_d);
        s
    }

    pub fn rank_report(&self) -> RankReport {
        let s = self.regressor();
        let rank = linalg::rank(&s, 1e-10);
        RankReport {
            rank,
            rows: s.nrows(),
            full_row_rank: rank == s.nrows(),
        }
    }

    /// Minimum-norm least-squares `[A B] = X₊ [X₋; U₋ᵈ]⁺`.
    pub fn least_squares_estimate(&self) -> (Mat, Mat) {
        let ab = &self.x_plus * linalg::pinv(&self.regressor(), 1e-12);
        split_ab(&ab, self.n())
    }

    /// `X₊ − A X₋ − B U₋ᵈ`.
    pub fn residual(&self, a: &Mat, b: &Mat) -> Result<Mat> {
        if a.shape() != (self.n(), self.n()) || b.shape() != (self.n(), self.m()) {
            return dim_err("model does not match data dimensions");
        }
        Ok(&self.x_plus - a * &self.x_minus - b * &self.u_minus_d)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Rank of `[X₋; U₋ᵈ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub rows: usize,
    pub full_row_rank: bool,
}

fn split_ab(ab: &Mat, n: usize) -> (Mat, Mat) {
    let a = ab.columns(0, n).into_owned();
    let b = ab.columns(n, ab.ncols() - n).into_owned();
    (a, b)
}

/// Forms the data set from `x_{t₀..t₀+T}` and `u_{t₀−d..t₀−d+T−1}`.
pub fn build_data(traj: &Trajectory, delay: usize, t0: usize, samples: usize) -> Result<DataSet> {
    if delay == 0 {
        return Err(Error::Invalid("delay must be at least 1".into()));
    }
    if samples == 0 {
        return Err(Error::Invalid("T must be at least 1".into()));
    }
    let n = traj.n();
    let m = traj.m();
    if t0 + samples > traj.horizon() {
        return dim_err(format!(
            "need states up to x_{} but the trajectory ends at x_{}",
            t0 + samples,
            traj.horizon()
        ));
    }
    let first_u = t0 as isize - delay as isize;
    if first_u < traj.input_start {
        return Err(Error::InsufficientHistory {
            needed: first_u,
            available: traj.input_start,
        });
    }
    let last_u = first_u + samples as isize - 1;
    if traj.input(last_u).is_none() {
        return dim_err(format!("trajectory has no input u_{last_u}"));
    }
    let x_minus = Mat::from_fn(n, samples, |i, k| traj.states[t0 + k][i]);
    let x_plus = Mat::from_fn(n, samples, |i, k| traj.states[t0 + k + 1][i]);
    let u = Mat::from_fn(m, samples, |i, k| {
        traj.input(first_u + k as isize).expect("checked range")[i]
    });
    let w = match &traj.noise {
        Some(noise) if noise.len() >= t0 + samples => {
            Some(Mat::from_fn(n, samples, |i, k| noise[t0 + k][i]))
        }
        _ => None,
    };
    DataSet::new(x_plus, x_minus, u, w, delay, t0 as isize)
}

/// Excitation signal used during data collection, defined for negative
/// times as well so it can supply the input history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSignal {
    /// `u_t = amplitude · sin(rate · t)` on every channel.
    Sinusoid { amplitude: f64, rate: f64 },
    /// `±amplitude` with independent fair signs per time and channel.
    Prbs { amplitude: f64, seed: u64 },
    /// Explicit samples; `values[k]` is `u_{start+k}`.
    Samples {
        #[serde(default)]
        start: isize,
        values: Vec<Vec<f64>>,
    },
}

impl InputSignal {
    /// `u_t` for `t = start, …, start + len − 1`.
    pub fn generate(&self, m: usize, start: isize, len: usize) -> Result<Vec<Vector>> {
        let times = (0..len as isize).map(|k| start + k);
        match self {
            InputSignal::Sinusoid { amplitude, rate } => Ok(times
                .map(|t| Vector::from_element(m, amplitude * (rate * t as f64).sin()))
                .collect()),
            InputSignal::Prbs { amplitude, seed } => {
                use rand::Rng;
                Ok(times
                    .map(|t| {
                        let mut rng = random::stream(*seed, (t as i64 as u64) ^ (1 << 63));
                        Vector::from_fn(m, |_, _| {
                            if rng.random::<bool>() {
                                *amplitude
                            } else {
                                -amplitude
                            }
                        })
                    })
                    .collect())
            }
            InputSignal::Samples {
                start: first,
                values,
            } => times
                .map(|t| {
                    let row = usize::try_from(t - first)
                        .ok()
                        .and_then(|k| values.get(k))
                        .ok_or_else(|| {
                            Error::Invalid(format!("input samples do not cover u_{t}"))
                        })?;
                    if row.len() == m {
                        Ok(Vector::from_column_slice(row))
                    } else {
                        dim_err(format!(
                            "input sample has {} entries, expected {m}",
                            row.len()
                        ))
                    }
                })
                .collect(),
        }
    }
}

/// Simulates an open-loop experiment and forms its data set.
///
/// Noise is zero-mean Gaussian with covariance `noise_cov`, drawn from a
/// stream keyed by `seed`. Data start at `t₀ = 0`, so the input history
/// supplies `u_{−d} … u_{−1}`; with `u_hist = None` it is taken from the
/// signal itself.
pub fn collect_data(
    plant: &DelayPlant,
    x0: &Vector,
    u_hist: Option<&[Vector]>,
    signal: &InputSignal,
    samples: usize,
    noise_cov: Option<&Mat>,
    seed: u64,
) -> Result<(Trajectory, DataSet)> {
    let inputs = signal.generate(plant.m(), 0, samples)?;
    let generated;
    let u_hist = match u_hist {
        Some(h) => h,
        None => {
            generated = signal.generate(plant.m(), -(plant.delay() as isize), plant.delay())?;
            &generated[..]
        }
    };
    let noise = match noise_cov {
        Some(cov) => {
            if cov.shape() != (plant.n(), plant.n()) {
                return dim_err(format!(
                    "noise covariance is {:?}, expected {}×{}",
                    cov.shape(),
                    plant.n(),
                    plant.n()
                ));
            }
            if linalg::min_eig(cov) < -1e-12 * (1.0 + linalg::max_abs(cov)) {
                return Err(Error::Invalid(
                    "noise covariance must be positive semidefinite".into(),
                ));
            }
            let root = linalg::psd_sqrt(cov);
            let mut rng = random::stream(seed, 0);
            Some(
                (0..samples)
                    .map(|_| random::correlated_gaussian(&mut rng, &root))
                    .collect::<Vec<_>>(),
            )
        }
        None => None,
    };
    let traj = simulate(
        plant,
        x0,
        u_hist,
        InputSource::OpenLoop(&inputs),
        samples,
        noise.as_deref(),
    )?;
    let data = build_data(&traj, plant.delay(), 0, samples)?;
    Ok((traj, data))
}

/// Blocks of the noise bound
/// `[I; W₋ᵀ]ᵀ [[Φ₁₁, Φ₁₂], [Φ₁₂ᵀ, Φ₂₂]] [I; W₋ᵀ] ⪰ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseRepr", into = "NoiseRepr")]
pub struct NoiseModel {
    phi11: Mat,
    phi12: Mat,
    phi22: Mat,
}

#[derive(Serialize, Deserialize)]
struct NoiseRepr {
    #[serde(with = "matrix_serde")]
    phi11: Mat,
    #[serde(with = "matrix_serde")]
    phi12: Mat,
    #[serde(with = "matrix_serde")]
    phi22: Mat,
}

impl TryFrom<NoiseRepr> for NoiseModel {
    type Error = Error;

    fn try_from(r: NoiseRepr) -> Result<Self> {
        NoiseModel::new(r.phi11, r.phi12, r.phi22)
    }
}

impl From<NoiseModel> for NoiseRepr {
    fn from(p: NoiseModel) -> Self {
        NoiseRepr {
            phi11: p.phi11,
            phi12: p.phi12,
            phi22: p.phi22,
        }
    }
}

impl NoiseModel {
    pub fn new(phi11: Mat, phi12: Mat, phi22: Mat) -> Result<Self> {
        let n = phi11.nrows();
        let t = phi22.nrows();
        if !phi11.is_square() || !phi22.is_square() || phi12.shape() != (n, t) {
            return dim_err(format!(
                "Φ blocks must be n×n, n×T, T×T; got {:?}, {:?}, {:?}",
                phi11.shape(),
                phi12.shape(),
                phi22.shape()
            ));
        }
        for (name, m) in [("Φ₁₁", &phi11), ("Φ₂₂", &phi22)] {
            if (m - m.transpose()).amax() > 1e-12 * (1.0 + linalg::max_abs(m)) {
                return Err(Error::Invalid(format!("{name} must be symmetric")));
            }
        }
        let tol = 1e-12 * (1.0 + linalg::max_abs(&phi22));
        if t == 0 || linalg::max_eig(&phi22) > -tol {
            return Err(Error::Invalid("Φ₂₂ must be negative definite".into()));
        }
        Ok(NoiseModel {
            phi11: linalg::symmetrize(&phi11),
            phi12,
            phi22: linalg::symmetrize(&phi22),
        })
    }

    pub fn phi11(&self) -> &Mat {
        &self.phi11
    }

    pub fn phi12(&self) -> &Mat {
        &self.phi12
    }

    pub fn phi22(&self) -> &Mat {
        &self.phi22
    }

    pub fn n(&self) -> usize {
        self.phi11.nrows()
    }

    pub fn samples(&self) -> usize {
        self.phi22.nrows()
    }

    pub fn full(&self) -> Mat {
        linalg::sym_blocks(
            &[self.n(), self.samples()],
            &[
                (0, 0, self.phi11.clone()),
                (0, 1, self.phi12.clone()),
                (1, 1, self.phi22.clone()),
            ],
        )
    }

    /// Whether a noise realization satisfies the bound, with the smallest
    /// eigenvalue of the form as margin.
    pub fn admits(&self, w: &Mat) -> Result<(bool, f64)> {
        if w.shape() != (self.n(), self.samples()) {
            return dim_err("noise realization does not match Φ");
        }
        let cross = &self.phi12 * w.transpose();
        let form = &self.phi11 + &cross + cross.transpose() + w * &self.phi22 * w.transpose();
        let margin = linalg::min_eig(&linalg::symmetrize(&form));
        Ok((
            margin >= -1e-8 * (1.0 + linalg::spectral_norm(&self.full())),
            margin,
        ))
    }
}

/// `Φ = diag(σ²T·I_n, −I_T)`.
pub fn make_sigma_phi(sigma: f64, n: usize, samples: usize) -> Result<NoiseModel> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Invalid(format!(
            "σ must be finite and nonnegative, got {sigma}"
        )));
    }
    NoiseModel::new(
        Mat::identity(n, n) * (sigma * sigma * samples as f64),
        Mat::zeros(n, samples),
        -Mat::identity(samples, samples),
    )
}

/// `Ψ = M Φ Mᵀ` with `M = [[I, X₊], [0, −X₋], [0, −U₋ᵈ]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiForm {
    n: usize,
    m: usize,
    #[serde(with = "matrix_serde")]
    psi: Mat,
}

impl PsiForm {
    /// Wraps an already assembled symmetric `(2n+m)`-square matrix.
    pub fn from_matrix(psi: Mat, n: usize, m: usize) -> Result<Self> {
        if psi.shape() != (2 * n + m, 2 * n + m) {
            return dim_err(format!(
                "Ψ is {:?}, expected {}×{}",
                psi.shape(),
                2 * n + m,
                2 * n + m
            ));
        }
        Ok(PsiForm {
            n,
            m,
            psi: linalg::symmetrize(&psi),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &Mat {
        &self.psi
    }

    pub fn psi11(&self) -> Mat {
        self.psi.view((0, 0), (self.n, self.n)).into_owned()
    }

    pub fn psi12(&self) -> Mat {
        self.psi
            .view((0, self.n), (self.n, self.n + self.m))
            .into_owned()
    }

    pub fn psi22(&self) -> Mat {
        let k = self.n + self.m;
        self.psi.view((self.n, self.n), (k, k)).into_owned()
    }

    /// `1e-8 · (1 + ‖Ψ‖₂)`.
    pub fn tolerance(&self) -> f64 {
        1e-8 * (1.0 + linalg::spectral_norm(&self.psi))
    }

    /// `Σ_D` as a quadratic set over `Z = [A B]ᵀ`:
    /// `N_a = Ψ₁₁`, `N_b = Ψ₁₂ᵀ`, `N_c = Ψ₂₂`.
    pub fn quadratic_set(&self) -> Result<QuadraticSet> {
        QuadraticSet::new(self.psi11(), self.psi12().transpose(), self.psi22())
    }

    /// The weighted estimate `−Ψ₂₂⁺ Ψ₁₂ᵀ` split into `(A, B)`. For
    /// `Φ₁₂ = 0`, `Φ₂₂ = −I` this is the least-squares estimate.
    pub fn center(&self) -> (Mat, Mat) {
        let z = -(linalg::pinv(&self.psi22(), 1e-12) * self.psi12().transpose());
        split_ab(&z.transpose(), self.n)
    }

    /// Smallest eigenvalue of `Ψ₁₁ − Ψ₁₂Ψ₂₂⁻¹Ψ₁₂ᵀ`; `Σ_D` is nonempty iff it
    /// is nonnegative (for `Ψ₂₂ ≺ 0`).
    pub fn emptiness_margin(&self) -> f64 {
        let (a, b) = self.center();
        consistency_margin(self, &a, &b)
    }
}

pub fn compute_psi(data: &DataSet, phi: &NoiseModel) -> Result<PsiForm> {
    let (n, m, t) = (data.n(), data.m(), data.samples());
    if phi.n() != n || phi.samples() != t {
        return dim_err(format!(
            "Φ is for (n, T) = ({}, {}), data has ({n}, {t})",
            phi.n(),
            phi.samples()
        ));
    }
    let mut mm = Mat::zeros(2 * n + m, n + t);
    mm.view_mut((0, 0), (n, n)).fill_with_identity();
    mm.view_mut((0, n), (n, t)).copy_from(data.x_plus());
    mm.view_mut((n, n), (n, t)).copy_from(&(-data.x_minus()));
    mm.view_mut((2 * n, n), (m, t))
        .copy_from(&(-data.u_minus_d()));
    PsiForm::from_matrix(&mm * phi.full() * mm.transpose(), n, m)
}

fn stacked_z(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let m = b.ncols();
    let mut z = Mat::zeros(n + m, n);
    z.rows_mut(0, n).copy_from(&a.transpose());
    z.rows_mut(n, m).copy_from(&b.transpose());
    z
}

fn consistency_margin(psi: &PsiForm, a: &Mat, b: &Mat) -> f64 {
    let z = stacked_z(a, b);
    let cross = psi.psi12() * &z;
    let form = psi.psi11() + &cross + cross.transpose() + z.transpose() * psi.psi22() * &z;
    linalg::min_eig(&linalg::symmetrize(&form))
}

/// Membership in `Σ_D` with the margin (smallest eigenvalue of the form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub consistent: bool,
    pub margin: f64,
}

/// Evaluates `[I; Z]ᵀ Ψ [I; Z] ⪰ −tol` for `Z = [A B]ᵀ`. Pass `None` for the
/// default tolerance `1e-8 · (1 + ‖Ψ‖)`.
pub fn is_consistent(a: &Mat, b: &Mat, psi: &PsiForm, tol: Option<f64>) -> Result<Consistency> {
    if a.shape() != (psi.n, psi.n) || b.shape() != (psi.n, psi.m) {
        return dim_err(format!(
            "(A, B) shapes {:?}, {:?} do not match Ψ for n = {}, m = {}",
            a.shape(),
            b.shape(),
            psi.n,
            psi.m
        ));
    }
    let margin = consistency_margin(psi, a, b);
    let tol = tol.unwrap_or_else(|| psi.tolerance());
    Ok(Consistency {
        consistent: margin >= -tol,
        margin,
    })
}

/// Members of `Σ_D`: the center, interior points and boundary points.
pub fn sample_consistent_models(
    psi: &PsiForm,
    count: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<(Mat, Mat)>> {
    let set = psi.quadratic_set()?;
    let zs = set.sample(count, seed, exec)?;
    Ok(zs.iter().map(|z| split_ab(&z.transpose(), psi.n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, v)
    }

    fn paper_plant() -> DelayPlant {
        DelayPlant::new(m(2, 2, &[1.3, 0.5, 0.0, 1.2]), m(2, 1, &[1.0, 1.0]), 4).unwrap()
    }

    fn paper_run(seed: u64) -> (Trajectory, DataSet) {
        let hist = vec![Vector::zeros(1); 4];
        collect_data(
            &paper_plant(),
            &Vector::zeros(2),
            Some(&hist),
            &InputSignal::Sinusoid {
                amplitude: 5.0,
                rate: 10.0,
            },
            10,
            Some(&(Mat::identity(2, 2) * 1e-2)),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn scalar_single_sample() {
        let traj = Trajectory {
            states: vec![Vector::from_element(1, 1.0), Vector::from_element(1, 2.0)],
            input_start: -1,
            inputs: vec![Vector::from_element(1, 3.0), Vector::from_element(1, 0.0)],
            noise: None,
        };
        let d = build_data(&traj, 1, 0, 1).unwrap();
        assert_eq!(d.x_minus(), &m(1, 1, &[1.0]));
        assert_eq!(d.x_plus(), &m(1, 1, &[2.0]));
        assert_eq!(d.u_minus_d(), &m(1, 1, &[3.0]));
    }

    #[test]
    fn short_history_is_reported() {
        let traj = Trajectory {
            states: vec![Vector::zeros(1); 3],
            input_start: -1,
            inputs: vec![Vector::zeros(1); 3],
            noise: None,
        };
        assert!(matches!(
            build_data(&traj, 2, 0, 2),
            Err(Error::InsufficientHistory {
                needed: -2,
                available: -1
            })
        ));
        assert!(build_data(&traj, 2, 1, 1).is_ok());
    }

    #[test]
    fn paper_run_shapes_and_identity() {
        let (traj, d) = paper_run(1);
        assert_eq!(traj.horizon(), 10);
        assert_eq!(d.x_plus().shape(), (2, 10));
        assert_eq!(d.u_minus_d().shape(), (1, 10));
        let plant = paper_plant();
        let w = d.w_minus().unwrap();
        let res = d.residual(plant.a(), plant.b()).unwrap() - w;
        assert!(res.amax() < 1e-12);
        // shifted overlap
        assert_eq!(d.x_plus().columns(0, 9), d.x_minus().columns(1, 9));
    }

    #[test]
    fn noiseless_data_fit_exactly() {
        let hist = vec![Vector::zeros(1); 4];
        let (_, d) = collect_data(
            &paper_plant(),
            &Vector::from_column_slice(&[1.0, -1.0]),
            Some(&hist),
            &InputSignal::Sinusoid {
                amplitude: 5.0,
                rate: 10.0,
            },
            10,
            None,
            0,
        )
        .unwrap();
        let p = paper_plant();
        assert!(d.residual(p.a(), p.b()).unwrap().amax() < 1e-12);
        assert!(d.w_minus().is_none());
    }

    #[test]
    fn sigma_phi_blocks() {
        let phi = make_sigma_phi(0.1, 2, 10).unwrap();
        assert!((phi.phi11() - Mat::identity(2, 2) * 0.1).amax() < 1e-15);
        assert_eq!(phi.phi22(), &(-Mat::identity(10, 10)));
        let zero = make_sigma_phi(0.0, 2, 10).unwrap();
        assert_eq!(zero.phi11(), &Mat::zeros(2, 2));
        assert!(make_sigma_phi(-1.0, 2, 10).is_err());
    }

    #[test]
    fn phi22_must_be_negative_definite() {
        assert!(NoiseModel::new(
            Mat::zeros(1, 1),
            Mat::zeros(1, 2),
            m(2, 2, &[-1.0, 0.0, 0.0, 0.0])
        )
        .is_err());
    }

    #[test]
    fn admitted_noise_matches_eigen_oracle() {
        let (_, d) = paper_run(3);
        let w = d.w_minus().unwrap();
        for sigma in [0.01, 0.05, 0.1, 0.2, 0.5] {
            let phi = make_sigma_phi(sigma, 2, 10).unwrap();
            let oracle = linalg::min_eig(
                &(Mat::identity(2, 2) * (sigma * sigma * 10.0) - w * w.transpose()),
            );
            let (ok, margin) = phi.admits(w).unwrap();
            assert!((margin - oracle).abs() < 1e-12);
            assert_eq!(
                ok,
                oracle >= -1e-8 * (1.0 + linalg::spectral_norm(&phi.full()))
            );
        }
    }

    #[test]
    fn psi_of_zero_data() {
        let d = DataSet::new(
            Mat::zeros(2, 3),
            Mat::zeros(2, 3),
            Mat::zeros(1, 3),
            None,
            1,
            0,
        )
        .unwrap();
        let phi = make_sigma_phi(1.0, 2, 3).unwrap();
        let psi = compute_psi(&d, &phi).unwrap();
        let mut expect = Mat::zeros(5, 5);
        expect.view_mut((0, 0), (2, 2)).copy_from(phi.phi11());
        assert_eq!(psi.matrix(), &expect);
    }

    #[test]
    fn psi_scalar_hand_product() {
        let one = m(1, 1, &[1.0]);
        let d = DataSet::new(one.clone(), one.clone(), one, None, 1, 0).unwrap();
        let phi = NoiseModel::new(m(1, 1, &[0.0]), m(1, 1, &[0.0]), m(1, 1, &[-1.0])).unwrap();
        let psi = compute_psi(&d, &phi).unwrap();
        let expect = m(3, 3, &[-1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        assert_eq!(psi.matrix(), &expect);
    }

    #[test]
    fn center_is_least_squares() {
        let (_, d) = paper_run(1);
        let psi = compute_psi(&d, &make_sigma_phi(0.1, 2, 10).unwrap()).unwrap();
        let (a, b) = psi.center();
        let (a_ls, b_ls) = d.least_squares_estimate();
        assert!((a - a_ls).amax() < 1e-9);
        assert!((b - b_ls).amax() < 1e-9);
    }

    #[test]
    fn noiseless_true_model_is_consistent() {
        let hist = vec![Vector::zeros(1); 4];
        let (_, d) = collect_data(
            &paper_plant(),
            &Vector::from_column_slice(&[1.0, -1.0]),
            Some(&hist),
            &InputSignal::Sinusoid {
                amplitude: 5.0,
                rate: 10.0,
            },
            10,
            None,
            0,
        )
        .unwrap();
        let psi = compute_psi(&d, &make_sigma_phi(0.1, 2, 10).unwrap()).unwrap();
        let p = paper_plant();
        let c = is_consistent(p.a(), p.b(), &psi, None).unwrap();
        assert!(c.consistent);
        assert!((c.margin - 0.1).abs() < 1e-9);
    }

    #[test]
    fn large_perturbation_is_inconsistent() {
        let (_, d) = paper_run(1);
        let psi = compute_psi(&d, &make_sigma_phi(0.1, 2, 10).unwrap()).unwrap();
        let p = paper_plant();
        let mut a = p.a().clone();
        a[(0, 1)] += 10.0;
        assert!(!is_consistent(&a, p.b(), &psi, None).unwrap().consistent);
    }

    #[test]
    fn noiseless_sigma_zero_is_singleton() {
        let hist = vec![Vector::zeros(1); 4];
        let (_, d) = collect_data(
            &paper_plant(),
            &Vector::from_column_slice(&[1.0, -1.0]),
            Some(&hist),
            &InputSignal::Sinusoid {
                amplitude: 5.0,
                rate: 10.0,
            },
            10,
            None,
            0,
        )
        .unwrap();
        assert!(d.rank_report().full_row_rank);
        let psi = compute_psi(&d, &make_sigma_phi(0.0, 2, 10).unwrap()).unwrap();
        let models = sample_consistent_models(&psi, 10, 5, Execution::Sequential).unwrap();
        assert_eq!(models.len(), 1);
        let p = paper_plant();
        assert!((&models[0].0 - p.a()).amax() < 1e-8);
        assert!((&models[0].1 - p.b()).amax() < 1e-8);
    }

    #[test]
    fn json_round_trip() {
        let (_, d) = paper_run(2);
        let s = d.to_json().unwrap();
        assert!(s.contains("\"X_plus\"") && s.contains("\"W_minus\""));
        let back = DataSet::from_json(&s).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn json_dimension_mismatch_rejected() {
        let s =
            r#"{"n":1,"m":1,"T":2,"d":1,"t0":0,"X_plus":[[1]],"X_minus":[[1]],"U_minus_d":[[1]]}"#;
        assert!(DataSet::from_json(s).is_err());
    }
}

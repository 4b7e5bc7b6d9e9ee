//! Input-delay plants, augmented-state lifting, simulation and LQ cost.
//!
//! A plant `x_{t+1} = A x_t + B u_{t-d}` is lifted to the delay-free system
//! `X_{t+1} = 𝒜 X_t + ℬ u_t` on the stacked state
//! `X_t = [x_t; u_{t-d}; …; u_{t-1}]` of dimension `n + m·d`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::matrix_serde;

/// Discrete-time plant with a known input delay of `delay` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantRepr", into = "PlantRepr")]
pub struct DelayPlant {
    a: Mat,
    b: Mat,
    delay: usize,
}

#[derive(Serialize, Deserialize)]
struct PlantRepr {
    #[serde(with = "matrix_serde")]
    a: Mat,
    #[serde(with = "matrix_serde")]
    b: Mat,
    d: usize,
}

impl TryFrom<PlantRepr> for DelayPlant {
    type Error = Error;
    fn try_from(r: PlantRepr) -> Result<Self> {
        DelayPlant::new(r.a, r.b, r.d)
    }
}

impl From<DelayPlant> for PlantRepr {
    fn from(p: DelayPlant) -> Self {
        PlantRepr {
            a: p.a,
            b: p.b,
            d: p.delay,
        }
    }
}

impl DelayPlant {
    pub fn new(a: Mat, b: Mat, delay: usize) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return dim_err(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            ));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return dim_err(format!(
                "B must be {}xm with m >= 1, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            ));
        }
        if delay == 0 {
            return Err(Error::Invalid("delay length must be at least 1".into()));
        }
        if !linalg::all_finite(&a) || !linalg::all_finite(&b) {
            return Err(Error::Invalid(
                "plant matrices contain non-finite entries".into(),
            ));
        }
        Ok(DelayPlant { a, b, delay })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Dimension `n + m·d` of the augmented state.
    pub fn augmented_dim(&self) -> usize {
        self.n() + self.m() * self.delay
    }

    pub fn lift(&self) -> AugmentedModel {
        lift_augmented(self)
    }
}

/// The delay-free pair `(𝒜, ℬ)` acting on the augmented state.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a: Mat,
    pub b: Mat,
    n: usize,
    m: usize,
    delay: usize,
}

impl AugmentedModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Builds `(𝒜, ℬ)`: `A` and `B` in the top block row, an identity shift chain
/// moving `u_{t-d+1} … u_{t-1}` up one slot, zero last block row of `𝒜`, and
/// `ℬ = [0; …; 0; I_m]`.
pub fn lift_augmented(plant: &DelayPlant) -> AugmentedModel {
    let (n, m, d) = (plant.n(), plant.m(), plant.delay());
    let dim = n + m * d;
    let mut a = Mat::zeros(dim, dim);
    a.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    a.view_mut((0, n), (n, m)).copy_from(&plant.b);
    for k in 0..d - 1 {
        let row = n + k * m;
        let col = n + (k + 1) * m;
        a.view_mut((row, col), (m, m)).fill_with_identity();
    }
    let mut b = Mat::zeros(dim, m);
    b.view_mut((dim - m, 0), (m, m)).fill_with_identity();
    AugmentedModel {
        a,
        b,
        n,
        m,
        delay: d,
    }
}

/// Stacked state `[x; u_{t-d}; …; u_{t-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: Vector,
    /// Oldest first: `u_{t-d}, …, u_{t-1}`.
    pub u_hist: Vec<Vector>,
}

impl AugmentedState {
    pub fn new(x: Vector, u_hist: Vec<Vector>) -> Result<Self> {
        if u_hist.is_empty() {
            return Err(Error::Invalid(
                "input history must hold at least one sample".into(),
            ));
        }
        let m = u_hist[0].len();
        if u_hist.iter().any(|u| u.len() != m) {
            return dim_err("input history samples have differing lengths");
        }
        Ok(AugmentedState { x, u_hist })
    }

    pub fn stack(&self) -> Vector {
        let m = self.u_hist.first().map_or(0, |u| u.len());
        let mut out = Vector::zeros(self.x.len() + m * self.u_hist.len());
        out.rows_mut(0, self.x.len()).copy_from(&self.x);
        for (k, u) in self.u_hist.iter().enumerate() {
            out.rows_mut(self.x.len() + k * m, m).copy_from(u);
        }
        out
    }

    pub fn unstack(stacked: &Vector, n: usize, m: usize, delay: usize) -> Result<Self> {
        if stacked.len() != n + m * delay {
            return dim_err(format!(
                "stacked state has length {}, expected {}",
                stacked.len(),
                n + m * delay
            ));
        }
        let x = stacked.rows(0, n).into_owned();
        let u_hist = (0..delay)
            .map(|k| stacked.rows(n + k * m, m).into_owned())
            .collect();
        Ok(AugmentedState { x, u_hist })
    }
}

/// LQ weights `Q_0` (state), `Q_1 … Q_d` (delayed inputs) and `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightsRepr", into = "WeightsRepr")]
pub struct CostWeights {
    q0: Mat,
    q_delay: Vec<Mat>,
    r: Mat,
}

#[derive(Serialize, Deserialize)]
struct WeightsRepr {
    #[serde(with = "matrix_serde")]
    q0: Mat,
    #[serde(with = "matrix_serde::vec")]
    q_delay: Vec<Mat>,
    #[serde(with = "matrix_serde")]
    r: Mat,
}

impl TryFrom<WeightsRepr> for CostWeights {
    type Error = Error;
    fn try_from(w: WeightsRepr) -> Result<Self> {
        CostWeights::new(w.q0, w.q_delay, w.r)
    }
}

impl From<CostWeights> for WeightsRepr {
    fn from(w: CostWeights) -> Self {
        WeightsRepr {
            q0: w.q0,
            q_delay: w.q_delay,
            r: w.r,
        }
    }
}

fn check_psd(name: &str, m: &Mat) -> Result<()> {
    if !m.is_square() {
        return dim_err(format!("{name} must be square"));
    }
    if !linalg::all_finite(m) {
        return Err(Error::Invalid(format!("{name} has non-finite entries")));
    }
    let tol = 1e-8 * (1.0 + linalg::max_abs(m));
    if (m - m.transpose()).amax() > tol {
        return Err(Error::Invalid(format!("{name} is not symmetric")));
    }
    let lmin = linalg::min_eig(m);
    if lmin < -tol {
        return Err(Error::Invalid(format!(
            "{name} is not positive semidefinite (min eigenvalue {lmin:.3e})"
        )));
    }
    Ok(())
}

impl CostWeights {
    pub fn new(q0: Mat, q_delay: Vec<Mat>, r: Mat) -> Result<Self> {
        check_psd("Q0", &q0)?;
        if q_delay.is_empty() {
            return Err(Error::Invalid(
                "need one delayed-input weight per delay step".into(),
            ));
        }
        for (i, q) in q_delay.iter().enumerate() {
            check_psd(&format!("Q{}", i + 1), q)?;
            if q.nrows() != r.nrows() {
                return dim_err(format!("Q{} must be {}x{}", i + 1, r.nrows(), r.nrows()));
            }
        }
        check_psd("R", &r)?;
        Ok(CostWeights { q0, q_delay, r })
    }

    /// Same scalar weight pattern as commonly used for tests:
    /// `Q_0 = q_state·I_n`, `Q_i = q_input·I_m`, `R = r·I_m`.
    pub fn uniform(
        n: usize,
        m: usize,
        delay: usize,
        q_state: f64,
        q_input: f64,
        r: f64,
    ) -> Result<Self> {
        CostWeights::new(
            Mat::identity(n, n) * q_state,
            vec![Mat::identity(m, m) * q_input; delay],
            Mat::identity(m, m) * r,
        )
    }

    pub fn q0(&self) -> &Mat {
        &self.q0
    }

    pub fn q_delay(&self) -> &[Mat] {
        &self.q_delay
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn n(&self) -> usize {
        self.q0.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn delay(&self) -> usize {
        self.q_delay.len()
    }

    /// `Q = block-diag(Q_0, Q_1, …, Q_d)`.
    pub fn q_matrix(&self) -> Mat {
        let mut blocks: Vec<&Mat> = vec![&self.q0];
        blocks.extend(self.q_delay.iter());
        linalg::block_diag(&blocks)
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> CostWeights {
        CostWeights {
            q0: &self.q0 * c,
            q_delay: self.q_delay.iter().map(|q| q * c).collect(),
            r: &self.r * c,
        }
    }

    /// Largest absolute entry over all blocks.
    pub fn magnitude(&self) -> f64 {
        self.q_delay.iter().map(linalg::max_abs).fold(
            linalg::max_abs(&self.q0).max(linalg::max_abs(&self.r)),
            f64::max,
        )
    }

    pub fn check_dims(&self, n: usize, m: usize, delay: usize) -> Result<()> {
        if self.n() != n || self.m() != m || self.delay() != delay {
            return dim_err(format!(
                "weights are for (n, m, d) = ({}, {}, {}), plant has ({n}, {m}, {delay})",
                self.n(),
                self.m(),
                self.delay()
            ));
        }
        Ok(())
    }
}

/// Augmented-state feedback gain `K = [K_0 K_1 … K_d]`, `u_t = K X_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    k: Mat,
    n: usize,
    delay: usize,
}

impl Gain {
    pub fn new(k: Mat, n: usize, delay: usize) -> Result<Self> {
        let m = k.nrows();
        if m == 0 || k.ncols() != n + m * delay {
            return dim_err(format!(
                "gain must be m x (n + m d) = {m} x {}, got {}x{}",
                n + m * delay,
                k.nrows(),
                k.ncols()
            ));
        }
        Ok(Gain { k, n, delay })
    }

    pub fn zeros(n: usize, m: usize, delay: usize) -> Self {
        Gain {
            k: Mat::zeros(m, n + m * delay),
            n,
            delay,
        }
    }

    pub fn matrix(&self) -> &Mat {
        &self.k
    }

    pub fn m(&self) -> usize {
        self.k.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// `K_0`, the m×n state block.
    pub fn state_block(&self) -> Mat {
        self.k.columns(0, self.n).into_owned()
    }

    /// `K_i` for `i` in `1..=d`, acting on `u_{t-d+i-1}`.
    pub fn delay_block(&self, i: usize) -> Mat {
        assert!(
            (1..=self.delay).contains(&i),
            "delay block index out of range"
        );
        let m = self.m();
        self.k.columns(self.n + (i - 1) * m, m).into_owned()
    }
}

/// `𝒜_cl = 𝒜 + ℬK`.
pub fn closed_loop(model: &AugmentedModel, gain: &Gain) -> Result<Mat> {
    if gain.matrix().nrows() != model.b.ncols() || gain.matrix().ncols() != model.dim() {
        return dim_err(format!(
            "gain is {}x{}, model needs {}x{}",
            gain.matrix().nrows(),
            gain.matrix().ncols(),
            model.b.ncols(),
            model.dim()
        ));
    }
    Ok(&model.a + &model.b * gain.matrix())
}

/// Where the applied inputs come from during simulation.
#[derive(Debug, Clone, Copy)]
pub enum InputSource<'a> {
    /// Inputs `u_0, u_1, …`; must cover the horizon.
    OpenLoop(&'a [Vector]),
    Feedback(&'a Gain),
}

/// A simulated or recorded input-state trajectory.
///
/// `states[k] = x_k` for `k = 0..=H`; `inputs[k] = u_{input_start + k}`, so a
/// trajectory started with `d` samples of history has `input_start = -d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub input_start: isize,
    pub inputs: Vec<Vector>,
    /// Process noise `w_0 … w_{H-1}` when known.
    pub noise: Option<Vec<Vector>>,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    pub fn m(&self) -> usize {
        self.inputs.first().map_or(0, |u| u.len())
    }

    /// Number of state transitions recorded.
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn input(&self, t: isize) -> Option<&Vector> {
        let k = t - self.input_start;
        if k < 0 {
            None
        } else {
            self.inputs.get(k as usize)
        }
    }

    pub fn state(&self, t: usize) -> Option<&Vector> {
        self.states.get(t)
    }

    /// Writes `t,x1..xn,u` rows (`u1..um` when m > 1). Rows before `t = 0`
    /// carry only the input history; the final row carries only `x_H`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        if m == 1 {
            header.push("u".into());
        } else {
            header.extend((1..=m).map(|i| format!("u{i}")));
        }
        wr.write_record(&header)?;
        let first = self.input_start.min(0);
        let last_input = self.input_start + self.inputs.len() as isize - 1;
        let last = (self.states.len() as isize - 1).max(last_input);
        for t in first..=last {
            let mut row = vec![t.to_string()];
            match (t >= 0).then(|| self.state(t as usize)).flatten() {
                Some(x) => row.extend(x.iter().map(|v| format_num(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), n)),
            }
            match self.input(t) {
                Some(u) => row.extend(u.iter().map(|v| format_num(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`Trajectory::write_csv`]. States must be
    /// present for a contiguous range starting at `t = 0`; inputs for a
    /// contiguous range of times.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let n = headers.iter().filter(|h| h.starts_with('x')).count();
        let m = headers.iter().filter(|h| h.starts_with('u')).count();
        if headers.get(0) != Some("t") || n == 0 || m == 0 || headers.len() != 1 + n + m {
            return Err(Error::Invalid(
                "trajectory CSV header must be t,x1..xn,u..".into(),
            ));
        }
        let mut states = Vec::new();
        let mut inputs: Vec<(isize, Vector)> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let t: isize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("bad time index {:?}", &rec[0])))?;
            let parse = |range: std::ops::Range<usize>| -> Result<Option<Vector>> {
                let cells: Vec<&str> = range.map(|i| rec[i].trim()).collect();
                if cells.iter().all(|c| c.is_empty()) {
                    return Ok(None);
                }
                let vals = cells
                    .iter()
                    .map(|c| {
                        c.parse::<f64>()
                            .map_err(|_| Error::Invalid(format!("bad number {c:?} at t={t}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(DVector::from_vec(vals)))
            };
            if let Some(x) = parse(1..1 + n)? {
                if t != states.len() as isize {
                    return Err(Error::Invalid(format!(
                        "state rows must be contiguous from t=0, found t={t}"
                    )));
                }
                states.push(x);
            }
            if let Some(u) = parse(1 + n..1 + n + m)? {
                if let Some((t_prev, _)) = inputs.last() {
                    if t != t_prev + 1 {
                        return Err(Error::Invalid(format!(
                            "input rows must be contiguous, gap before t={t}"
                        )));
                    }
                }
                inputs.push((t, u));
            }
        }
        let input_start = inputs.first().map_or(0, |(t, _)| *t);
        Ok(Trajectory {
            states,
            input_start,
            inputs: inputs.into_iter().map(|(_, u)| u).collect(),
            noise: None,
        })
    }
}

fn format_num(v: f64) -> String {
    // Shortest representation that round-trips exactly.
    format!("{v:?}")
}

/// Simulates `x_{t+1} = A x_t + B u_{t-d} + w_t` for `horizon` steps.
///
/// `u_hist` holds `u_{-d}, …, u_{-1}`. In feedback mode `u_t = K X_t` with
/// `X_t` assembled from `x_t` and the last `d` inputs.
pub fn simulate(
    plant: &DelayPlant,
    x0: &Vector,
    u_hist: &[Vector],
    input: InputSource<'_>,
    horizon: usize,
    noise: Option<&[Vector]>,
) -> Result<Trajectory> {
    let (n, m, d) = (plant.n(), plant.m(), plant.delay());
    if horizon == 0 {
        return Err(Error::Invalid("horizon must be at least 1".into()));
    }
    if x0.len() != n {
        return dim_err(format!("x0 has length {}, expected {n}", x0.len()));
    }
    if u_hist.len() != d || u_hist.iter().any(|u| u.len() != m) {
        return dim_err(format!("input history must hold {d} vectors of length {m}"));
    }
    if let Some(w) = noise {
        if w.len() != horizon || w.iter().any(|v| v.len() != n) {
            return dim_err(format!("noise must hold {horizon} vectors of length {n}"));
        }
    }
    match input {
        InputSource::OpenLoop(us) => {
            if us.len() < horizon || us.iter().any(|u| u.len() != m) {
                return dim_err(format!(
                    "open-loop input must cover {horizon} steps with length-{m} vectors"
                ));
            }
        }
        InputSource::Feedback(k) => {
            if k.m() != m || k.n() != n || k.delay() != d {
                return dim_err("gain dimensions do not match the plant");
            }
        }
    }

    let mut inputs: Vec<Vector> = u_hist.to_vec();
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0.clone());
    for t in 0..horizon {
        let x = &states[t];
        // inputs[k] holds u_{k-d}
        let u_now = match input {
            InputSource::OpenLoop(us) => us[t].clone(),
            InputSource::Feedback(k) => {
                let hist = &inputs[t..t + d];
                let stacked = AugmentedState {
                    x: x.clone(),
                    u_hist: hist.to_vec(),
                }
                .stack();
                k.matrix() * stacked
            }
        };
        let mut next = plant.a() * x + plant.b() * &inputs[t];
        if let Some(w) = noise {
            next += &w[t];
        }
        if !u_now.iter().all(|v| v.is_finite()) || !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: t });
        }
        inputs.push(u_now);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        input_start: -(d as isize),
        inputs,
        noise: noise.map(<[Vector]>::to_vec),
    })
}

/// Stage-cost matrix `Q + KᵀRK` of the closed loop.
pub fn stage_weight(gain: &Gain, weights: &CostWeights) -> Mat {
    weights.q_matrix() + gain.matrix().transpose() * weights.r() * gain.matrix()
}

/// Solves `𝒜_clᵀ G 𝒜_cl − G + W = 0` by vectorization.
pub fn solve_discrete_lyapunov(a_cl: &Mat, w: &Mat) -> Result<Mat> {
    let rho = linalg::spectral_radius(a_cl);
    if rho >= 1.0 {
        return Err(Error::CostDiverges { rho });
    }
    let dim = a_cl.nrows();
    let at = a_cl.transpose();
    let lhs = Mat::identity(dim * dim, dim * dim) - at.kronecker(&at);
    let rhs = DVector::from_column_slice(w.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("singular Lyapunov system".into()))?;
    Ok(linalg::symmetrize(&Mat::from_column_slice(
        dim,
        dim,
        sol.as_slice(),
    )))
}

/// Cost matrix `G` with `J(X_0) = X_0ᵀ G X_0` for the closed loop.
pub fn cost_matrix(model: &AugmentedModel, gain: &Gain, weights: &CostWeights) -> Result<Mat> {
    weights.check_dims(model.n(), model.m(), model.delay())?;
    let a_cl = closed_loop(model, gain)?;
    solve_discrete_lyapunov(&a_cl, &stage_weight(gain, weights))
}

/// Infinite-horizon LQ cost `J(X_0)` through the Lyapunov equation.
pub fn evaluate_cost(
    model: &AugmentedModel,
    gain: &Gain,
    weights: &CostWeights,
    x0: &Vector,
) -> Result<f64> {
    if x0.len() != model.dim() {
        return dim_err(format!(
            "X0 has length {}, expected {}",
            x0.len(),
            model.dim()
        ));
    }
    let g = cost_matrix(model, gain, weights)?;
    Ok(x0.dot(&(g * x0)).max(0.0))
}

/// Truncated-sum evaluation of the same cost, used to cross-check the
/// Lyapunov route.
///
/// Terms `X_tᵀ W X_t` are accumulated until a rigorous geometric tail bound
/// drops below `rel_tol` times the running sum. The bound uses the first
/// power `p` with `q = ‖𝒜_cl^p‖₂ < 1`:
/// `Σ_{k≥t} X_kᵀWX_k ≤ ‖W‖₂ · Σ_{j<p} ‖𝒜_cl^j‖₂² · ‖X_t‖² / (1 − q²)`.
pub fn evaluate_cost_truncated(
    model: &AugmentedModel,
    gain: &Gain,
    weights: &CostWeights,
    x0: &Vector,
    rel_tol: f64,
) -> Result<f64> {
    weights.check_dims(model.n(), model.m(), model.delay())?;
    if x0.len() != model.dim() {
        return dim_err(format!(
            "X0 has length {}, expected {}",
            x0.len(),
            model.dim()
        ));
    }
    let a_cl = closed_loop(model, gain)?;
    let rho = linalg::spectral_radius(&a_cl);
    if rho >= 1.0 {
        return Err(Error::CostDiverges { rho });
    }
    let w = stage_weight(gain, weights);
    let w_norm = linalg::spectral_norm(&w);

    const MAX_POWER: usize = 100_000;
    let mut power = Mat::identity(a_cl.nrows(), a_cl.ncols());
    let mut sum_sq = 0.0;
    let mut q = f64::INFINITY;
    for _ in 0..MAX_POWER {
        let s = linalg::spectral_norm(&power);
        sum_sq += s * s;
        power = &a_cl * power;
        q = linalg::spectral_norm(&power);
        if q < 1.0 {
            break;
        }
    }
    if q >= 1.0 {
        return Err(Error::Solver(
            "no contracting power of the closed loop found".into(),
        ));
    }
    let tail_factor = w_norm * sum_sq / (1.0 - q * q);

    const MAX_STEPS: usize = 50_000_000;
    let mut x = x0.clone();
    let mut total = 0.0;
    for _ in 0..MAX_STEPS {
        let tail = tail_factor * x.norm_squared();
        if tail <= rel_tol * total || tail <= f64::MIN_POSITIVE {
            return Ok(total);
        }
        total += x.dot(&(&w * &x));
        x = &a_cl * x;
    }
    Err(Error::Solver("truncated cost did not converge".into()))
}

#![allow(dead_code)]

use delaylqr::data::{collect_data, DataSet, InputSignal};
use delaylqr::slemma::{QmiPair, QuadraticSet};
use delaylqr::{CostWeights, DelayPlant, Mat, Vector};

pub fn m(r: usize, c: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(r, c, v)
}

pub fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

/// The two-state, four-step-delay example plant.
pub fn paper_plant() -> DelayPlant {
    DelayPlant::new(m(2, 2, &[1.3, 0.5, 0.0, 1.2]), m(2, 1, &[1.0, 1.0]), 4).unwrap()
}

pub fn paper_weights() -> CostWeights {
    CostWeights::uniform(2, 1, 4, 1e-4, 1e-4, 3e-4).unwrap()
}

/// `x_0 = [1, −1]` with `u_{-4..-1} = 1, −1, 1, −1`.
pub fn paper_x0() -> Vector {
    v(&[1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
}

pub fn paper_signal() -> InputSignal {
    InputSignal::Sinusoid {
        amplitude: 5.0,
        rate: 10.0,
    }
}

/// Ten samples under `u_t = 5 sin 10t` with noise covariance `1e-2·I`.
pub fn noisy_data(seed: u64) -> DataSet {
    let cov = Mat::identity(2, 2) * 1e-2;
    collect_data(
        &paper_plant(),
        &Vector::zeros(2),
        None,
        &paper_signal(),
        10,
        Some(&cov),
        seed,
    )
    .unwrap()
    .1
}

pub fn noiseless_data() -> DataSet {
    collect_data(
        &paper_plant(),
        &Vector::zeros(2),
        None,
        &paper_signal(),
        10,
        None,
        0,
    )
    .unwrap()
    .1
}

/// `sqrt(λmax(W₋W₋ᵀ)/T)`: the smallest σ whose bound admits the realized noise.
pub fn realized_sigma(data: &DataSet) -> f64 {
    let w = data.w_minus().expect("noise recorded");
    (delaylqr::linalg::max_eig(&(w * w.transpose())) / data.samples() as f64).sqrt()
}

/// Smallest positive solution of the discrete Riccati equation, by value
/// iteration.
pub fn dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Mat {
    let mut x = q.clone();
    for _ in 0..100_000 {
        let btx = b.transpose() * &x;
        let gain = (r + &btx * b).try_inverse().unwrap() * &btx * a;
        let next = q + a.transpose() * &x * a - a.transpose() * &x * b * &gain;
        let next = (&next + next.transpose()) * 0.5;
        if (&next - &x).amax() <= 1e-15 * (1.0 + next.amax()) {
            return next;
        }
        x = next;
    }
    x
}

/// Scalar robust-QMI instance: the interval `|z − c| ≤ r` (scaled by `k`)
/// and a 2×2 gap `[[p_a − q_a z², p_b − q_b z], [·, p_c − q_c]]`.
pub fn scalar_instance<R: rand::Rng>(rng: &mut R) -> (QuadraticSet, QmiPair) {
    let c = rng.random_range(-2.0..2.0);
    let r = rng.random_range(0.1..2.0);
    let k = rng.random_range(0.2..5.0);
    let set = QuadraticSet::new(
        m(1, 1, &[k * (r * r - c * c)]),
        m(1, 1, &[k * c]),
        m(1, 1, &[-k]),
    )
    .unwrap();
    let qa = rng.random_range(0.0..2.0);
    let pa = rng.random_range(-1.0..6.0);
    let pb = rng.random_range(-2.0..2.0);
    let qb = rng.random_range(-2.0..2.0);
    let pc = rng.random_range(0.1..3.0);
    let pair = QmiPair::new(
        m(1, 1, &[pa]),
        m(1, 1, &[pb]),
        m(1, 1, &[pc]),
        m(1, 1, &[qa]),
        m(1, 1, &[qb]),
        m(1, 1, &[0.0]),
    )
    .unwrap();
    (set, pair)
}

/// Smallest gap margin over a fine grid of the interval, endpoints included.
pub fn scalar_grid_margin(set: &QuadraticSet, pair: &QmiPair) -> f64 {
    let c = set.center()[(0, 0)];
    let r = (set.schur_complement()[(0, 0)] / -set.nc()[(0, 0)])
        .max(0.0)
        .sqrt();
    let steps = 20_000;
    (0..=steps)
        .map(|i| pair.margin(&m(1, 1, &[c - r + 2.0 * r * i as f64 / steps as f64])))
        .fold(f64::INFINITY, f64::min)
}

/// Matrix instance over 3×2 `Z` in a ball of radius `r` around a random
/// center, with `ℓ = 2`.
pub fn matrix_instance<R: rand::Rng>(rng: &mut R) -> (QuadraticSet, QmiPair) {
    use delaylqr::random::gaussian_matrix;
    let (n, mm, l) = (2, 3, 2);
    let zc = gaussian_matrix(rng, mm, n) * 0.5;
    let r = rng.random_range(0.2..1.0);
    let set = QuadraticSet::new(
        Mat::identity(n, n) * (r * r) - zc.transpose() * &zc,
        zc.clone(),
        -Mat::identity(mm, mm),
    )
    .unwrap();
    let g = gaussian_matrix(rng, mm, mm) * 0.5;
    let qa = &g * g.transpose();
    let qb = gaussian_matrix(rng, l, mm) * 0.5;
    let pb = gaussian_matrix(rng, l, n) * 0.5;
    let h = gaussian_matrix(rng, n, n);
    let pa = &h * h.transpose() * 0.5 + Mat::identity(n, n) * rng.random_range(0.0..6.0);
    let pc = Mat::identity(l, l) * rng.random_range(0.5..3.0);
    let pair = QmiPair::new(pa, pb, pc, qa, qb, Mat::zeros(l, l)).unwrap();
    (set, pair)
}

/// Data-driven design on the seed-6 data at the given σ.
pub fn dd_design(
    sigma: f64,
) -> (
    DataSet,
    delaylqr::data::NoiseModel,
    delaylqr::synthesis::SynthesisResult,
) {
    use delaylqr::synthesis::{solve_data_driven, GammaMode, LmiSettings};
    let data = noisy_data(6);
    let phi = delaylqr::data::make_sigma_phi(sigma, 2, 10).unwrap();
    let r = solve_data_driven(
        &data,
        &phi,
        &paper_weights(),
        GammaMode::Minimize,
        &LmiSettings::default(),
    )
    .unwrap();
    (data, phi, r)
}

/// Outcome of comparing the assembled LMI against its Schur-complement form.
pub struct SchurCase {
    pub lmi_margin: f64,
    pub lmi_scale: f64,
    pub oracle_psd: bool,
    pub sub_lmi_psd: bool,
}

/// `H = P − PQP − LᵀRL ≻ 0` and `top − V H⁻¹ Vᵀ ⪰ 0` with
/// `V = [0; P_a; P_b; L]`, built from the blocks of `P` directly.
pub fn schur_oracle(
    p: &delaylqr::synthesis::PPartition,
    l: &Mat,
    alpha: f64,
    eps: f64,
    eps_prime: f64,
    psi: &delaylqr::data::PsiForm,
    w: &CostWeights,
) -> bool {
    use delaylqr::linalg;
    let pm = p.matrix();
    let h = pm - pm * w.q_matrix() * pm - l.transpose() * w.r() * l;
    let h = linalg::symmetrize(&h);
    let Some(chol) = h.clone().cholesky() else {
        return false;
    };
    if linalg::min_eig(&h) <= 0.0 {
        return false;
    }
    let sizes = [2, 3, 3, 1];
    let top = linalg::sym_blocks(
        &sizes,
        &[
            (
                0,
                0,
                p.hat_a() - Mat::identity(2, 2) * eps - psi.psi11() * alpha,
            ),
            (0, 1, -(psi.psi12() * alpha)),
            (0, 2, p.hat_b0().transpose()),
            (0, 3, p.hat_b1().transpose()),
            (1, 1, -(psi.psi22() * alpha)),
            (2, 2, p.hat_c00() - Mat::identity(3, 3) * eps_prime),
            (2, 3, p.hat_c10().transpose()),
            (3, 3, p.hat_c11() - Mat::identity(1, 1) * eps_prime),
        ],
    );
    let mut v = Mat::zeros(9, 6);
    v.view_mut((2, 0), (3, 6)).copy_from(&p.p_a());
    v.view_mut((5, 0), (3, 6)).copy_from(&p.p_b());
    v.view_mut((8, 0), (1, 6)).copy_from(l);
    let schur = linalg::symmetrize(&(top - &v * chol.solve(&v.transpose())));
    linalg::min_eig(&schur) >= 0.0
}

/// Perturbations of a solved design of growing size, so that both verdicts
/// occur.
pub fn schur_cases(count: usize, seed: u64) -> Vec<SchurCase> {
    use delaylqr::data::compute_psi;
    use delaylqr::linalg;
    use delaylqr::random::{gaussian_matrix, stream};
    use delaylqr::synthesis::{assemble_dd_lmi, assemble_stabilization_lmi, PPartition};
    use rand::Rng;
    let (data, phi, r) = dd_design(0.12);
    let psi = compute_psi(&data, &phi).unwrap();
    let w = paper_weights();
    let mut rng = stream(seed, 0);
    (0..count)
        .map(|_| {
            let t = 10f64.powf(rng.random_range(-9.0..-1.0));
            let g = gaussian_matrix(&mut rng, 6, 6);
            let p = linalg::symmetrize(
                &(&r.p + (&g + g.transpose()) * (0.5 * t * linalg::max_abs(&r.p))),
            );
            let l = &r.l + gaussian_matrix(&mut rng, 1, 6) * (t * linalg::max_abs(&r.l));
            let bump = |x: f64, rng: &mut rand_chacha::ChaCha8Rng| {
                (x * (1.0 + t * rng.random_range(-1.0..1.0))).max(0.0)
            };
            let alpha = bump(r.alpha.unwrap(), &mut rng);
            // Shrinking ε, ε' moves the base point into the interior.
            let eps = 0.1 * r.eps.unwrap();
            let eps_prime = 0.1 * r.eps_prime.unwrap();
            let part = PPartition::new(p, 2, 1, 4).unwrap();
            let lmi = assemble_dd_lmi(&part, &l, alpha, eps, eps_prime, &psi, &w).unwrap();
            let sub =
                assemble_stabilization_lmi(&part, &l, alpha, eps, eps_prime, &psi, &w).unwrap();
            SchurCase {
                lmi_margin: linalg::min_eig(&lmi),
                lmi_scale: linalg::spectral_norm(&lmi),
                oracle_psd: schur_oracle(&part, &l, alpha, eps, eps_prime, &psi, &w),
                sub_lmi_psd: linalg::min_eig(&sub) >= 0.0,
            }
        })
        .collect()
}

/// Random stable `(model, gain, x0)` triples for the cost cross-check, with
/// the paper's dimensions.
pub fn stable_loops(
    count: usize,
    seed: u64,
) -> Vec<(delaylqr::AugmentedModel, delaylqr::Gain, Vector)> {
    use delaylqr::random::{gaussian_matrix, gaussian_vector, stream};
    use delaylqr::{closed_loop, linalg, Gain};
    let mut rng = stream(seed, 0);
    let mut out = Vec::new();
    while out.len() < count {
        let plant = DelayPlant::new(
            gaussian_matrix(&mut rng, 2, 2) * 0.5,
            gaussian_matrix(&mut rng, 2, 1),
            4,
        )
        .unwrap();
        let gain = Gain::new(gaussian_matrix(&mut rng, 1, 6) * 0.3, 2, 4).unwrap();
        let model = plant.lift();
        if linalg::spectral_radius(&closed_loop(&model, &gain).unwrap()) < 0.95 {
            out.push((model, gain, gaussian_vector(&mut rng, 6)));
        }
    }
    out
}

//! Gain synthesis: model-based LMIs, the data-driven sub-optimal LQR
//! program, the stabilization-only sub-LMI and the σ sweep.

use serde::{Deserialize, Serialize};

use crate::data::{
    compute_psi, make_sigma_phi, sample_consistent_models, DataSet, NoiseModel, PsiForm,
};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Mat};
use crate::matrix_serde;
use crate::par::{self, Execution};
use crate::plant::{closed_loop, cost_matrix, AugmentedModel, CostWeights, DelayPlant, Gain};
use crate::sdp::{
    Affine, BlockLmi, MatVar, Program, Scalar, SdpSettings, SdpSolution, SdpStatus, SymVar,
};

/// Tuning of the LMI programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmiSettings {
    /// Strictness floor: `P ⪰ δI` and `ε, ε' ≥ δ` in the equilibrated
    /// problem.
    pub delta: f64,
    pub sdp: SdpSettings,
    /// Consistent models drawn to validate each data-driven solution.
    pub validation_samples: usize,
    pub validation_seed: u64,
    /// Relative inflation `κ` of the weights in the final, margin-maximizing
    /// data-driven solve; a minimized `γ` is relaxed by `(1 + κ)²`.
    pub gamma_backoff: f64,
}

impl Default for LmiSettings {
    fn default() -> Self {
        LmiSettings {
            delta: 1e-7,
            sdp: SdpSettings::default(),
            validation_samples: 200,
            validation_seed: 0,
            gamma_backoff: 1e-3,
        }
    }
}

/// How `γ` enters the program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    Fixed(f64),
    Minimize,
}

/// Views of `P` used by the data-driven LMI.
///
/// With `N = n + md`, `P = [[P̂_a, P̂_bᵀ], [P̂_b, P̂_c]]` splits after row `n`
/// and `P = [P_a; P_b]` splits after row `n + m`. `P̂_b = [P̂_b0; P̂_b1]` and
/// `P̂_c = [[P̂_c00, P̂_c10ᵀ], [P̂_c10, P̂_c11]]` split after `m(d−1)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PPartition {
    p: Mat,
    n: usize,
    m: usize,
    delay: usize,
}

impl PPartition {
    pub fn new(p: Mat, n: usize, m: usize, delay: usize) -> Result<Self> {
        let dim = n + m * delay;
        if p.shape() != (dim, dim) || delay == 0 || m == 0 {
            return dim_err(format!("P is {:?}, expected {dim}×{dim}", p.shape()));
        }
        if (&p - p.transpose()).amax() > 1e-10 * (1.0 + linalg::max_abs(&p)) {
            return Err(Error::Invalid("P must be symmetric".into()));
        }
        Ok(PPartition {
            p: linalg::symmetrize(&p),
            n,
            m,
            delay,
        })
    }

    pub fn matrix(&self) -> &Mat {
        &self.p
    }

    fn dim(&self) -> usize {
        self.p.nrows()
    }

    fn md1(&self) -> usize {
        self.m * (self.delay - 1)
    }

    fn sub(&self, r: usize, c: usize, nr: usize, nc: usize) -> Mat {
        self.p.view((r, c), (nr, nc)).into_owned()
    }

    pub fn p_a(&self) -> Mat {
        self.sub(0, 0, self.n + self.m, self.dim())
    }

    pub fn p_b(&self) -> Mat {
        self.sub(self.n + self.m, 0, self.md1(), self.dim())
    }

    pub fn hat_a(&self) -> Mat {
        self.sub(0, 0, self.n, self.n)
    }

    pub fn hat_b(&self) -> Mat {
        self.sub(self.n, 0, self.m * self.delay, self.n)
    }

    pub fn hat_c(&self) -> Mat {
        let k = self.m * self.delay;
        self.sub(self.n, self.n, k, k)
    }

    pub fn hat_b0(&self) -> Mat {
        self.sub(self.n, 0, self.md1(), self.n)
    }

    pub fn hat_b1(&self) -> Mat {
        self.sub(self.dim() - self.m, 0, self.m, self.n)
    }

    pub fn hat_c00(&self) -> Mat {
        self.sub(self.n, self.n, self.md1(), self.md1())
    }

    pub fn hat_c10(&self) -> Mat {
        self.sub(self.dim() - self.m, self.n, self.m, self.md1())
    }

    pub fn hat_c11(&self) -> Mat {
        let k = self.dim() - self.m;
        self.sub(k, k, self.m, self.m)
    }

    /// Rebuilds `P` from the hatted blocks.
    pub fn reassemble(&self) -> Mat {
        let hat_b = {
            let mut b = Mat::zeros(self.m * self.delay, self.n);
            b.rows_mut(0, self.md1()).copy_from(&self.hat_b0());
            b.rows_mut(self.md1(), self.m).copy_from(&self.hat_b1());
            b
        };
        let hat_c = linalg::sym_blocks(
            &[self.md1(), self.m],
            &[
                (0, 0, self.hat_c00()),
                (0, 1, self.hat_c10().transpose()),
                (1, 1, self.hat_c11()),
            ],
        );
        linalg::sym_blocks(
            &[self.n, self.m * self.delay],
            &[
                (0, 0, self.hat_a()),
                (0, 1, hat_b.transpose()),
                (1, 1, hat_c),
            ],
        )
    }
}

/// Which program produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisKind {
    ModelBased,
    DataDriven,
    StabilizationOnly,
}

/// Post-solve checks, in the units of the original problem unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Smallest eigenvalue of the main LMI in the equilibrated problem.
    pub main_lmi_min_eig: f64,
    /// Smallest eigenvalue of `[[γI, I], [I, P]]` in the equilibrated problem.
    pub gamma_lmi_min_eig: Option<f64>,
    pub p_min_eig: f64,
    /// Largest eigenvalue of `P⁻¹`; `J(X_0) ≤ s_max ‖X_0‖²` on certified models.
    pub s_max_eig: f64,
    pub iterations: u32,
    pub solver_status: String,
    /// Spectral radius of the closed loop for the nominal model (the true
    /// model for model-based synthesis, the data center otherwise).
    pub nominal_spectral_radius: f64,
    /// Largest eigenvalue of `𝒜_clᵀS𝒜_cl − S + Q + KᵀRK` at the nominal model.
    pub nominal_lyapunov_max_eig: f64,
    /// Worst value of the same quantity over sampled consistent models.
    pub sampled_lyapunov_max_eig: Option<f64>,
    /// Largest eigenvalue of `𝒜_clᵀS𝒜_cl − S` over the nominal and the
    /// sampled models; negative means `V(x) = xᵀSx` decreases on all of them.
    pub stability_max_eig: f64,
    pub samples_checked: usize,
    /// The minimal `γ` before relaxation, when `γ` was minimized over the
    /// data-driven LMI.
    pub gamma_min: Option<f64>,
    pub regressor_rank: Option<usize>,
    /// Factor applied to the weights before solving.
    pub weight_scale: f64,
    /// Factor dividing `Ψ` before solving.
    pub psi_scale: f64,
}

/// A solved synthesis program with its extracted gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub kind: SynthesisKind,
    /// Absent for stabilization-only designs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "K", with = "matrix_serde")]
    pub k: Mat,
    #[serde(rename = "P", with = "matrix_serde")]
    pub p: Mat,
    #[serde(rename = "L", with = "matrix_serde")]
    pub l: Mat,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub eps_prime: Option<f64>,
    pub status: SdpStatus,
    pub diagnostics: Diagnostics,
    pub n: usize,
    pub m: usize,
    pub d: usize,
}

impl SynthesisResult {
    pub fn gain(&self) -> Gain {
        Gain::new(self.k.clone(), self.n, self.d).expect("shape fixed at construction")
    }

    pub fn partition(&self) -> PPartition {
        PPartition::new(self.p.clone(), self.n, self.m, self.d)
            .expect("shape fixed at construction")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: SynthesisResult = serde_json::from_str(s)?;
        let dim = r.n + r.m * r.d;
        if r.k.shape() != (r.m, dim) || r.p.shape() != (dim, dim) || r.l.shape() != (r.m, dim) {
            return dim_err("result matrices do not match (n, m, d)");
        }
        Ok(r)
    }
}

/// Largest eigenvalue of `𝒜_clᵀS𝒜_cl − S + Q + KᵀRK`.
pub fn lyapunov_max_eig(a_cl: &Mat, s: &Mat, k: &Mat, weights: &CostWeights) -> f64 {
    let m = a_cl.transpose() * s * a_cl - s + weights.q_matrix() + k.transpose() * weights.r() * k;
    linalg::max_eig(&linalg::symmetrize(&m))
}

/// Augmented model of `(A, B)` with delay `d`, no validation.
fn augmented(a: &Mat, b: &Mat, delay: usize) -> Result<AugmentedModel> {
    Ok(DelayPlant::new(a.clone(), b.clone(), delay)?.lift())
}

/// `(P, L, α, ε, ε', γ)` as program variables.
struct Vars {
    p: SymVar,
    l: MatVar,
    alpha: Scalar,
    eps: Scalar,
    eps_prime: Scalar,
    gamma: Scalar,
}

impl Vars {
    fn new(prog: &mut Program, dim: usize, m: usize) -> Self {
        Vars {
            p: prog.sym(dim),
            l: prog.mat(m, dim),
            alpha: prog.scalar(),
            eps: prog.scalar(),
            eps_prime: prog.scalar(),
            gamma: prog.scalar(),
        }
    }
}

struct Dims {
    n: usize,
    m: usize,
    d: usize,
}

impl Dims {
    fn dim(&self) -> usize {
        self.n + self.m * self.d
    }
}

fn weight_roots(weights: &CostWeights) -> (Mat, Mat) {
    (
        linalg::psd_sqrt(&weights.q_matrix()),
        linalg::psd_sqrt(weights.r()),
    )
}

/// How the data enter the data-driven LMI.
enum PsiTerms {
    /// `Ψ` as is, in the original block layout.
    Raw(Mat),
    /// The layout after the congruence `y = Z*x + W y'` on the second block
    /// row, with `Z*` the center of the consistency set, `S` its Schur
    /// complement and `W = (−Ψ₂₂)^{-1/2}`. Since the transformation is
    /// invertible the LMI is feasible at exactly the same points, but the
    /// blocks no longer carry the large `‖Ψ‖` that cancels across them.
    Centered { schur: Mat, zstar: Mat, w: Mat },
}

impl PsiTerms {
    fn centered(psi: &PsiForm) -> Result<Option<Self>> {
        let set = psi.quadratic_set()?;
        Ok(set.whitener().map(|w| PsiTerms::Centered {
            schur: set.schur_complement(),
            zstar: set.center(),
            w,
        }))
    }
}

/// The seven-block data-driven LMI; `stabilize_only` keeps the leading five.
fn dd_lmi(
    v: &Vars,
    dims: &Dims,
    terms: &PsiTerms,
    weights: &CostWeights,
    stabilize_only: bool,
) -> BlockLmi {
    let Dims { n, m, d } = *dims;
    let dim = dims.dim();
    let md1 = m * (d - 1);
    let p = v.p.expr();
    let l = v.l.expr();
    let (q_half, r_half) = weight_roots(weights);

    let mut lmi = BlockLmi::new(vec![n, n + m, md1, m, dim, m, dim]);
    let hat_a = p
        .block(0, 0, n, n)
        .sub(&Affine::scaled(v.eps, &Mat::identity(n, n)));
    let p_a = p.block(0, 0, n + m, dim);
    match terms {
        PsiTerms::Raw(psi) => {
            let (psi11, psi12, psi22) = (
                psi.view((0, 0), (n, n)),
                psi.view((0, n), (n, n + m)),
                psi.view((n, n), (n + m, n + m)),
            );
            lmi.set(
                0,
                0,
                hat_a.sub(&Affine::scaled(v.alpha, &psi11.into_owned())),
            );
            lmi.set(0, 1, Affine::scaled(v.alpha, &psi12.into_owned()).neg());
            lmi.set(1, 1, Affine::scaled(v.alpha, &psi22.into_owned()).neg());
            lmi.set(1, 4, p_a);
        }
        PsiTerms::Centered { schur, zstar, w } => {
            lmi.set(0, 0, hat_a.sub(&Affine::scaled(v.alpha, schur)));
            lmi.set(1, 1, Affine::scaled(v.alpha, &Mat::identity(n + m, n + m)));
            lmi.set(0, 4, p_a.left_mul(&zstar.transpose()));
            lmi.set(1, 4, p_a.left_mul(w));
        }
    }
    lmi.set(0, 2, p.block(0, n, n, md1));
    lmi.set(0, 3, p.block(0, dim - m, n, m));
    lmi.set(
        2,
        2,
        p.block(n, n, md1, md1)
            .sub(&Affine::scaled(v.eps_prime, &Mat::identity(md1, md1))),
    );
    lmi.set(2, 3, p.block(n, dim - m, md1, m));
    lmi.set(2, 4, p.block(n + m, 0, md1, dim));
    lmi.set(
        3,
        3,
        p.block(dim - m, dim - m, m, m)
            .sub(&Affine::scaled(v.eps_prime, &Mat::identity(m, m))),
    );
    lmi.set(3, 4, l.clone());
    lmi.set(4, 4, p.clone());
    lmi.set(4, 5, l.transpose().right_mul(&r_half));
    lmi.set(4, 6, p.right_mul(&q_half));
    lmi.set(5, 5, Affine::identity(m));
    lmi.set(6, 6, Affine::identity(dim));
    if stabilize_only {
        lmi.leading(5)
    } else {
        lmi
    }
}

/// The four-block model-based LMI.
fn model_lmi(v: &Vars, model: &AugmentedModel, weights: &CostWeights) -> BlockLmi {
    let dim = model.dim();
    let m = model.m();
    let p = v.p.expr();
    let l = v.l.expr();
    let (q_half, r_half) = weight_roots(weights);
    let mut lmi = BlockLmi::new(vec![dim, dim, dim, m]);
    lmi.set(0, 0, p.clone());
    lmi.set(0, 1, p.left_mul(&model.a).add(&l.left_mul(&model.b)));
    lmi.set(1, 1, p.clone());
    lmi.set(1, 2, p.right_mul(&q_half));
    lmi.set(1, 3, l.transpose().right_mul(&r_half));
    lmi.set(2, 2, Affine::identity(dim));
    lmi.set(3, 3, Affine::identity(m));
    lmi
}

fn gamma_lmi(v: &Vars, dim: usize, gamma: GammaMode) -> Affine {
    let mut lmi = BlockLmi::new(vec![dim, dim]);
    let top = match gamma {
        GammaMode::Fixed(g) => Affine::constant(&(Mat::identity(dim, dim) * g)),
        GammaMode::Minimize => Affine::scaled(v.gamma, &Mat::identity(dim, dim)),
    };
    lmi.set(0, 0, top);
    lmi.set(0, 1, Affine::identity(dim));
    lmi.set(1, 1, v.p.expr());
    lmi.build()
}

struct Values {
    p: Mat,
    l: Mat,
    alpha: f64,
    eps: f64,
    eps_prime: f64,
    gamma: f64,
}

fn pack(prog: &Program, v: &Vars, vals: &Values) -> Vec<f64> {
    let mut x = vec![0.0; prog.n_vars()];
    v.p.pack(&vals.p, &mut x);
    v.l.pack(&vals.l, &mut x);
    x[v.alpha.0] = vals.alpha;
    x[v.eps.0] = vals.eps;
    x[v.eps_prime.0] = vals.eps_prime;
    x[v.gamma.0] = vals.gamma;
    x
}

fn check_psi_dims(psi: &PsiForm, weights: &CostWeights, p: &PPartition) -> Result<Dims> {
    let dims = Dims {
        n: p.n,
        m: p.m,
        d: p.delay,
    };
    if psi.n() != dims.n || psi.m() != dims.m {
        return dim_err(format!(
            "Ψ is for (n, m) = ({}, {}), P for ({}, {})",
            psi.n(),
            psi.m(),
            dims.n,
            dims.m
        ));
    }
    weights.check_dims(dims.n, dims.m, dims.d)?;
    Ok(dims)
}

/// The numeric seven-block data-driven LMI at the given variable values.
pub fn assemble_dd_lmi(
    p: &PPartition,
    l: &Mat,
    alpha: f64,
    eps: f64,
    eps_prime: f64,
    psi: &PsiForm,
    weights: &CostWeights,
) -> Result<Mat> {
    assemble_dd(p, l, alpha, eps, eps_prime, psi, weights, false)
}

/// The leading five blocks of [`assemble_dd_lmi`].
pub fn assemble_stabilization_lmi(
    p: &PPartition,
    l: &Mat,
    alpha: f64,
    eps: f64,
    eps_prime: f64,
    psi: &PsiForm,
    weights: &CostWeights,
) -> Result<Mat> {
    assemble_dd(p, l, alpha, eps, eps_prime, psi, weights, true)
}

#[allow(clippy::too_many_arguments)]
fn assemble_dd(
    p: &PPartition,
    l: &Mat,
    alpha: f64,
    eps: f64,
    eps_prime: f64,
    psi: &PsiForm,
    weights: &CostWeights,
    stabilize_only: bool,
) -> Result<Mat> {
    let dims = check_psi_dims(psi, weights, p)?;
    if l.shape() != (dims.m, dims.dim()) {
        return dim_err(format!(
            "L is {:?}, expected {}×{}",
            l.shape(),
            dims.m,
            dims.dim()
        ));
    }
    let mut prog = Program::new();
    let v = Vars::new(&mut prog, dims.dim(), dims.m);
    let lmi = dd_lmi(
        &v,
        &dims,
        &PsiTerms::Raw(psi.matrix().clone()),
        weights,
        stabilize_only,
    )
    .build();
    let x = pack(
        &prog,
        &v,
        &Values {
            p: p.matrix().clone(),
            l: l.clone(),
            alpha,
            eps,
            eps_prime,
            gamma: 0.0,
        },
    );
    Ok(linalg::symmetrize(&lmi.eval(&x)))
}

/// The model-based LMI pair at the given `(P, L, γ)`.
pub fn assemble_model_lmis(
    model: &AugmentedModel,
    weights: &CostWeights,
    gamma: f64,
    p: &Mat,
    l: &Mat,
) -> Result<(Mat, Mat)> {
    let dim = model.dim();
    weights.check_dims(model.n(), model.m(), model.delay())?;
    if p.shape() != (dim, dim) || l.shape() != (model.m(), dim) {
        return dim_err(format!(
            "P {:?} and L {:?} do not match N = {dim}",
            p.shape(),
            l.shape()
        ));
    }
    let mut prog = Program::new();
    let v = Vars::new(&mut prog, dim, model.m());
    let main = model_lmi(&v, model, weights).build();
    let gam = gamma_lmi(&v, dim, GammaMode::Fixed(gamma));
    let x = pack(
        &prog,
        &v,
        &Values {
            p: p.clone(),
            l: l.clone(),
            alpha: 0.0,
            eps: 0.0,
            eps_prime: 0.0,
            gamma,
        },
    );
    Ok((
        linalg::symmetrize(&main.eval(&x)),
        linalg::symmetrize(&gam.eval(&x)),
    ))
}

/// `K = L P⁻¹`.
pub fn extract_gain(p: &Mat, l: &Mat) -> Result<Mat> {
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("P is not positive definite".into()))?;
    Ok(chol.solve(&l.transpose()).transpose())
}

fn weight_scale(weights: &CostWeights) -> f64 {
    let mag = weights.magnitude();
    if mag > 0.0 {
        1.0 / mag
    } else {
        1.0
    }
}

fn status_error(sol: &SdpSolution, what: &str) -> Error {
    match sol.status {
        SdpStatus::Infeasible => {
            Error::Infeasible(format!("{what}: solver reports primal infeasibility"))
        }
        _ => Error::Solver(format!(
            "{what}: solver ended with status {}",
            sol.raw_status
        )),
    }
}

/// An eigenvalue `λ` of `A` with `|λ| ≥ 1` and `rank [A − λI, B] < n`, if any.
pub fn unstabilizable_mode(plant: &DelayPlant) -> Option<nalgebra::Complex<f64>> {
    use nalgebra::{Complex, DMatrix};
    let n = plant.n();
    let to_c =
        |m: &Mat| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| Complex::new(m[(i, j)], 0.0));
    let a = to_c(plant.a());
    let b = to_c(plant.b());
    let scale = 1.0 + linalg::max_abs(plant.a()).max(linalg::max_abs(plant.b()));
    plant
        .a()
        .complex_eigenvalues()
        .iter()
        .copied()
        .find(|&lambda| {
            if lambda.norm() < 1.0 {
                return false;
            }
            let mut pbh = DMatrix::<Complex<f64>>::zeros(n, n + plant.m());
            pbh.columns_mut(0, n)
                .copy_from(&(&a - DMatrix::identity(n, n) * lambda));
            pbh.columns_mut(n, plant.m()).copy_from(&b);
            let sv = pbh.svd(false, false).singular_values;
            sv.iter().filter(|&&s| s > 1e-9 * scale).count() < n
        })
}

/// Theorem-1 synthesis for a known plant.
pub fn solve_model_based(
    plant: &DelayPlant,
    weights: &CostWeights,
    gamma: GammaMode,
    settings: &LmiSettings,
) -> Result<SynthesisResult> {
    let model = plant.lift();
    weights.check_dims(plant.n(), plant.m(), plant.delay())?;
    if let GammaMode::Fixed(g) = gamma {
        if !(g > 0.0) {
            return Err(Error::Invalid(format!("γ must be positive, got {g}")));
        }
    }
    if let Some(lambda) = unstabilizable_mode(plant) {
        return Err(Error::Infeasible(format!(
            "(A, B) is not stabilizable: mode {lambda:.6} fails the PBH rank test"
        )));
    }
    let dim = model.dim();
    let c = weight_scale(weights);
    let scaled = weights.scaled(c);
    let scaled_gamma = match gamma {
        GammaMode::Fixed(g) => GammaMode::Fixed(g * c),
        GammaMode::Minimize => GammaMode::Minimize,
    };
    let delta = settings.delta;

    let mut prog = Program::new();
    let v = Vars::new(&mut prog, dim, model.m());
    prog.psd(model_lmi(&v, &model, &scaled).build());
    prog.psd(gamma_lmi(&v, dim, scaled_gamma));
    prog.psd(
        v.p.expr()
            .sub(&Affine::constant(&(Mat::identity(dim, dim) * delta))),
    );
    if scaled_gamma == GammaMode::Minimize {
        prog.minimize(v.gamma, 1.0);
    }
    let sol = prog.solve(&settings.sdp)?;
    if !sol.is_solved() {
        return Err(status_error(&sol, "model-based synthesis"));
    }

    let p_s = v.p.value(&sol.x);
    let l_s = v.l.value(&sol.x);
    let gamma_s = match scaled_gamma {
        GammaMode::Fixed(g) => g,
        GammaMode::Minimize => sol.x[v.gamma.0],
    };
    let vals = Values {
        p: p_s.clone(),
        l: l_s.clone(),
        alpha: 0.0,
        eps: 0.0,
        eps_prime: 0.0,
        gamma: gamma_s,
    };
    let x = pack(&prog, &v, &vals);
    let main_min = linalg::min_eig(&linalg::symmetrize(
        &model_lmi(&v, &model, &scaled).build().eval(&x),
    ));
    let gam_min = linalg::min_eig(&linalg::symmetrize(
        &gamma_lmi(&v, dim, scaled_gamma).eval(&x),
    ));

    let p = &p_s * c;
    let l = &l_s * c;
    let k = extract_gain(&p, &l)?;
    let gain = Gain::new(k.clone(), plant.n(), plant.delay())?;
    let a_cl = closed_loop(&model, &gain)?;
    let s = p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Solver("P is singular".into()))?;
    let s = linalg::symmetrize(&s);
    let rho = linalg::spectral_radius(&a_cl);
    let gamma_val = gamma_s / c;
    let diagnostics = Diagnostics {
        main_lmi_min_eig: main_min,
        gamma_lmi_min_eig: Some(gam_min),
        p_min_eig: linalg::min_eig(&p),
        s_max_eig: linalg::max_eig(&s),
        iterations: sol.iterations,
        solver_status: sol.raw_status.clone(),
        nominal_spectral_radius: rho,
        nominal_lyapunov_max_eig: lyapunov_max_eig(&a_cl, &s, &k, weights),
        sampled_lyapunov_max_eig: None,
        stability_max_eig: lyapunov_max_eig(&a_cl, &s, &k, &weights.scaled(0.0)),
        samples_checked: 0,
        gamma_min: None,
        regressor_rank: None,
        weight_scale: c,
        psi_scale: 1.0,
    };
    if !(rho < 1.0) {
        return Err(Error::Solver(format!(
            "extracted gain does not stabilize the plant (ρ = {rho:.6})"
        )));
    }
    let g = cost_matrix(&model, &gain, weights)?;
    let worst = linalg::max_eig(&g);
    if worst > gamma_val * (1.0 + 1e-6) + 1e-12 {
        return Err(Error::Solver(format!(
            "cost bound violated: λ_max(G) = {worst:.6e} > γ = {gamma_val:.6e}"
        )));
    }
    Ok(SynthesisResult {
        kind: SynthesisKind::ModelBased,
        gamma: Some(gamma_val),
        k,
        p,
        l,
        alpha: None,
        eps: None,
        eps_prime: None,
        status: sol.status,
        diagnostics,
        n: plant.n(),
        m: plant.m(),
        d: plant.delay(),
    })
}

/// Checks the S-lemma regularity conditions on `Ψ` and the data rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preflight {
    pub regressor_rank: usize,
    pub full_row_rank: bool,
    pub psi22_max_eig: f64,
    pub kernel_condition: bool,
    pub emptiness_margin: f64,
    pub nonempty: bool,
}

pub fn preflight(data: &DataSet, phi: &NoiseModel) -> Result<(PsiForm, Preflight)> {
    let psi = compute_psi(data, phi)?;
    let rank = data.rank_report();
    let kernel_condition = psi.quadratic_set().is_ok();
    let margin = psi.emptiness_margin();
    let report = Preflight {
        regressor_rank: rank.rank,
        full_row_rank: rank.full_row_rank,
        psi22_max_eig: linalg::max_eig(&psi.psi22()),
        kernel_condition,
        emptiness_margin: margin,
        nonempty: margin >= -psi.tolerance(),
    };
    Ok((psi, report))
}

#[derive(Clone, Copy, PartialEq)]
enum DdMode {
    Performance(GammaMode),
    Stabilize,
}

#[derive(Debug, Clone, Copy)]
enum DdObjective {
    MinGamma,
    /// Largest common `ε = ε'`, at a fixed scaled `γ` or, without one, for
    /// the stabilization-only sub-LMI.
    MaxMargin(Option<f64>),
}

/// Data-driven sub-optimal LQR synthesis (program (CP) when minimizing).
pub fn solve_data_driven(
    data: &DataSet,
    phi: &NoiseModel,
    weights: &CostWeights,
    gamma: GammaMode,
    settings: &LmiSettings,
) -> Result<SynthesisResult> {
    if let GammaMode::Fixed(g) = gamma {
        if !(g > 0.0) {
            return Err(Error::Invalid(format!("γ must be positive, got {g}")));
        }
    }
    solve_dd(
        data,
        phi,
        weights,
        DdMode::Performance(gamma),
        settings,
        Execution::Sequential,
    )
}

/// Feasibility of the leading five-block sub-LMI (robust stabilization).
///
/// The sub-LMI is homogeneous in `(P, L, α, ε, ε')`, so the program
/// normalizes `P ⪯ I` and returns the point maximizing the common margin
/// `ε = ε'` with `P ⪰ εI`.
pub fn solve_stabilization_only(
    data: &DataSet,
    phi: &NoiseModel,
    weights: &CostWeights,
    settings: &LmiSettings,
) -> Result<SynthesisResult> {
    solve_dd(
        data,
        phi,
        weights,
        DdMode::Stabilize,
        settings,
        Execution::Sequential,
    )
}

/// Equilibration for the data-driven programs: the weights are scaled so
/// that the optimal `γ` is of order one, using the model-based optimum at
/// the center of the consistency set as the estimate. The solver is markedly
/// more reliable in these units than with the weights normalized alone.
fn center_gamma_scale(
    psi: &PsiForm,
    dims: &Dims,
    weights: &CostWeights,
    settings: &LmiSettings,
) -> f64 {
    let (a, b) = psi.center();
    DelayPlant::new(a, b, dims.d)
        .and_then(|plant| solve_model_based(&plant, weights, GammaMode::Minimize, settings))
        .ok()
        .and_then(|r| r.gamma)
        .filter(|g| g.is_finite() && *g > 0.0)
        .map_or(1.0, |g| 1.0 / g)
}

fn solve_dd(
    data: &DataSet,
    phi: &NoiseModel,
    weights: &CostWeights,
    mode: DdMode,
    settings: &LmiSettings,
    exec: Execution,
) -> Result<SynthesisResult> {
    let dims = Dims {
        n: data.n(),
        m: data.m(),
        d: data.delay(),
    };
    weights.check_dims(dims.n, dims.m, dims.d)?;
    let (psi, pre) = preflight(data, phi)?;
    if !pre.kernel_condition {
        return Err(Error::Infeasible(format!(
            "S-lemma regularity fails: Ψ₂₂ max eigenvalue {:.3e}, kernel condition violated (regressor rank {} of {})",
            pre.psi22_max_eig,
            pre.regressor_rank,
            dims.n + dims.m
        )));
    }
    if !pre.nonempty {
        return Err(Error::Infeasible(format!(
            "no model is consistent with the data under Φ (margin {:.3e})",
            pre.emptiness_margin
        )));
    }

    let dim = dims.dim();
    let s_psi = {
        let norm = linalg::spectral_norm(psi.matrix());
        if norm > 0.0 {
            norm
        } else {
            1.0
        }
    };
    let psi_n = PsiForm::from_matrix(psi.matrix() / s_psi, dims.n, dims.m)?;
    let delta = settings.delta * 2.0;

    let stabilize = mode == DdMode::Stabilize;
    let what = if stabilize {
        "stabilization-only synthesis"
    } else {
        "data-driven synthesis"
    };
    let terms = match PsiTerms::centered(&psi)? {
        Some(t) => t,
        None => PsiTerms::Raw(psi_n.matrix().clone()),
    };
    let centered = matches!(terms, PsiTerms::Centered { .. });
    let solve_phase =
        |objective: DdObjective, w: &CostWeights| -> Result<(Program, Vars, Affine, SdpSolution)> {
            let mut prog = Program::new();
            let v = Vars::new(&mut prog, dim, dims.m);
            let main = dd_lmi(&v, &dims, &terms, w, stabilize).build();
            prog.psd(main.clone());
            prog.nonneg(&[(v.alpha, 1.0)], 0.0);
            match objective {
                DdObjective::MinGamma => {
                    prog.psd(gamma_lmi(&v, dim, GammaMode::Minimize));
                    prog.psd(
                        v.p.expr()
                            .sub(&Affine::constant(&(Mat::identity(dim, dim) * delta))),
                    );
                    prog.nonneg(&[(v.eps, 1.0)], -delta);
                    prog.nonneg(&[(v.eps_prime, 1.0)], -delta);
                    prog.minimize(v.gamma, 1.0);
                }
                DdObjective::MaxMargin(g) => {
                    // ε = ε' = t, maximize t.
                    prog.nonneg(&[(v.eps, 1.0), (v.eps_prime, -1.0)], 0.0);
                    prog.nonneg(&[(v.eps_prime, 1.0), (v.eps, -1.0)], 0.0);
                    match g {
                        Some(g) => {
                            prog.psd(gamma_lmi(&v, dim, GammaMode::Fixed(g)));
                            prog.psd(
                                v.p.expr()
                                    .sub(&Affine::constant(&(Mat::identity(dim, dim) * delta))),
                            );
                        }
                        None => {
                            // Homogeneous: normalize tI ⪯ P ⪯ I.
                            prog.psd(
                                v.p.expr()
                                    .sub(&Affine::scaled(v.eps, &Mat::identity(dim, dim))),
                            );
                            prog.psd(Affine::identity(dim).sub(&v.p.expr()));
                        }
                    }
                    prog.minimize(v.eps, -1.0);
                }
            }
            let sol = prog.solve(&settings.sdp)?;
            if !sol.is_solved() {
                return Err(status_error(&sol, what));
            }
            Ok((prog, v, main, sol))
        };

    // Minimizing γ returns a point on the boundary of the LMI, where solver
    // rounding can break the certificate. The returned design instead comes
    // from a margin-maximizing solve with the weights inflated by 1 + κ. The
    // programs are homogeneous in the weights, so this costs a factor 1 + κ
    // in γ and leaves the cost inequality strict by κ(Q + KᵀRK) for the
    // actual weights.
    // Each solve runs with the weights scaled by `c` so that its `γ` is of
    // order one.
    let kappa = settings.gamma_backoff;
    let (gamma_min, c, phase2) = match mode {
        DdMode::Stabilize => (None, 1.0, DdObjective::MaxMargin(None)),
        DdMode::Performance(GammaMode::Fixed(g)) => {
            (None, 1.0 / g, DdObjective::MaxMargin(Some(1.0)))
        }
        DdMode::Performance(GammaMode::Minimize) => {
            // The center estimate can be far below γ near the top of the
            // feasible σ range; on numerical failure retry at smaller scales.
            let c0 = center_gamma_scale(&psi, &dims, weights, settings);
            let mut attempt = Err(Error::Solver(String::new()));
            for c1 in [c0, c0 * 0.1, c0 * 0.01] {
                attempt = solve_phase(DdObjective::MinGamma, &weights.scaled(c1))
                    .map(|(_, v1, _, sol1)| sol1.x[v1.gamma.0] / c1);
                if !matches!(attempt, Err(Error::Solver(_))) {
                    break;
                }
            }
            let g1 = attempt?;
            if !(g1.is_finite() && g1 > 0.0) {
                return Err(Error::Solver(format!(
                    "{what}: minimal γ {g1} is not positive"
                )));
            }
            (
                Some(g1),
                1.0 / g1,
                DdObjective::MaxMargin(Some((1.0 + kappa).powi(2))),
            )
        }
    };
    let scaled = weights.scaled(c);
    let w2 = if stabilize {
        scaled.clone()
    } else {
        weights.scaled(c * (1.0 + kappa))
    };
    let (prog, v, main, sol) = solve_phase(phase2, &w2)?;
    let eps_s = sol.x[v.eps.0];
    let eps_p_s = sol.x[v.eps_prime.0];
    if eps_s.min(eps_p_s) < delta {
        return Err(Error::Infeasible(format!(
            "{what}: best robust margin {:.3e} is below the strictness floor {delta:.1e}",
            eps_s.min(eps_p_s)
        )));
    }
    let gamma_mode = match phase2 {
        DdObjective::MaxMargin(Some(g)) => Some(GammaMode::Fixed(g)),
        _ => None,
    };
    let p_s = v.p.value(&sol.x);
    let l_s = v.l.value(&sol.x);
    let alpha_s = sol.x[v.alpha.0].max(0.0);
    let gamma_s = match gamma_mode {
        Some(GammaMode::Fixed(g)) => g,
        _ => 0.0,
    };
    let x = pack(
        &prog,
        &v,
        &Values {
            p: p_s.clone(),
            l: l_s.clone(),
            alpha: alpha_s,
            eps: eps_s,
            eps_prime: eps_p_s,
            gamma: gamma_s,
        },
    );
    let main_min = linalg::min_eig(&linalg::symmetrize(&main.eval(&x)));
    let gam_min =
        gamma_mode.map(|gm| linalg::min_eig(&linalg::symmetrize(&gamma_lmi(&v, dim, gm).eval(&x))));

    let p = &p_s * c;
    let l = &l_s * c;
    let k = extract_gain(&p, &l)?;
    let s = linalg::symmetrize(
        &p.clone()
            .try_inverse()
            .ok_or_else(|| Error::Solver("P is singular".into()))?,
    );
    let (a_c, b_c) = psi.center();
    let a_cl_c = closed_loop(
        &augmented(&a_c, &b_c, dims.d)?,
        &Gain::new(k.clone(), dims.n, dims.d)?,
    )?;
    let rho = linalg::spectral_radius(&a_cl_c);
    let zero = weights.scaled(0.0);
    let lyap_weights = if stabilize {
        zero.clone()
    } else {
        weights.clone()
    };
    let nominal = lyapunov_max_eig(&a_cl_c, &s, &k, &lyap_weights);
    let mut stability = lyapunov_max_eig(&a_cl_c, &s, &k, &zero);

    let (sampled, checked) = if settings.validation_samples > 0 {
        let models = sample_consistent_models(
            &psi,
            settings.validation_samples,
            settings.validation_seed,
            exec,
        )?;
        let evals = par::map_slice(&models, exec, |(a, b)| -> Result<(f64, f64)> {
            let a_cl = closed_loop(
                &augmented(a, b, dims.d)?,
                &Gain::new(k.clone(), dims.n, dims.d)?,
            )?;
            Ok((
                lyapunov_max_eig(&a_cl, &s, &k, &lyap_weights),
                lyapunov_max_eig(&a_cl, &s, &k, &zero),
            ))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let worst = evals.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        stability = evals.iter().map(|e| e.1).fold(stability, f64::max);
        (Some(worst), models.len())
    } else {
        (None, 0)
    };

    let diagnostics = Diagnostics {
        main_lmi_min_eig: main_min,
        gamma_lmi_min_eig: gam_min,
        p_min_eig: linalg::min_eig(&p),
        s_max_eig: linalg::max_eig(&s),
        iterations: sol.iterations,
        solver_status: sol.raw_status.clone(),
        nominal_spectral_radius: rho,
        nominal_lyapunov_max_eig: nominal,
        sampled_lyapunov_max_eig: sampled,
        stability_max_eig: stability,
        samples_checked: checked,
        gamma_min,
        regressor_rank: Some(pre.regressor_rank),
        weight_scale: c,
        psi_scale: s_psi,
    };
    if !(rho < 1.0) || !(stability < 0.0) || !(nominal < 0.0) || sampled.is_some_and(|w| !(w < 0.0))
    {
        return Err(Error::Solver(format!(
            "{what}: post-validation failed (center ρ = {rho:.6}, stability max eig {stability:.3e}, \
             Lyapunov max eig {nominal:.3e} at center and {:?} over samples)",
            sampled
        )));
    }

    Ok(SynthesisResult {
        kind: if stabilize {
            SynthesisKind::StabilizationOnly
        } else {
            SynthesisKind::DataDriven
        },
        gamma: gamma_mode.map(|_| gamma_s / c),
        k,
        p,
        l,
        alpha: Some(if centered {
            alpha_s * c
        } else {
            alpha_s * c / s_psi
        }),
        eps: Some(eps_s * c),
        eps_prime: Some(eps_p_s * c),
        status: sol.status,
        diagnostics,
        n: dims.n,
        m: dims.m,
        d: dims.d,
    })
}

/// Smallest `γ` found by bisection on fixed-`γ` feasibility; a cross-check
/// of the direct minimization. Returns the feasible result at the upper
/// bracket.
pub fn minimize_gamma_by_bisection(
    data: &DataSet,
    phi: &NoiseModel,
    weights: &CostWeights,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    settings: &LmiSettings,
) -> Result<SynthesisResult> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Invalid(format!("bad bracket [{lo}, {hi}]")));
    }
    let mut best = solve_data_driven(data, phi, weights, GammaMode::Fixed(hi), settings)?;
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > rel_tol * hi {
        let mid = (lo * hi).sqrt();
        match solve_data_driven(data, phi, weights, GammaMode::Fixed(mid), settings) {
            Ok(r) => {
                best = r;
                hi = mid;
            }
            Err(Error::Infeasible(_)) => lo = mid,
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

/// Outcome of one σ in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Feasible,
    /// `Σ_D` is empty for this σ.
    Empty,
    Infeasible,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub status: SweepStatus,
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    /// Smallest and largest feasible grid values.
    pub feasible_range: Option<(f64, f64)>,
}

/// Minimizes `γ` at every σ of an ascending grid with `Φ = diag(σ²T I, −I)`.
pub fn sweep_sigma(
    data: &DataSet,
    weights: &CostWeights,
    grid: &[f64],
    settings: &LmiSettings,
    exec: Execution,
) -> Result<SweepCurve> {
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Invalid("σ grid must be sorted ascending".into()));
    }
    let points = par::map_slice(grid, exec, |&sigma| {
        solve_point(data, weights, sigma, settings)
    });
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let feasible: Vec<f64> = points
        .iter()
        .filter(|p| p.status == SweepStatus::Feasible)
        .map(|p| p.sigma)
        .collect();
    let feasible_range = match (feasible.first(), feasible.last()) {
        (Some(&a), Some(&b)) => Some((a, b)),
        _ => None,
    };
    Ok(SweepCurve {
        points,
        feasible_range,
    })
}

fn solve_point(
    data: &DataSet,
    weights: &CostWeights,
    sigma: f64,
    settings: &LmiSettings,
) -> Result<SweepPoint> {
    let phi = make_sigma_phi(sigma, data.n(), data.samples())?;
    let (status, gamma, message) = match solve_dd(
        data,
        &phi,
        weights,
        DdMode::Performance(GammaMode::Minimize),
        settings,
        Execution::Sequential,
    ) {
        Ok(r) => (SweepStatus::Feasible, r.gamma, None),
        Err(Error::Infeasible(msg)) if msg.starts_with("no model is consistent") => {
            (SweepStatus::Empty, None, Some(msg))
        }
        Err(Error::Infeasible(msg)) => (SweepStatus::Infeasible, None, Some(msg)),
        Err(Error::Solver(msg)) => (SweepStatus::Failed, None, Some(msg)),
        Err(e) => return Err(e),
    };
    Ok(SweepPoint {
        sigma,
        status,
        gamma,
        message,
    })
}

/// Smallest σ with `Σ_D` nonempty for `Φ = diag(σ²T I, −I)`:
/// `σ² T = λ_max(X₊ (I − Π) X₊ᵀ)` with `Π` the projector onto the row space
/// of `[X₋; U₋ᵈ]`.
pub fn sigma_lower_bound(data: &DataSet) -> f64 {
    let s = data.regressor();
    let proj = linalg::pinv(&s, 1e-12) * &s;
    let t = data.samples();
    let resid = data.x_plus() * (Mat::identity(t, t) - proj) * data.x_plus().transpose();
    (linalg::max_eig(&linalg::symmetrize(&resid)).max(0.0) / t as f64).sqrt()
}

/// Feasible σ interval of program (CP): the lower end is
/// [`sigma_lower_bound`], the upper end is located by bisection on
/// feasibility between the lower end and `sigma_hi`.
pub fn feasible_sigma_interval(
    data: &DataSet,
    weights: &CostWeights,
    sigma_hi: f64,
    rel_tol: f64,
    settings: &LmiSettings,
) -> Result<Option<(f64, f64)>> {
    let lo_bound = sigma_lower_bound(data);
    let feasible = |sigma: f64| -> Result<bool> {
        Ok(solve_point(data, weights, sigma, settings)?.status == SweepStatus::Feasible)
    };
    // The bound itself is a degenerate set; probe slightly above it.
    let mut lo = lo_bound * (1.0 + 1e-6) + 1e-12;
    if !feasible(lo)? {
        let probe = lo_bound + 0.01 * (sigma_hi - lo_bound);
        if !feasible(probe)? {
            return Ok(None);
        }
        let (mut a, mut b) = (lo, probe);
        while b - a > rel_tol * b {
            let mid = 0.5 * (a + b);
            if feasible(mid)? {
                b = mid;
            } else {
                a = mid;
            }
        }
        lo = b;
    }
    if feasible(sigma_hi)? {
        return Ok(Some((lo, sigma_hi)));
    }
    let (mut a, mut b) = (lo, sigma_hi);
    while b - a > rel_tol * b {
        let mid = 0.5 * (a + b);
        if feasible(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Some((lo, a)))
}

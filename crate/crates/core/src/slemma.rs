//! Expanded matrix S-lemma: certificate checking, certificate search and a
//! sampling-based validator of the robust quadratic matrix inequality.
//!
//! The uncertainty set is
//! `S_N = { Z ∈ ℝ^{m×n} : [I; Z]ᵀ [[N_a, N_bᵀ], [N_b, N_c]] [I; Z] ⪰ 0 }`
//! and the robust inequality asks, for every `Z ∈ S_N`,
//!
//! ```text
//! [[P'_a, P'_bᵀ], [P'_b, P'_c]]  ≻  [[Zᵀ Q_a Z, Zᵀ Q_bᵀ], [Q_b Z, Q_c]].
//! ```
//!
//! It holds iff there are `α ≥ 0`, `ε, ε' > 0` with
//!
//! ```text
//! [[P'_a − εI, 0, P'_bᵀ], [0, −Q_a, −Q_bᵀ], [P'_b, −Q_b, P'_c − Q_c − ε'I]]
//!   − α [[N_a, N_bᵀ, 0], [N_b, N_c, 0], [0, 0, 0]]  ⪰ 0.
//! ```

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Mat};
use crate::matrix_serde;
use crate::par::{self, Execution};
use crate::random;
use crate::sdp::{Affine, Program, SdpSettings, SdpStatus};

/// Rank cutoff for the `ker N_c ⊆ ker N_bᵀ` regularity check.
pub const KERNEL_TOL: f64 = 1e-8;

/// Lower bound imposed on `ε, ε'` when searching for certificates.
pub const EPS_FLOOR: f64 = 1e-9;

/// The set `S_N` described by `N = [[N_a, N_bᵀ], [N_b, N_c]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSet {
    #[serde(with = "matrix_serde")]
    na: Mat,
    #[serde(with = "matrix_serde")]
    nb: Mat,
    #[serde(with = "matrix_serde")]
    nc: Mat,
}

impl QuadraticSet {
    /// Validates shapes, symmetry, `N_c ⪯ 0` and `ker N_c ⊆ ker N_bᵀ`.
    pub fn new(na: Mat, nb: Mat, nc: Mat) -> Result<Self> {
        let n = na.nrows();
        let m = nc.nrows();
        if !na.is_square() || !nc.is_square() || nb.shape() != (m, n) {
            return dim_err(format!(
                "N blocks must be n×n, m×n, m×m; got {:?}, {:?}, {:?}",
                na.shape(),
                nb.shape(),
                nc.shape()
            ));
        }
        let scale = 1.0
            + linalg::max_abs(&na)
                .max(linalg::max_abs(&nb))
                .max(linalg::max_abs(&nc));
        let tol = KERNEL_TOL * scale;
        if (&na - na.transpose()).amax() > tol || (&nc - nc.transpose()).amax() > tol {
            return Err(Error::Invalid("N_a and N_c must be symmetric".into()));
        }
        let set = QuadraticSet {
            na: linalg::symmetrize(&na),
            nb,
            nc: linalg::symmetrize(&nc),
        };
        set.regularity()?;
        Ok(set)
    }

    fn regularity(&self) -> Result<()> {
        let scale = 1.0
            + linalg::max_abs(&self.na)
                .max(linalg::max_abs(&self.nb))
                .max(linalg::max_abs(&self.nc));
        let tol = KERNEL_TOL * scale;
        if self.nc.nrows() == 0 {
            return Ok(());
        }
        let eig = self.nc.clone().symmetric_eigen();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > tol {
                return Err(Error::Invalid(format!(
                    "N_c is not negative semidefinite (eigenvalue {lambda:.3e})"
                )));
            }
            if lambda.abs() <= tol {
                let v = eig.eigenvectors.column(k);
                let leak = (self.nb.transpose() * v).norm();
                if leak > tol {
                    return Err(Error::Invalid(format!(
                        "kernel condition ker N_c ⊆ ker N_bᵀ fails (‖N_bᵀv‖ = {leak:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.na.nrows()
    }

    pub fn m(&self) -> usize {
        self.nc.nrows()
    }

    pub fn na(&self) -> &Mat {
        &self.na
    }

    pub fn nb(&self) -> &Mat {
        &self.nb
    }

    pub fn nc(&self) -> &Mat {
        &self.nc
    }

    pub fn full(&self) -> Mat {
        linalg::sym_blocks(
            &[self.n(), self.m()],
            &[
                (0, 0, self.na.clone()),
                (0, 1, self.nb.transpose()),
                (1, 1, self.nc.clone()),
            ],
        )
    }

    /// `[I; Z]ᵀ N [I; Z]`.
    pub fn form(&self, z: &Mat) -> Mat {
        let cross = self.nb.transpose() * z;
        linalg::symmetrize(&(&self.na + &cross + cross.transpose() + z.transpose() * &self.nc * z))
    }

    /// Smallest eigenvalue of the form; `Z ∈ S_N` iff it is `≥ 0`.
    ///
    /// Evaluated as `S + ΔᵀN_cΔ` with `Δ = Z − Z*`, which equals the form
    /// under the kernel condition and avoids cancellation when `N` is large
    /// compared to the set.
    pub fn margin(&self, z: &Mat) -> f64 {
        let delta = z - self.center();
        linalg::min_eig(&linalg::symmetrize(
            &(self.schur_complement() + delta.transpose() * &self.nc * &delta),
        ))
    }

    /// Scale-aware membership tolerance `1e-8 · (1 + ‖N‖)`.
    pub fn tolerance(&self) -> f64 {
        1e-8 * (1.0 + linalg::spectral_norm(&self.full()))
    }

    /// Maximizer of the form, `−N_c⁺ N_b`.
    pub fn center(&self) -> Mat {
        -(linalg::pinv(&self.nc, 1e-12) * &self.nb)
    }

    /// `N_a − N_bᵀ N_c⁻¹ N_b`; the set is
    /// `{ Z : (Z − Z*)ᵀ N_c (Z − Z*) + S ⪰ 0 }` with `Z*` the center.
    pub fn schur_complement(&self) -> Mat {
        linalg::symmetrize(&(&self.na + self.nb.transpose() * &self.center()))
    }

    /// True when `N_c ≺ 0` and the Schur complement vanishes, i.e. the set
    /// is the single point `Z*`.
    pub fn is_singleton(&self) -> bool {
        let tol = self.tolerance();
        self.m() > 0
            && linalg::max_eig(&self.nc) < -tol
            && linalg::max_eig(&self.schur_complement()).abs() <= tol
    }

    /// `(−N_c)^{-1/2}` when `N_c ≺ 0`.
    pub fn whitener(&self) -> Option<Mat> {
        if self.m() == 0 {
            return None;
        }
        let eig = self.nc.clone().symmetric_eigen();
        let floor = 1e-12 * (1.0 + linalg::max_abs(&self.nc));
        if eig.eigenvalues.iter().any(|&l| -l <= floor) {
            return None;
        }
        let d = Mat::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / (-l).sqrt()));
        Some(linalg::symmetrize(
            &(&eig.eigenvectors * d * eig.eigenvectors.transpose()),
        ))
    }

    /// Draws members of `S_N`.
    ///
    /// The center comes first. Of the remaining draws roughly half are
    /// interior points obtained by rejection sampling of Gaussian
    /// perturbations around the center, and half are boundary points found
    /// by bisection along random rays until the margin crosses zero.
    /// Directions are drawn in whitened coordinates `Z = Z* + (−N_c)^{-1/2}E`
    /// when `N_c ≺ 0`, where the set is `{E : S − EᵀE ⪰ 0}`. Directions
    /// along which the set is unbounded are capped at a large radius. Every
    /// returned point has nonnegative margin up to rounding.
    pub fn sample(&self, count: usize, seed: u64, exec: Execution) -> Result<Vec<Mat>> {
        let center = self.center();
        let tol = self.tolerance();
        let c_margin = self.margin(&center);
        if c_margin < -tol {
            return Err(Error::EmptyConsistencySet { margin: c_margin });
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        if self.is_singleton() {
            return Ok(vec![center]);
        }
        let (m, n) = center.shape();
        let schur = self.schur_complement();
        let (map, curvature) = match self.whitener() {
            Some(w) => (w, -Mat::identity(m, m)),
            None => (Mat::identity(m, m), self.nc.clone()),
        };
        let margin_e = |e: &Mat| {
            linalg::min_eig(&linalg::symmetrize(
                &(&schur + e.transpose() * &curvature * e),
            ))
        };
        let cap = 1e3 * (1.0 + schur.norm().sqrt() + linalg::spectral_norm(&self.full()).sqrt());

        let draws = par::map_indexed(count - 1, exec, |i| {
            let mut rng = random::stream(seed, i as u64);
            let dir = random_direction(m, n, &mut rng);
            let r = ray_extent(&margin_e, &dir, cap);
            if i % 2 == 1 {
                return Ok(&center + &map * (&dir * r));
            }
            // Rejection sampling: Gaussian proposals scaled to the extent
            // along a random ray, shrunk after repeated rejections.
            let mut scale = r.max(f64::MIN_POSITIVE) / ((m * n) as f64).sqrt();
            for attempt in 0..200 {
                let g = Mat::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let e = g * scale;
                if margin_e(&e) >= 0.0 {
                    return Ok(&center + &map * e);
                }
                if attempt % 10 == 9 {
                    scale *= 0.5;
                }
            }
            Err(Error::Sampling(format!(
                "no member of the set found in 200 draws (sample {i})"
            )))
        });
        let mut out = Vec::with_capacity(count);
        out.push(center);
        for d in draws {
            out.push(d?);
        }
        Ok(out)
    }
}

fn random_direction(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Mat {
    loop {
        let g = Mat::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 1e-12 {
            return g / norm;
        }
    }
}

/// Largest `r ∈ [0, cap]` with `margin(r·dir) ≥ 0`, by bisection.
fn ray_extent(margin: &impl Fn(&Mat) -> f64, dir: &Mat, cap: f64) -> f64 {
    let inside = |r: f64| margin(&(dir * r)) >= 0.0;
    if !inside(0.0) {
        return 0.0;
    }
    let mut hi = 1e-6;
    while inside(hi) {
        hi *= 2.0;
        if hi >= cap {
            return cap;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    lo
}

/// The matrices `P'` and `Q` of the robust inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmiPair {
    #[serde(with = "matrix_serde")]
    pa: Mat,
    #[serde(with = "matrix_serde")]
    pb: Mat,
    #[serde(with = "matrix_serde")]
    pc: Mat,
    #[serde(with = "matrix_serde")]
    qa: Mat,
    #[serde(with = "matrix_serde")]
    qb: Mat,
    #[serde(with = "matrix_serde")]
    qc: Mat,
}

impl QmiPair {
    /// Shapes: `P'_a` n×n, `P'_b` ℓ×n, `P'_c` ℓ×ℓ, `Q_a` m×m (PSD), `Q_b` ℓ×m,
    /// `Q_c` ℓ×ℓ.
    pub fn new(pa: Mat, pb: Mat, pc: Mat, qa: Mat, qb: Mat, qc: Mat) -> Result<Self> {
        let n = pa.nrows();
        let l = pc.nrows();
        let m = qa.nrows();
        if !pa.is_square() || !pc.is_square() || !qa.is_square() || !qc.is_square() {
            return dim_err("diagonal blocks must be square");
        }
        if pb.shape() != (l, n) || qb.shape() != (l, m) || qc.nrows() != l {
            return dim_err(format!(
                "inconsistent QMI blocks: P'_b {:?} (want {l}×{n}), Q_b {:?} (want {l}×{m}), Q_c {:?}",
                pb.shape(),
                qb.shape(),
                qc.shape()
            ));
        }
        let tol = 1e-8
            * (1.0
                + [&pa, &pc, &qa, &qc]
                    .iter()
                    .map(|m| linalg::max_abs(m))
                    .fold(0.0, f64::max));
        for (name, mtx) in [("P'_a", &pa), ("P'_c", &pc), ("Q_a", &qa), ("Q_c", &qc)] {
            if (mtx - mtx.transpose()).amax() > tol {
                return Err(Error::Invalid(format!("{name} must be symmetric")));
            }
        }
        if linalg::min_eig(&qa) < -tol {
            return Err(Error::Invalid("Q_a must be positive semidefinite".into()));
        }
        Ok(QmiPair {
            pa,
            pb,
            pc,
            qa,
            qb,
            qc,
        })
    }

    pub fn n(&self) -> usize {
        self.pa.nrows()
    }

    pub fn m(&self) -> usize {
        self.qa.nrows()
    }

    pub fn ell(&self) -> usize {
        self.pc.nrows()
    }

    /// `P' − [[ZᵀQ_aZ, ZᵀQ_bᵀ], [Q_bZ, Q_c]]`.
    pub fn gap(&self, z: &Mat) -> Mat {
        let top = &self.pa - z.transpose() * &self.qa * z;
        let off = &self.pb - &self.qb * z;
        let bottom = &self.pc - &self.qc;
        linalg::sym_blocks(
            &[self.n(), self.ell()],
            &[(0, 0, top), (0, 1, off.transpose()), (1, 1, bottom)],
        )
    }

    /// Smallest eigenvalue of [`QmiPair::gap`]; the strict inequality holds
    /// at `Z` iff this is positive.
    pub fn margin(&self, z: &Mat) -> f64 {
        linalg::min_eig(&self.gap(z))
    }

    fn check_against(&self, set: &QuadraticSet) -> Result<()> {
        if set.n() != self.n() || set.m() != self.m() {
            return dim_err(format!(
                "set is over {}×{} matrices, pair expects {}×{}",
                set.m(),
                set.n(),
                self.m(),
                self.n()
            ));
        }
        Ok(())
    }
}

/// Multipliers `(α, ε, ε')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QmiCertificate {
    pub alpha: f64,
    pub eps: f64,
    pub eps_prime: f64,
}

impl QmiCertificate {
    pub fn new(alpha: f64, eps: f64, eps_prime: f64) -> Result<Self> {
        if !(alpha >= 0.0 && eps > 0.0 && eps_prime > 0.0) {
            return Err(Error::Invalid(format!(
                "certificate needs α ≥ 0, ε > 0, ε' > 0; got ({alpha}, {eps}, {eps_prime})"
            )));
        }
        Ok(QmiCertificate {
            alpha,
            eps,
            eps_prime,
        })
    }
}

/// The `(n + m + ℓ)`-square certificate matrix.
pub fn certificate_matrix(
    set: &QuadraticSet,
    pair: &QmiPair,
    cert: &QmiCertificate,
) -> Result<Mat> {
    pair.check_against(set)?;
    let (n, m, l) = (pair.n(), pair.m(), pair.ell());
    let a = cert.alpha;
    Ok(linalg::sym_blocks(
        &[n, m, l],
        &[
            (
                0,
                0,
                &pair.pa - Mat::identity(n, n) * cert.eps - &set.na * a,
            ),
            (0, 1, -(set.nb.transpose() * a)),
            (0, 2, pair.pb.transpose()),
            (1, 1, -&pair.qa - &set.nc * a),
            (1, 2, -pair.qb.transpose()),
            (
                2,
                2,
                &pair.pc - &pair.qc - Mat::identity(l, l) * cert.eps_prime,
            ),
        ],
    ))
}

/// Verdict of a PSD check with its smallest eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdVerdict {
    pub holds: bool,
    pub margin: f64,
}

/// Whether the certificate matrix is PSD (within `1e-9` relative slack).
pub fn check_certificate(
    set: &QuadraticSet,
    pair: &QmiPair,
    cert: &QmiCertificate,
) -> Result<PsdVerdict> {
    let m = certificate_matrix(set, pair, cert)?;
    let margin = linalg::min_eig(&m);
    let tol = 1e-9 * (1.0 + linalg::max_abs(&m));
    Ok(PsdVerdict {
        holds: margin >= -tol,
        margin,
    })
}

/// Result of sampling the robust inequality over `S_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustCheck {
    pub holds_on_samples: bool,
    pub worst_margin: f64,
    pub worst_z: Mat,
    pub samples: usize,
}

/// Checks the strict inequality at sampled members of `S_N`.
pub fn verify_robust_qmi(
    set: &QuadraticSet,
    pair: &QmiPair,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<RobustCheck> {
    pair.check_against(set)?;
    let zs = set.sample(samples.max(1), seed, exec)?;
    let margins = par::map_slice(&zs, exec, |z| pair.margin(z));
    let (worst, worst_margin) = margins
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &v)| (i, v))
        .expect("at least one sample");
    Ok(RobustCheck {
        holds_on_samples: worst_margin > 0.0,
        worst_margin,
        worst_z: zs[worst].clone(),
        samples: zs.len(),
    })
}

/// Outcome of [`find_certificate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CertificateSearch {
    Found(QmiCertificate),
    /// No certificate with `ε, ε' ≥ EPS_FLOOR`. `best_eps` is the largest
    /// common `ε = ε'` the solver could reach, when it produced one.
    Infeasible {
        best_eps: Option<f64>,
    },
}

/// Searches for `(α, ε, ε')` by maximizing a common `ε = ε'`.
///
/// The certificate inequality only gets easier as `ε, ε'` shrink, so the
/// best common value decides feasibility; the search is capped so the
/// program stays bounded.
pub fn find_certificate(
    set: &QuadraticSet,
    pair: &QmiPair,
    settings: &SdpSettings,
) -> Result<CertificateSearch> {
    pair.check_against(set)?;
    let (n, m, l) = (pair.n(), pair.m(), pair.ell());
    let scale = 1.0
        + [&pair.pa, &pair.pb, &pair.pc, &pair.qa, &pair.qb, &pair.qc]
            .iter()
            .map(|x| linalg::max_abs(x))
            .fold(0.0, f64::max);

    let mut prog = Program::new();
    let alpha = prog.scalar();
    let eps = prog.scalar();
    let zero_nm = Mat::zeros(n, m);
    let mut lmi = crate::sdp::BlockLmi::new(vec![n, m, l]);
    lmi.set(
        0,
        0,
        Affine::constant(&pair.pa)
            .sub(&Affine::scaled(eps, &Mat::identity(n, n)))
            .sub(&Affine::scaled(alpha, &set.na)),
    );
    lmi.set(
        0,
        1,
        Affine::constant(&zero_nm).sub(&Affine::scaled(alpha, &set.nb.transpose())),
    );
    lmi.set(0, 2, Affine::constant(&pair.pb.transpose()));
    lmi.set(
        1,
        1,
        Affine::constant(&(-&pair.qa)).sub(&Affine::scaled(alpha, &set.nc)),
    );
    lmi.set(1, 2, Affine::constant(&(-pair.qb.transpose())));
    lmi.set(
        2,
        2,
        Affine::constant(&(&pair.pc - &pair.qc)).sub(&Affine::scaled(eps, &Mat::identity(l, l))),
    );
    prog.psd(lmi.build());
    prog.nonneg(&[(alpha, 1.0)], 0.0);
    prog.nonneg(&[(eps, -1.0)], scale);
    prog.minimize(eps, -1.0);

    let sol = prog.solve(settings)?;
    match sol.status {
        SdpStatus::Infeasible => Ok(CertificateSearch::Infeasible { best_eps: None }),
        SdpStatus::Optimal | SdpStatus::AlmostOptimal => {
            let best = sol.x[eps.0];
            if best < EPS_FLOOR {
                return Ok(CertificateSearch::Infeasible {
                    best_eps: Some(best),
                });
            }
            let cert = QmiCertificate::new(sol.x[alpha.0].max(0.0), best, best)?;
            // The optimum sits on the boundary of the PSD cone; a small
            // back-off keeps the returned multipliers strictly inside.
            let backed = QmiCertificate::new(cert.alpha, 0.5 * best, 0.5 * best)?;
            if check_certificate(set, pair, &backed)?.holds {
                Ok(CertificateSearch::Found(backed))
            } else if check_certificate(set, pair, &cert)?.holds {
                Ok(CertificateSearch::Found(cert))
            } else {
                Err(Error::Solver(format!(
                    "solver returned a certificate that fails the PSD check (status {})",
                    sol.raw_status
                )))
            }
        }
        _ => Err(Error::Solver(format!(
            "certificate search ended with status {}",
            sol.raw_status
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, v)
    }

    fn unit_ball(n: usize, mdim: usize) -> QuadraticSet {
        QuadraticSet::new(
            Mat::identity(n, n),
            Mat::zeros(mdim, n),
            -Mat::identity(mdim, mdim),
        )
        .unwrap()
    }

    #[test]
    fn ball_certificate_holds() {
        let set = unit_ball(1, 1);
        let pair = QmiPair::new(
            m(1, 1, &[10.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[10.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        let cert = QmiCertificate::new(1.0, 1.0, 1.0).unwrap();
        let v = check_certificate(&set, &pair, &cert).unwrap();
        assert!(v.holds, "{v:?}");
        // eigenvalues of diag(10-1-1, 1, 10-1) → 1
        assert!((v.margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_decouples() {
        let set = unit_ball(2, 1);
        let pair = QmiPair::new(
            Mat::identity(2, 2) * 2.0,
            Mat::zeros(1, 2),
            m(1, 1, &[2.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[1.0]),
        )
        .unwrap();
        let cert = QmiCertificate::new(0.0, 1e-9, 1e-9).unwrap();
        assert!(check_certificate(&set, &pair, &cert).unwrap().holds);
    }

    #[test]
    fn indefinite_qa_rejected() {
        let r = QmiPair::new(
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[-1.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
        );
        assert!(matches!(r, Err(Error::Invalid(_))));
    }

    #[test]
    fn kernel_condition_enforced() {
        // N_c singular with N_b leaking into its kernel
        let r = QuadraticSet::new(
            m(1, 1, &[1.0]),
            m(2, 1, &[0.0, 1.0]),
            m(2, 2, &[-1.0, 0.0, 0.0, 0.0]),
        );
        assert!(matches!(r, Err(Error::Invalid(_))));
        let ok = QuadraticSet::new(
            m(1, 1, &[1.0]),
            m(2, 1, &[1.0, 0.0]),
            m(2, 2, &[-1.0, 0.0, 0.0, 0.0]),
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn positive_nc_rejected() {
        let r = QuadraticSet::new(m(1, 1, &[1.0]), m(1, 1, &[0.0]), m(1, 1, &[0.5]));
        assert!(matches!(r, Err(Error::Invalid(_))));
    }

    #[test]
    fn singleton_set_reduces_to_pointwise_check() {
        // N = diag(0, -I): S_N = {0}
        let set =
            QuadraticSet::new(Mat::zeros(2, 2), Mat::zeros(1, 2), -Mat::identity(1, 1)).unwrap();
        let zs = set.sample(20, 3, Execution::Sequential).unwrap();
        assert_eq!(zs.len(), 1);
        assert_eq!(zs[0], Mat::zeros(1, 2));
        let pair = QmiPair::new(
            Mat::identity(2, 2),
            Mat::zeros(1, 2),
            m(1, 1, &[2.0]),
            m(1, 1, &[5.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[1.0]),
        )
        .unwrap();
        let check = verify_robust_qmi(&set, &pair, 20, 3, Execution::Sequential).unwrap();
        assert!(check.holds_on_samples);
        assert!((check.worst_margin - linalg::min_eig(&pair.gap(&Mat::zeros(1, 2)))).abs() < 1e-15);
    }

    #[test]
    fn samples_are_members() {
        let set = QuadraticSet::new(
            m(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            m(3, 2, &[0.1, 0.2, -0.3, 0.0, 0.5, 0.1]),
            -m(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.0, 0.0, 0.0, 3.0]),
        )
        .unwrap();
        let zs = set.sample(300, 11, Execution::Parallel).unwrap();
        assert_eq!(zs.len(), 300);
        let tol = set.tolerance();
        assert!(zs.iter().all(|z| set.margin(z) >= -tol));
        // boundary samples sit on the boundary
        let near_boundary = zs.iter().filter(|z| set.margin(z).abs() < 1e-6).count();
        assert!(near_boundary >= 100, "{near_boundary}");
    }

    #[test]
    fn sampling_is_deterministic_across_modes() {
        let set = unit_ball(2, 2);
        let a = set.sample(50, 9, Execution::Sequential).unwrap();
        let b = set.sample(50, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn found_certificate_checks_out() {
        let set = unit_ball(1, 1);
        let pair = QmiPair::new(
            m(1, 1, &[10.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[10.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        match find_certificate(&set, &pair, &SdpSettings::default()).unwrap() {
            CertificateSearch::Found(c) => {
                assert!(check_certificate(&set, &pair, &c).unwrap().holds)
            }
            other => panic!("expected certificate, got {other:?}"),
        }
    }

    #[test]
    fn violated_pair_has_no_certificate() {
        // Z = 1 is in the unit ball and P'_a - Q_a Z² = 1 - 4 < 0
        let set = unit_ball(1, 1);
        let pair = QmiPair::new(
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[4.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        let check = verify_robust_qmi(&set, &pair, 200, 1, Execution::Sequential).unwrap();
        assert!(!check.holds_on_samples);
        assert!(matches!(
            find_certificate(&set, &pair, &SdpSettings::default()).unwrap(),
            CertificateSearch::Infeasible { .. }
        ));
    }

    #[test]
    fn whole_space_requires_vanishing_qa() {
        // N = 0: S_N is all of ℝ^{m×n}
        let set = QuadraticSet::new(Mat::zeros(1, 1), Mat::zeros(1, 1), Mat::zeros(1, 1)).unwrap();
        let with_qa = QmiPair::new(
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        assert!(matches!(
            find_certificate(&set, &with_qa, &SdpSettings::default()).unwrap(),
            CertificateSearch::Infeasible { .. }
        ));
        let without = QmiPair::new(
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        assert!(matches!(
            find_certificate(&set, &without, &SdpSettings::default()).unwrap(),
            CertificateSearch::Found(_)
        ));
    }
}

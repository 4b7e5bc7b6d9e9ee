//! Small LMI modelling layer over the Clarabel conic solver.
//!
//! Decision variables are plain scalars; symmetric and rectangular matrix
//! variables are views onto consecutive scalar slots. Constraints are affine
//! matrix expressions required to be PSD, plus scalar `expr ≥ 0` rows.
//!
//! An affine expression stores its constant part densely and its linear part
//! as `(variable, row, col, coefficient)` triplets, so block LMIs with a few
//! dozen rows stay cheap to build.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use openblas_src as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Handle to one scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scalar(pub usize);

/// Symmetric `dim × dim` matrix variable (upper triangle stored).
#[derive(Debug, Clone, Copy)]
pub struct SymVar {
    dim: usize,
    base: usize,
}

impl SymVar {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        // column-major upper triangle
        self.base + c * (c + 1) / 2 + r
    }

    pub fn expr(&self) -> Affine {
        let mut e = Affine::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                e.terms.push((self.index(i, j), i, j, 1.0));
            }
        }
        e
    }

    pub fn value(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.dim, self.dim, |i, j| x[self.index(i, j)])
    }

    pub fn pack(&self, m: &Mat, x: &mut [f64]) {
        for j in 0..self.dim {
            for i in 0..=j {
                x[self.index(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
    }
}

/// Rectangular `rows × cols` matrix variable (row-major slots).
#[derive(Debug, Clone, Copy)]
pub struct MatVar {
    rows: usize,
    cols: usize,
    base: usize,
}

impl MatVar {
    fn index(&self, i: usize, j: usize) -> usize {
        self.base + i * self.cols + j
    }

    pub fn expr(&self) -> Affine {
        let mut e = Affine::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                e.terms.push((self.index(i, j), i, j, 1.0));
            }
        }
        e
    }

    pub fn value(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| x[self.index(i, j)])
    }

    pub fn pack(&self, m: &Mat, x: &mut [f64]) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                x[self.index(i, j)] = m[(i, j)];
            }
        }
    }
}

/// Affine matrix expression `C + Σ x_v F_v`.
#[derive(Debug, Clone)]
pub struct Affine {
    rows: usize,
    cols: usize,
    constant: Mat,
    terms: Vec<(usize, usize, usize, f64)>,
}

impl Affine {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Affine {
            rows,
            cols,
            constant: Mat::zeros(rows, cols),
            terms: Vec::new(),
        }
    }

    pub fn constant(m: &Mat) -> Self {
        Affine {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m.clone(),
            terms: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Affine::constant(&Mat::identity(dim, dim))
    }

    /// `x_v · M`.
    pub fn scaled(v: Scalar, m: &Mat) -> Self {
        let mut e = Affine::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    e.terms.push((v.0, i, j, m[(i, j)]));
                }
            }
        }
        e
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn transpose(&self) -> Self {
        Affine {
            rows: self.cols,
            cols: self.rows,
            constant: self.constant.transpose(),
            terms: self
                .terms
                .iter()
                .map(|&(v, i, j, c)| (v, j, i, c))
                .collect(),
        }
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.constant *= s;
        for t in &mut self.terms {
            t.3 *= s;
        }
        self
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Self {
        self.scale(-1.0)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(mut self, other: &Affine) -> Self {
        assert_eq!(self.shape(), other.shape(), "affine add shape mismatch");
        self.constant += &other.constant;
        self.terms.extend_from_slice(&other.terms);
        self
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, other: &Affine) -> Self {
        self.add(&other.clone().neg())
    }

    /// `M · self`.
    pub fn left_mul(&self, m: &Mat) -> Self {
        assert_eq!(m.ncols(), self.rows, "left_mul shape mismatch");
        let mut terms = Vec::with_capacity(self.terms.len() * m.nrows());
        for &(v, r, c, coeff) in &self.terms {
            for i in 0..m.nrows() {
                let f = m[(i, r)];
                if f != 0.0 {
                    terms.push((v, i, c, f * coeff));
                }
            }
        }
        Affine {
            rows: m.nrows(),
            cols: self.cols,
            constant: m * &self.constant,
            terms,
        }
    }

    /// `self · M`.
    pub fn right_mul(&self, m: &Mat) -> Self {
        self.transpose().left_mul(&m.transpose()).transpose()
    }

    /// Sub-block starting at `(r0, c0)` with shape `(nr, nc)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        assert!(
            r0 + nr <= self.rows && c0 + nc <= self.cols,
            "block out of range"
        );
        let terms = self
            .terms
            .iter()
            .filter(|&&(_, i, j, _)| i >= r0 && i < r0 + nr && j >= c0 && j < c0 + nc)
            .map(|&(v, i, j, c)| (v, i - r0, j - c0, c))
            .collect();
        Affine {
            rows: nr,
            cols: nc,
            constant: self.constant.view((r0, c0), (nr, nc)).into_owned(),
            terms,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut m = self.constant.clone();
        for &(v, i, j, c) in &self.terms {
            m[(i, j)] += c * x[v];
        }
        m
    }
}

/// Symmetric block matrix assembled from upper-triangular affine blocks.
#[derive(Debug, Clone)]
pub struct BlockLmi {
    sizes: Vec<usize>,
    blocks: BTreeMap<(usize, usize), Affine>,
}

impl BlockLmi {
    pub fn new(sizes: Vec<usize>) -> Self {
        BlockLmi {
            sizes,
            blocks: BTreeMap::new(),
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Sets block `(i, j)`, `i <= j`; the mirror block is implied. Blocks of
    /// zero size are silently skipped.
    pub fn set(&mut self, i: usize, j: usize, e: Affine) {
        assert!(i <= j, "set upper blocks only");
        assert_eq!(
            e.shape(),
            (self.sizes[i], self.sizes[j]),
            "block ({i},{j}) shape"
        );
        if self.sizes[i] == 0 || self.sizes[j] == 0 {
            return;
        }
        self.blocks.insert((i, j), e);
    }

    /// Keeps only the leading `k` block rows/columns.
    pub fn leading(&self, k: usize) -> BlockLmi {
        BlockLmi {
            sizes: self.sizes[..k].to_vec(),
            blocks: self
                .blocks
                .iter()
                .filter(|((i, j), _)| *i < k && *j < k)
                .map(|(key, e)| (*key, e.clone()))
                .collect(),
        }
    }

    pub fn build(&self) -> Affine {
        let offs = crate::linalg::offsets(&self.sizes);
        let dim: usize = self.sizes.iter().sum();
        let mut out = Affine::zeros(dim, dim);
        for (&(bi, bj), e) in &self.blocks {
            let (r0, c0) = (offs[bi], offs[bj]);
            out.constant
                .view_mut((r0, c0), e.shape())
                .add_assign(&e.constant);
            out.terms
                .extend(e.terms.iter().map(|&(v, i, j, c)| (v, r0 + i, c0 + j, c)));
            if bi != bj {
                let t = e.transpose();
                out.constant
                    .view_mut((c0, r0), t.shape())
                    .add_assign(&t.constant);
                out.terms
                    .extend(t.terms.iter().map(|&(v, i, j, c)| (v, c0 + i, r0 + j, c)));
            }
        }
        out
    }
}

trait AddAssignView {
    fn add_assign(&mut self, m: &Mat);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign(&mut self, m: &Mat) {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self[(i, j)] += m[(i, j)];
            }
        }
    }
}

/// Solver tolerances. Field names follow the `sdp.*` configuration keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpSettings {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: u32,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            tol_feas: 1e-9,
            tol_gap: 1e-9,
            max_iter: 300,
        }
    }
}

/// Outcome class reported by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    /// Solved to reduced accuracy.
    AlmostOptimal,
    Infeasible,
    Unbounded,
    Failed,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub raw_status: String,
}

impl SdpSolution {
    pub fn is_solved(&self) -> bool {
        matches!(self.status, SdpStatus::Optimal | SdpStatus::AlmostOptimal)
    }
}

/// A linear objective over scalar variables subject to LMIs.
#[derive(Debug, Clone, Default)]
pub struct Program {
    n_vars: usize,
    objective: Vec<(usize, f64)>,
    psd: Vec<Affine>,
    nonneg: Vec<(Vec<(usize, f64)>, f64)>,
}

impl Program {
    pub fn new() -> Self {
        Program::default()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn scalar(&mut self) -> Scalar {
        self.n_vars += 1;
        Scalar(self.n_vars - 1)
    }

    pub fn sym(&mut self, dim: usize) -> SymVar {
        let v = SymVar {
            dim,
            base: self.n_vars,
        };
        self.n_vars += dim * (dim + 1) / 2;
        v
    }

    pub fn mat(&mut self, rows: usize, cols: usize) -> MatVar {
        let v = MatVar {
            rows,
            cols,
            base: self.n_vars,
        };
        self.n_vars += rows * cols;
        v
    }

    /// Adds `coeff · v` to the minimized objective.
    pub fn minimize(&mut self, v: Scalar, coeff: f64) {
        self.objective.push((v.0, coeff));
    }

    /// Requires the symmetric part of `e` to be PSD.
    pub fn psd(&mut self, e: Affine) {
        assert_eq!(e.rows, e.cols, "LMI must be square");
        if e.rows > 0 {
            self.psd.push(e);
        }
    }

    /// Requires `Σ c_i x_i + constant ≥ 0`.
    pub fn nonneg(&mut self, terms: &[(Scalar, f64)], constant: f64) {
        self.nonneg
            .push((terms.iter().map(|(v, c)| (v.0, *c)).collect(), constant));
    }

    pub fn solve(&self, settings: &SdpSettings) -> Result<SdpSolution> {
        // Clarabel form: min qᵀx s.t. Ax + s = b, s ∈ K. For an LMI
        // C + Σ x_v F_v ⪰ 0 the slack is svec(C + Σ x_v F_v), so b = svec(C)
        // and column v of A is −svec(F_v).
        let mut rows: Vec<BTreeMap<usize, f64>> = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();

        if !self.nonneg.is_empty() {
            for (terms, c) in &self.nonneg {
                let mut row = BTreeMap::new();
                for &(v, coeff) in terms {
                    *row.entry(v).or_insert(0.0) -= coeff;
                }
                rows.push(row);
                b.push(*c);
            }
            cones.push(SupportedConeT::NonnegativeConeT(self.nonneg.len()));
        }

        let sqrt_half = std::f64::consts::FRAC_1_SQRT_2;
        for lmi in &self.psd {
            let dim = lmi.rows;
            let base = rows.len();
            let tri = dim * (dim + 1) / 2;
            rows.extend((0..tri).map(|_| BTreeMap::new()));
            let idx = |i: usize, j: usize| {
                let (r, c) = if i <= j { (i, j) } else { (j, i) };
                c * (c + 1) / 2 + r
            };
            let mut consts = vec![0.0; tri];
            for j in 0..dim {
                for i in 0..dim {
                    let w = if i == j { 1.0 } else { sqrt_half };
                    consts[idx(i, j)] += w * lmi.constant[(i, j)];
                }
            }
            for &(v, i, j, c) in &lmi.terms {
                let w = if i == j { 1.0 } else { sqrt_half };
                *rows[base + idx(i, j)].entry(v).or_insert(0.0) -= w * c;
            }
            b.extend(consts);
            cones.push(if dim == 1 {
                SupportedConeT::NonnegativeConeT(1)
            } else {
                SupportedConeT::PSDTriangleConeT(dim)
            });
        }

        let n = self.n_vars;
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for (&v, &c) in row {
                if c != 0.0 {
                    by_col[v].push((r, c));
                }
            }
        }
        let mut colptr = vec![0];
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        for col in &by_col {
            for &(r, c) in col {
                rowval.push(r);
                nzval.push(c);
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(rows.len(), n, colptr, rowval, nzval);
        let p = CscMatrix::<f64>::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(v, c) in &self.objective {
            q[v] += c;
        }

        let clarabel_settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(settings.max_iter)
            .tol_feas(settings.tol_feas)
            .tol_gap_abs(settings.tol_gap)
            .tol_gap_rel(settings.tol_gap)
            .max_threads(1)
            .build()
            .map_err(|e| Error::Solver(format!("bad solver settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, clarabel_settings)
            .map_err(|e| Error::Solver(format!("problem setup failed: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SdpStatus::Optimal,
            SolverStatus::AlmostSolved => SdpStatus::AlmostOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SdpStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SdpStatus::Unbounded
            }
            _ => SdpStatus::Failed,
        };
        Ok(SdpSolution {
            status,
            x: sol.x.clone(),
            objective: sol.obj_val,
            iterations: sol.iterations,
            raw_status: format!("{:?}", sol.status),
        })
    }
}

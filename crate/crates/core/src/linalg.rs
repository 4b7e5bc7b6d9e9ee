//! Dense linear-algebra helpers shared across the crate.
//!
//! Everything here works on small dense `DMatrix<f64>` values; the LMIs in
//! this crate rarely exceed a few dozen rows.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Smallest eigenvalue of the symmetric part; `+inf` for an empty matrix.
pub fn min_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Largest eigenvalue of the symmetric part; `-inf` for an empty matrix.
pub fn max_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m)
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY)
}

/// Symmetric PSD square root, clamping negative eigenvalues at zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    v * Mat::from_diagonal(&d) * v.transpose()
}

/// Largest absolute eigenvalue of a square matrix.
pub fn spectral_radius(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Numerical rank with a relative cutoff on the singular values.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let cutoff = rel_tol * sv.max().max(f64::MIN_POSITIVE);
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Moore-Penrose pseudo-inverse with a relative singular value cutoff.
pub fn pinv(m: &Mat, rel_tol: f64) -> Mat {
    if m.is_empty() {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let cutoff = rel_tol * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Symmetric block matrix from its upper-triangular blocks.
///
/// `sizes[i]` is the size of row/column block `i`; `blocks` lists
/// `(i, j, M)` with `i <= j`. Lower blocks are filled by transposition and
/// unspecified blocks are zero.
pub fn sym_blocks(sizes: &[usize], blocks: &[(usize, usize, Mat)]) -> Mat {
    let offsets = offsets(sizes);
    let total: usize = sizes.iter().sum();
    let mut out = Mat::zeros(total, total);
    for (i, j, m) in blocks {
        assert!(i <= j, "only upper blocks may be given");
        assert_eq!(
            (m.nrows(), m.ncols()),
            (sizes[*i], sizes[*j]),
            "block ({i},{j})"
        );
        out.view_mut((offsets[*i], offsets[*j]), (m.nrows(), m.ncols()))
            .copy_from(m);
        if i != j {
            out.view_mut((offsets[*j], offsets[*i]), (m.ncols(), m.nrows()))
                .copy_from(&m.transpose());
        }
    }
    out
}

pub fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    sizes
        .iter()
        .map(|s| {
            let o = acc;
            acc += s;
            o
        })
        .collect()
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

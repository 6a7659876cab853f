//! Nested least-squares projections through one QR factorization.
//!
//! The largest candidate design is factorized once as `X = QR` with
//! Householder reflections. Because the candidate models are nested (model
//! `m` uses the first `k_m` columns), every projection `P_m v` is a prefix
//! of the orthonormal coordinates `Qᵀv`, so all quadratic forms reduce to
//! O(k) prefix sums and no projection matrix is ever materialized.

use crate::error::{Error, Result};
use crate::mat::{dot, sq_norm, Mat};

/// Relative pivot tolerance for declaring a column linearly dependent.
pub const RANK_TOL: f64 = 1e-12;

/// Orthonormalized nested design: `X = Q R` plus the nesting sizes.
#[derive(Debug, Clone)]
pub struct NestedDesign {
    n: usize,
    sizes: Vec<usize>,
    q: Mat,
    r: Mat,
}

impl NestedDesign {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Nesting sizes `k_1 < … < k_{M_n}`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of candidate models `M_n`.
    pub fn num_models(&self) -> usize {
        self.sizes.len()
    }

    /// Largest model size `k_{M_n}`.
    pub fn k_max(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    fn check_model(&self, m: usize) -> Result<()> {
        if m < 1 || m > self.sizes.len() {
            return Err(Error::Argument(format!(
                "model index {m} out of range 1..={}",
                self.sizes.len()
            )));
        }
        Ok(())
    }
}

/// Orthonormal coordinates of one vector against the design columns.
#[derive(Debug, Clone)]
pub struct ProjectionCoefficients {
    /// `d_j = q_jᵀ v`.
    pub d: Vec<f64>,
    /// `‖v‖²`.
    pub sq_norm: f64,
    /// Prefix sums of `d_j²`, cached so quadratic forms are O(1) per model.
    prefix_sq: Vec<f64>,
}

impl ProjectionCoefficients {
    fn new(d: Vec<f64>, sq_norm: f64) -> Self {
        let mut prefix_sq = Vec::with_capacity(d.len() + 1);
        prefix_sq.push(0.0);
        let mut acc = 0.0;
        for &x in &d {
            acc += x * x;
            prefix_sq.push(acc);
        }
        ProjectionCoefficients { d, sq_norm, prefix_sq }
    }
}

/// Householder QR of the largest candidate model.
///
/// `x` has the columns ordered so that model `m` is the first `k_m` columns.
pub fn factorize(x: &Mat, sizes: &[usize]) -> Result<NestedDesign> {
    let (n, k_max) = (x.rows, x.cols);
    if sizes.is_empty() {
        return Err(Error::Argument("nesting sizes are empty".into()));
    }
    if !sizes.windows(2).all(|w| w[0] < w[1]) || sizes[0] == 0 {
        return Err(Error::Argument(format!(
            "nesting sizes must be strictly increasing and positive, got {sizes:?}"
        )));
    }
    let k_last = *sizes.last().unwrap();
    if k_last != k_max {
        return Err(Error::Argument(format!(
            "largest nesting size {k_last} must equal the column count {k_max}"
        )));
    }
    if k_max >= n {
        return Err(Error::Argument(format!(
            "need n > k_max, got n = {n}, k_max = {k_max}"
        )));
    }

    let col_norms: Vec<f64> = (0..k_max).map(|j| sq_norm(x.col(j)).sqrt()).collect();

    // Householder reflections stored as unit-ish vectors in `hh`.
    let mut work = x.clone();
    let mut hh: Vec<Vec<f64>> = Vec::with_capacity(k_max);
    let mut r = Mat::zeros(k_max, k_max);
    for j in 0..k_max {
        let col = &work.col(j)[j..];
        let alpha = sq_norm(col).sqrt() * if col[0] >= 0.0 { -1.0 } else { 1.0 };
        let mut v = col.to_vec();
        v[0] -= alpha;
        let vnorm2 = sq_norm(&v);
        if alpha.abs() < RANK_TOL * col_norms[j].max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient {
                column: j,
                pivot: alpha.abs(),
            });
        }
        // Apply the reflection H = I - 2 v vᵀ / ‖v‖² to the trailing columns.
        if vnorm2 > 0.0 {
            for l in j..k_max {
                let c = work.col_mut(l);
                let s = dot(&v, &c[j..]);
                let f = 2.0 * s / vnorm2;
                for (vi, ci) in v.iter().zip(c[j..].iter_mut()) {
                    *ci -= f * vi;
                }
            }
        }
        for i in 0..=j {
            r[(i, j)] = work[(i, j)];
        }
        // The rank check proper: the new diagonal entry against the column norm.
        if r[(j, j)].abs() < RANK_TOL * col_norms[j].max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient {
                column: j,
                pivot: r[(j, j)].abs(),
            });
        }
        hh.push(v);
    }

    // Accumulate the thin Q by applying the reflections to the first k_max
    // columns of the identity, in reverse order.
    let mut q = Mat::zeros(n, k_max);
    for j in 0..k_max {
        q[(j, j)] = 1.0;
        for l in (0..=j.min(k_max - 1)).rev() {
            let v = &hh[l];
            let vnorm2 = sq_norm(v);
            if vnorm2 == 0.0 {
                continue;
            }
            let c = q.col_mut(j);
            let s = dot(v, &c[l..]);
            let f = 2.0 * s / vnorm2;
            for (vi, ci) in v.iter().zip(c[l..].iter_mut()) {
                *ci -= f * vi;
            }
        }
    }

    // Canonicalize signs so diag(R) > 0; projections are invariant but the
    // factorization becomes unique.
    for j in 0..k_max {
        if r[(j, j)] < 0.0 {
            for l in j..k_max {
                r[(j, l)] = -r[(j, l)];
            }
            for x in q.col_mut(j) {
                *x = -*x;
            }
        }
    }

    Ok(NestedDesign {
        n,
        sizes: sizes.to_vec(),
        q,
        r,
    })
}

/// Orthonormal coordinates `d_j = q_jᵀ v` together with `‖v‖²`.
pub fn coords(design: &NestedDesign, v: &[f64]) -> Result<ProjectionCoefficients> {
    if v.len() != design.n {
        return Err(Error::Argument(format!(
            "vector length {} does not match sample count {}",
            v.len(),
            design.n
        )));
    }
    let d = design.q.tr_mul_vec(v);
    Ok(ProjectionCoefficients::new(d, sq_norm(v)))
}

/// `vᵀ P_m v` as a prefix sum of squared coordinates.
pub fn quad_form(design: &NestedDesign, c: &ProjectionCoefficients, m: usize) -> Result<f64> {
    design.check_model(m)?;
    Ok(c.prefix_sq[design.sizes[m - 1]])
}

/// `uᵀ P_m v` for two coordinate sets from the same design.
pub fn cross_form(
    design: &NestedDesign,
    c1: &ProjectionCoefficients,
    c2: &ProjectionCoefficients,
    m: usize,
) -> Result<f64> {
    design.check_model(m)?;
    if c1.d.len() != c2.d.len() {
        return Err(Error::Argument(format!(
            "coordinate sets come from different designs ({} vs {} coordinates)",
            c1.d.len(),
            c2.d.len()
        )));
    }
    let k = design.sizes[m - 1];
    Ok(dot(&c1.d[..k], &c2.d[..k]))
}

/// `σ̂² = (n − k_{M_n})⁻¹ yᵀ(I − P_{M_n})y`, clamped at zero.
pub fn sigma_hat(design: &NestedDesign, c_y: &ProjectionCoefficients) -> Result<f64> {
    let k = design.k_max();
    if design.n <= k {
        return Err(Error::Argument(format!(
            "need n > k_max for the variance estimate, got n = {}, k_max = {k}",
            design.n
        )));
    }
    let resid = c_y.sq_norm - c_y.prefix_sq[k];
    Ok(resid.max(0.0) / (design.n - k) as f64)
}

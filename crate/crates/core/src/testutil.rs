//! Dense reference computations used by the test suites and `verify`.
//! Everything here is deliberately independent of the prefix-sum fast path:
//! projections are materialized as dense matrices from the raw design.

use crate::mat::{dot, Mat};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

/// Dense projection `P = X_k (X_kᵀ X_k)⁻¹ X_kᵀ` onto the first `k` columns.
pub fn dense_projection(x: &Mat, k: usize) -> Mat {
    let xk = Mat::from_fn(x.rows, k, |i, j| x[(i, j)]);
    let gram = xk.tr_mul(&xk);
    // P v = X_k (gram⁻¹ (X_kᵀ v)); assemble densely column by column.
    let mut p = Mat::zeros(x.rows, x.rows);
    for j in 0..x.rows {
        let mut e = vec![0.0; x.rows];
        e[j] = 1.0;
        let xt_e = xk.tr_mul_vec(&e);
        let b = gram.solve(&xt_e);
        let col = xk.mul_vec(&b);
        p.col_mut(j).copy_from_slice(&col);
    }
    p
}

/// A uniform-ish point of the simplex (normalized exponentials).
pub fn random_simplex(r: &mut impl Rng, m: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..m).map(|_| -(r.gen::<f64>().max(1e-300)).ln()).collect();
    let s: f64 = w.iter().sum();
    for x in &mut w {
        *x /= s;
    }
    w
}

/// Dense evaluation of `‖(I − P(w)) y‖² + φ σ̂² wᵀK` from the raw design.
pub fn dense_criterion(x: &Mat, sizes: &[usize], y: &[f64], w: &[f64], phi: f64, s2hat: f64) -> f64 {
    let pwy = averaged_fit(x, sizes, y, w);
    let resid: f64 = y.iter().zip(&pwy).map(|(a, b)| (a - b) * (a - b)).sum();
    let penalty: f64 = w
        .iter()
        .zip(sizes)
        .map(|(&wm, &km)| wm * km as f64)
        .sum::<f64>();
    resid + phi * s2hat * penalty
}

/// Dense evaluation of `‖μ − P(w) y‖²`.
pub fn dense_loss(x: &Mat, sizes: &[usize], mu: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let pwy = averaged_fit(x, sizes, y, w);
    mu.iter().zip(&pwy).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Dense evaluation of `‖(I − P(w))μ‖² + σ² ΣΣ w_m w_l k_min(m,l)`.
pub fn dense_risk(x: &Mat, sizes: &[usize], mu: &[f64], w: &[f64], sigma2: f64) -> f64 {
    let pwmu = averaged_fit(x, sizes, mu, w);
    let bias: f64 = mu.iter().zip(&pwmu).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut var = 0.0;
    for (m, &wm) in w.iter().enumerate() {
        for (l, &wl) in w.iter().enumerate() {
            var += wm * wl * sizes[m.min(l)] as f64;
        }
    }
    bias + sigma2 * var
}

/// `P(w) v = Σ_m w_m P_m v` via dense projections.
pub fn averaged_fit(x: &Mat, sizes: &[usize], v: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (m, &wm) in w.iter().enumerate() {
        if wm == 0.0 {
            continue;
        }
        let p = dense_projection(x, sizes[m]);
        let pv = p.mul_vec(v);
        for (o, pvi) in out.iter_mut().zip(&pv) {
            *o += wm * pvi;
        }
    }
    out
}

/// Minimum of `f` over the lattice `H_n(N)` by exhaustive enumeration.
/// Returns `(best_w, best_value)`.
pub fn lattice_minimum(m: usize, n_grid: usize, mut f: impl FnMut(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut counts = vec![0usize; m];
    enumerate_compositions(n_grid, m, 0, &mut counts, &mut |c| {
        let w: Vec<f64> = c.iter().map(|&x| x as f64 / n_grid as f64).collect();
        let v = f(&w);
        if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
            best = Some((w, v));
        }
    });
    best.unwrap()
}

pub fn enumerate_compositions(
    remaining: usize,
    m: usize,
    idx: usize,
    counts: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if idx == m - 1 {
        counts[idx] = remaining;
        visit(counts);
        return;
    }
    for take in (0..=remaining).rev() {
        counts[idx] = take;
        enumerate_compositions(remaining - take, m, idx + 1, counts, visit);
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}

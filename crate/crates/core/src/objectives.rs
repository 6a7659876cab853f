//! The three weight objectives as separable quadratics in tail weights.
//!
//! With tail weights `t_m = Σ_{l≥m} w_l` (so `t_1 = 1 ≥ t_2 ≥ … ≥ t_M ≥ 0`),
//! the min-matrix structure of nested projections collapses each objective to
//! `f(t) = c0 + Σ_m (A_m t_m² + B_m t_m)`:
//!
//! * criterion:  `A_m = Δa_m`, `B_m = −2Δa_m + φσ̂²Δk_m`, `c0 = ‖y‖²`,
//! * loss:       `A_m = Δa_m`, `B_m = −2Δc_m`,            `c0 = ‖μ‖²`,
//! * risk:       `A_m = Δg_m + σ²Δk_m`, `B_m = −2Δg_m`,   `c0 = ‖μ‖²`,
//!
//! where `a_m = yᵀP_m y`, `g_m = μᵀP_m μ`, `c_m = μᵀP_m y`, `Δx_m = x_m − x_{m−1}`
//! with `x_0 = 0`. The rewrite follows from `ΣΣ w_m w_l x_min(m,l) = Σ Δx_m t_m²`
//! and `Σ w_m x_m = Σ Δx_m t_m`, both consequences of the nesting identity
//! `P_m P_l = P_min(m,l)`.

use crate::error::{Error, Result};
use crate::nested_projection::{cross_form, quad_form, NestedDesign, ProjectionCoefficients};

/// Which objective a `SeparableSimplexObjective` represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Criterion,
    Loss,
    Risk,
}

/// `f(t) = c0 + Σ_m (A_m t_m² + B_m t_m)` over antitonic tail weights.
#[derive(Debug, Clone)]
pub struct SeparableSimplexObjective {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c0: f64,
    pub kind: ObjectiveKind,
}

impl SeparableSimplexObjective {
    pub fn num_models(&self) -> usize {
        self.a.len()
    }

    /// Evaluate at a weight vector through the tail transform.
    pub fn eval_weights(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.a.len());
        let mut f = self.c0;
        let mut tail = 0.0;
        for m in (0..w.len()).rev() {
            tail += w[m];
            f += self.a[m] * tail * tail + self.b[m] * tail;
        }
        f
    }

    /// Evaluate directly at tail weights `t` (antitonic, `t_1 = 1`).
    pub fn eval_tails(&self, t: &[f64]) -> f64 {
        assert_eq!(t.len(), self.a.len());
        let mut f = self.c0;
        for ((&a, &b), &tm) in self.a.iter().zip(&self.b).zip(t) {
            f += a * tm * tm + b * tm;
        }
        f
    }

    /// Gradient of the w-space objective: `∂f/∂w_m = Σ_{j≤m} (2A_j t_j + B_j)`.
    pub fn gradient_weights(&self, w: &[f64]) -> Vec<f64> {
        let m = w.len();
        let mut t = vec![0.0; m];
        let mut tail = 0.0;
        for i in (0..m).rev() {
            tail += w[i];
            t[i] = tail;
        }
        let mut grad = vec![0.0; m];
        let mut acc = 0.0;
        for j in 0..m {
            acc += 2.0 * self.a[j] * t[j] + self.b[j];
            grad[j] = acc;
        }
        grad
    }

    /// A scale for relative comparisons.
    pub fn scale(&self) -> f64 {
        let mut s = self.c0.abs();
        for (&a, &b) in self.a.iter().zip(&self.b) {
            s = s.max(a.abs()).max(b.abs());
        }
        s.max(1.0)
    }
}

/// The weight set a solved vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSet {
    Simplex,
    Discrete { n_grid: usize },
    Restricted { delta: f64, tau0: f64, m0: usize },
}

/// A point of the simplex (or a restricted variant) with provenance.
#[derive(Debug, Clone)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub set_tag: WeightSet,
}

impl WeightVector {
    pub fn new(w: Vec<f64>, set_tag: WeightSet) -> Self {
        WeightVector { w, set_tag }
    }

    /// Check the invariants of the tagged weight set at `n` observations.
    pub fn check(&self, n: usize) -> Result<()> {
        let sum: f64 = self.w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("weights sum to {sum}, not 1")));
        }
        if self.w.iter().any(|&x| x < 0.0) {
            return Err(Error::Argument("negative weight".into()));
        }
        match self.set_tag {
            WeightSet::Simplex => {}
            WeightSet::Discrete { n_grid } => {
                for &wm in &self.w {
                    let scaled = wm * n_grid as f64;
                    if (scaled - scaled.round()).abs() > 1e-9 {
                        return Err(Error::Argument(format!(
                            "weight {wm} is not a multiple of 1/{n_grid}"
                        )));
                    }
                }
            }
            WeightSet::Restricted { delta, tau0, m0 } => {
                let head: f64 = self.w[..m0].iter().sum();
                let bound = delta * (n as f64).powf(-tau0);
                if head > 1e-12 && head < bound - 1e-12 {
                    return Err(Error::Argument(format!(
                        "under-fitted mass {head} is neither 0 nor >= {bound}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn deltas_from_prefix(design: &NestedDesign, c: &ProjectionCoefficients) -> Result<Vec<f64>> {
    let m_n = design.num_models();
    let mut out = Vec::with_capacity(m_n);
    let mut prev = 0.0;
    for m in 1..=m_n {
        let cur = quad_form(design, c, m)?;
        out.push((cur - prev).max(0.0));
        prev = cur;
    }
    Ok(out)
}

fn size_deltas(design: &NestedDesign) -> Vec<f64> {
    let mut out = Vec::with_capacity(design.num_models());
    let mut prev = 0usize;
    for &k in design.sizes() {
        out.push((k - prev) as f64);
        prev = k;
    }
    out
}

/// `G_n(w) = ‖(I−P(w))y‖² + φ σ̂² wᵀK` in tail coordinates.
pub fn build_criterion(
    design: &NestedDesign,
    c_y: &ProjectionCoefficients,
    phi: f64,
    s2hat: f64,
) -> Result<SeparableSimplexObjective> {
    if phi < 0.0 || s2hat < 0.0 || !phi.is_finite() || !s2hat.is_finite() {
        return Err(Error::Argument(format!(
            "penalty factor and variance estimate must be nonnegative, got phi = {phi}, s2hat = {s2hat}"
        )));
    }
    let da = deltas_from_prefix(design, c_y)?;
    let dk = size_deltas(design);
    let b = da
        .iter()
        .zip(&dk)
        .map(|(&dam, &dkm)| -2.0 * dam + phi * s2hat * dkm)
        .collect();
    Ok(SeparableSimplexObjective {
        a: da,
        b,
        c0: c_y.sq_norm,
        kind: ObjectiveKind::Criterion,
    })
}

/// `L_n(w) = ‖μ − P(w)y‖²` in tail coordinates.
pub fn build_loss(
    design: &NestedDesign,
    c_y: &ProjectionCoefficients,
    c_mu: &ProjectionCoefficients,
) -> Result<SeparableSimplexObjective> {
    let da = deltas_from_prefix(design, c_y)?;
    let m_n = design.num_models();
    let mut b = Vec::with_capacity(m_n);
    let mut prev = 0.0;
    for m in 1..=m_n {
        let cur = cross_form(design, c_mu, c_y, m)?;
        b.push(-2.0 * (cur - prev));
        prev = cur;
    }
    Ok(SeparableSimplexObjective {
        a: da,
        b,
        c0: c_mu.sq_norm,
        kind: ObjectiveKind::Loss,
    })
}

/// `R_n(w) = ‖(I−P(w))μ‖² + σ² ΣΣ w_m w_l k_min(m,l)` in tail coordinates.
pub fn build_risk(
    design: &NestedDesign,
    c_mu: &ProjectionCoefficients,
    sigma2: f64,
) -> Result<SeparableSimplexObjective> {
    if !(sigma2 > 0.0) {
        return Err(Error::Argument(format!(
            "true error variance must be positive, got {sigma2}"
        )));
    }
    let dg = deltas_from_prefix(design, c_mu)?;
    let dk = size_deltas(design);
    let a = dg
        .iter()
        .zip(&dk)
        .map(|(&dgm, &dkm)| dgm + sigma2 * dkm)
        .collect();
    let b = dg.iter().map(|&dgm| -2.0 * dgm).collect();
    Ok(SeparableSimplexObjective {
        a,
        b,
        c0: c_mu.sq_norm,
        kind: ObjectiveKind::Risk,
    })
}

fn check_m0(design: &NestedDesign, m0: usize) -> Result<()> {
    if m0 < 1 || m0 + 1 >= design.num_models() {
        return Err(Error::Argument(format!(
            "need 1 <= M0 < M_n - 1, got M0 = {m0}, M_n = {}",
            design.num_models()
        )));
    }
    Ok(())
}

/// Under/over-fitted correction factor `w_m² + 2 w_m Σ_{l<m} w_l`.
fn under_factor(w: &[f64], m: usize) -> f64 {
    let head: f64 = w[..m].iter().sum();
    w[m] * w[m] + 2.0 * w[m] * head
}

/// Over-fitted correction factor `w_m² + 2 w_m Σ_{l>m} w_l`.
fn over_factor(w: &[f64], m: usize) -> f64 {
    let tail: f64 = w[m + 1..].iter().sum();
    w[m] * w[m] + 2.0 * w[m] * tail
}

/// Term-by-term evaluation of the loss identity
/// `L_n(w) = eᵀP_{M0+1}e + Σ_{m≤M0}(w_m²+2w_mΣ_{l<m}w_l) yᵀ(P_{M0+1}−P_m)y`
/// `        − 2Σ_{m≤M0} w_m yᵀ(P_{M0+1}−P_m)e + Σ_{m>M0+1}(w_m²+2w_mΣ_{l>m}w_l) eᵀ(P_m−P_{M0+1})e`.
pub fn loss_decomposition(
    design: &NestedDesign,
    c_y: &ProjectionCoefficients,
    c_e: &ProjectionCoefficients,
    m0: usize,
    w: &[f64],
) -> Result<f64> {
    check_m0(design, m0)?;
    if w.len() != design.num_models() {
        return Err(Error::Argument("weight length mismatch".into()));
    }
    let true_m = m0 + 1;
    let e_p_true = quad_form(design, c_e, true_m)?;
    let y_p_true = quad_form(design, c_y, true_m)?;
    let ye_p_true = cross_form(design, c_y, c_e, true_m)?;
    let mut total = e_p_true;
    for m in 1..=m0 {
        let yy = y_p_true - quad_form(design, c_y, m)?;
        let ye = ye_p_true - cross_form(design, c_y, c_e, m)?;
        total += under_factor(w, m - 1) * yy - 2.0 * w[m - 1] * ye;
    }
    for m in (m0 + 2)..=design.num_models() {
        let ee = quad_form(design, c_e, m)? - e_p_true;
        total += over_factor(w, m - 1) * ee;
    }
    Ok(total)
}

/// Term-by-term evaluation of the risk identity
/// `R_n(w) = σ²k_{M0+1} + Σ_{m≤M0}(w_m²+2w_mΣ_{l<m}w_l){μᵀ(P_{M0+1}−P_m)μ + σ²(k_{M0+1}−k_m)}`
/// `        − 2σ²Σ_{m≤M0} w_m (k_{M0+1}−k_m) + σ²Σ_{m>M0+1}(w_m²+2w_mΣ_{l>m}w_l)(k_m−k_{M0+1})`.
pub fn risk_decomposition(
    design: &NestedDesign,
    c_mu: &ProjectionCoefficients,
    sigma2: f64,
    m0: usize,
    w: &[f64],
) -> Result<f64> {
    check_m0(design, m0)?;
    if w.len() != design.num_models() {
        return Err(Error::Argument("weight length mismatch".into()));
    }
    let true_m = m0 + 1;
    let k_true = design.sizes()[true_m - 1] as f64;
    let mu_p_true = quad_form(design, c_mu, true_m)?;
    let mut total = sigma2 * k_true;
    for m in 1..=m0 {
        let km = design.sizes()[m - 1] as f64;
        let gap = mu_p_true - quad_form(design, c_mu, m)?;
        total += under_factor(w, m - 1) * (gap + sigma2 * (k_true - km))
            - 2.0 * sigma2 * w[m - 1] * (k_true - km);
    }
    for m in (m0 + 2)..=design.num_models() {
        let km = design.sizes()[m - 1] as f64;
        total += sigma2 * over_factor(w, m - 1) * (km - k_true);
    }
    Ok(total)
}

/// `η_n = Σ β_j²` over the window `j ∈ (k_{M0}, k_{M0+1}]`.
pub fn eta(beta: &[f64], sizes: &[usize], m0: usize) -> Result<f64> {
    if m0 < 1 || m0 >= sizes.len() {
        return Err(Error::Argument(format!(
            "need 1 <= M0 < M_n for eta, got M0 = {m0}, M_n = {}",
            sizes.len()
        )));
    }
    let lo = sizes[m0 - 1];
    let hi = sizes[m0];
    if hi > beta.len() {
        return Err(Error::Argument(format!(
            "coefficient vector (len {}) shorter than k_(M0+1) = {hi}",
            beta.len()
        )));
    }
    Ok(beta[lo..hi].iter().map(|b| b * b).sum())
}

/// Diagnostic quantities attached to an instance and its true-model index.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// Smallest eigenvalue of `n⁻¹X_{M0+1}ᵀX_{M0+1}`.
    pub kappa0: f64,
    /// `ξ_n = inf over the simplex of R_n`.
    pub xi_n: f64,
    /// `ψ(K)` with the `P_0 = 0` convention.
    pub psi_k: f64,
    /// Unit vector from the plug-in covariance, `‖v‖ = 1`.
    pub v: Vec<f64>,
}

/// `κ_0`, `ξ_n`, `ψ(K)`, and the unit vector `v` from the plug-in `n⁻¹XᵀX`.
pub fn diagnostics(
    design: &NestedDesign,
    c_mu: &ProjectionCoefficients,
    sigma2: f64,
    m0: usize,
    beta: &[f64],
) -> Result<Diagnostics> {
    check_m0(design, m0)?;
    let n = design.n() as f64;
    let k_true = design.sizes()[m0];
    let k_under = design.sizes()[m0 - 1];

    // Q̂ = n⁻¹ XᵀX restricted to the true model; XᵀX = RᵀR.
    let r_lead = crate::mat::Mat::from_fn(k_true, k_true, |i, j| design.r()[(i, j)]);
    let q_hat = {
        let mut g = r_lead.tr_mul(&r_lead);
        for v in &mut g.data {
            *v /= n;
        }
        g
    };
    let (eigvals, eigvecs) = crate::mat::jacobi_eigen(&q_hat, 1e-10);
    let kappa0 = eigvals[0];

    // ξ_n by the exact solver.
    let risk = build_risk(design, c_mu, sigma2)?;
    let xi_n = crate::simplex_solver::solve_simplex(&risk)?.objective_value;

    // ψ(K): min(M_n, 1 + Σ (k_{m+1}−k_m)/(4k_m) + Σ_{m≤M0} μᵀ(P_m−P_{m−1})μ / 4μᵀ(P_{M0+1}−P_m)μ).
    let m_n = design.num_models();
    let sizes = design.sizes();
    let mut inner = 1.0;
    for m in 0..m_n - 1 {
        inner += (sizes[m + 1] - sizes[m]) as f64 / (4.0 * sizes[m] as f64);
    }
    let mu_p_true = quad_form(design, c_mu, m0 + 1)?;
    let mut prev = 0.0;
    for m in 1..=m0 {
        let cur = quad_form(design, c_mu, m)?;
        let denom = mu_p_true - cur;
        if denom > 0.0 {
            inner += (cur - prev) / (4.0 * denom);
        } else {
            inner = f64::INFINITY;
        }
        prev = cur;
    }
    let log_m = 1.0 + (m_n as f64).ln();
    let psi_k = (m_n as f64).min(inner) * log_m * log_m;

    // v from the plug-in covariance: partition Q̂ at k_{M0},
    // S = Q22 − Q21 Q11⁻¹ Q12, v ∝ Q̂^{−1/2} (0; S β^c).
    let signal = mu_p_true - quad_form(design, c_mu, m0)?;
    if signal <= 1e-12 * c_mu.sq_norm.max(1.0) {
        return Err(Error::DegenerateTruth);
    }
    let gap = k_true - k_under;
    if beta.len() < k_true {
        return Err(Error::Argument(format!(
            "coefficient vector (len {}) shorter than k_(M0+1) = {k_true}",
            beta.len()
        )));
    }
    let beta_c = &beta[k_under..k_true];
    let q11 = crate::mat::Mat::from_fn(k_under, k_under, |i, j| q_hat[(i, j)]);
    let q12 = crate::mat::Mat::from_fn(k_under, gap, |i, j| q_hat[(i, k_under + j)]);
    let q22 = crate::mat::Mat::from_fn(gap, gap, |i, j| q_hat[(k_under + i, k_under + j)]);
    // S β^c = Q22 β^c − Q21 Q11⁻¹ Q12 β^c (Q21 = Q12ᵀ).
    let q12_bc = q12.mul_vec(beta_c);
    let q11_inv_q12_bc = q11.solve(&q12_bc);
    let mut s_bc = q22.mul_vec(beta_c);
    for (i, s) in s_bc.iter_mut().enumerate() {
        let mut corr = 0.0;
        for l in 0..k_under {
            corr += q12[(l, i)] * q11_inv_q12_bc[l];
        }
        *s -= corr;
    }
    let denom: f64 = beta_c.iter().zip(&s_bc).map(|(b, s)| b * s).sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateTruth);
    }
    let mut padded = vec![0.0; k_true];
    padded[k_under..].copy_from_slice(&s_bc);
    // Q̂^{−1/2} via the eigendecomposition computed above.
    let proj = eigvecs.tr_mul_vec(&padded);
    let scaled: Vec<f64> = proj
        .iter()
        .zip(&eigvals)
        .map(|(p, &ev)| p / ev.max(1e-300).sqrt())
        .collect();
    let mut v = eigvecs.mul_vec(&scaled);
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    Ok(Diagnostics {
        kappa0,
        xi_n,
        psi_k,
        v,
    })
}

/// Both sides of the signal lower bound
/// `μᵀ(P_{M0+1}−P_m)μ ≥ κ_0 n Σ β_j²` over `j ∈ (k_m, k_{M0+1}]`.
pub fn lemma_gap(
    design: &NestedDesign,
    c_mu: &ProjectionCoefficients,
    beta: &[f64],
    m0: usize,
    m: usize,
) -> Result<(f64, f64)> {
    check_m0(design, m0)?;
    if m < 1 || m > m0 {
        return Err(Error::Argument(format!("need 1 <= m <= M0, got m = {m}")));
    }
    let lhs = quad_form(design, c_mu, m0 + 1)? - quad_form(design, c_mu, m)?;
    let k_true = design.sizes()[m0];
    let km = design.sizes()[m - 1];
    let window_ss: f64 = beta[km..k_true.min(beta.len())].iter().map(|b| b * b).sum();
    let n = design.n() as f64;
    let r_lead = crate::mat::Mat::from_fn(k_true, k_true, |i, j| design.r()[(i, j)]);
    let mut g = r_lead.tr_mul(&r_lead);
    for v in &mut g.data {
        *v /= n;
    }
    let (eigvals, _) = crate::mat::jacobi_eigen(&g, 1e-10);
    let rhs = eigvals[0] * n * window_ss;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Mat;
    use crate::nested_projection::{coords, factorize, sigma_hat};
    use crate::testutil::*;
    use rand::Rng;

    struct Instance {
        x: Mat,
        design: crate::nested_projection::NestedDesign,
        mu: Vec<f64>,
        y: Vec<f64>,
        e: Vec<f64>,
    }

    fn instance(n: usize, sizes: &[usize], m0: usize, seed: u64) -> Instance {
        let mut r = rng(seed);
        let k = *sizes.last().unwrap();
        let x = Mat::from_fn(n, k, |_, _| r.gen::<f64>() * 2.0 - 1.0);
        let k_true = sizes[m0];
        let mut beta = vec![0.0; k];
        for b in beta.iter_mut().take(k_true) {
            *b = r.gen::<f64>() * 2.0 - 0.5;
        }
        beta[k_true - 1] += 1.0; // keep the window signal nonzero
        let mu = x.mul_vec(&beta);
        let e = gaussian_vec(&mut r, n);
        let y: Vec<f64> = mu.iter().zip(&e).map(|(a, b)| a + b).collect();
        let design = factorize(&x, sizes).unwrap();
        Instance { x, design, mu, y, e }
    }

    #[test]
    fn criterion_matches_dense() {
        let inst = instance(40, &[1, 2, 3, 4], 1, 101);
        let c_y = coords(&inst.design, &inst.y).unwrap();
        let s2 = sigma_hat(&inst.design, &c_y).unwrap();
        for &phi in &[0.0, 2.0, (40f64).ln()] {
            let obj = build_criterion(&inst.design, &c_y, phi, s2).unwrap();
            let mut r = rng(103);
            for _ in 0..20 {
                let w = random_simplex(&mut r, 4);
                let dense = dense_criterion(&inst.x, inst.design.sizes(), &inst.y, &w, phi, s2);
                let fast = obj.eval_weights(&w);
                assert!(
                    (dense - fast).abs() <= 1e-9 * dense.abs().max(1.0),
                    "phi={phi} dense={dense} fast={fast}"
                );
            }
        }
    }

    #[test]
    fn criterion_vertex_values() {
        let inst = instance(40, &[1, 2, 3, 4], 1, 107);
        let c_y = coords(&inst.design, &inst.y).unwrap();
        let obj = build_criterion(&inst.design, &c_y, 0.0, 1.0).unwrap();
        // phi = 0, w = last vertex: f = ‖y‖² − yᵀP_max y.
        let mut w = vec![0.0; 4];
        w[3] = 1.0;
        let expect = c_y.sq_norm - crate::nested_projection::quad_form(&inst.design, &c_y, 4).unwrap();
        assert!((obj.eval_weights(&w) - expect).abs() <= 1e-9 * expect.abs().max(1.0));
    }

    #[test]
    fn loss_matches_dense() {
        let inst = instance(30, &[2, 3, 5, 6], 1, 109);
        let c_y = coords(&inst.design, &inst.y).unwrap();
        let c_mu = coords(&inst.design, &inst.mu).unwrap();
        let obj = build_loss(&inst.design, &c_y, &c_mu).unwrap();
        let mut r = rng(113);
        for _ in 0..20 {
            let w = random_simplex(&mut r, 4);
            let dense = dense_loss(&inst.x, inst.design.sizes(), &inst.mu, &inst.y, &w);
            let fast = obj.eval_weights(&w);
            assert!((dense - fast).abs() <= 1e-9 * dense.abs().max(1.0));
        }
    }

    #[test]
    fn loss_exact_fit_cases() {
        let inst = instance(30, &[1, 2, 4], 1, 127);
        // e = 0 (y = mu): any weight on models >= M0+1 gives zero loss.
        let c_mu = coords(&inst.design, &inst.mu).unwrap();
        let obj = build_loss(&inst.design, &c_mu, &c_mu).unwrap();
        let w = vec![0.0, 0.3, 0.7];
        assert!(obj.eval_weights(&w).abs() <= 1e-8 * c_mu.sq_norm);
    }

    #[test]
    fn risk_matches_dense_and_vertex() {
        let inst = instance(30, &[1, 2, 4, 5], 1, 131);
        let sigma2 = 1.7;
        let c_mu = coords(&inst.design, &inst.mu).unwrap();
        let obj = build_risk(&inst.design, &c_mu, sigma2).unwrap();
        let mut r = rng(137);
        for _ in 0..20 {
            let w = random_simplex(&mut r, 4);
            let dense = dense_risk(&inst.x, inst.design.sizes(), &inst.mu, &w, sigma2);
            let fast = obj.eval_weights(&w);
            assert!((dense - fast).abs() <= 1e-9 * dense.abs().max(1.0));
        }
        // R at the true-model vertex is σ²k_{M0+1}.
        let mut w0 = vec![0.0; 4];
        w0[1] = 1.0;
        let expect = sigma2 * inst.design.sizes()[1] as f64;
        assert!((obj.eval_weights(&w0) - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn risk_matches_simulated_loss() {
        // Averaged dense loss over fresh error draws approaches the risk.
        let inst = instance(25, &[1, 2, 4], 1, 139);
        let sigma2 = 0.8;
        let c_mu = coords(&inst.design, &inst.mu).unwrap();
        let obj = build_risk(&inst.design, &c_mu, sigma2).unwrap();
        let mut r = rng(149);
        let w = random_simplex(&mut r, 3);
        let reps = 100_000usize;
        let mut vals = Vec::with_capacity(reps);
        for _ in 0..reps {
            let e: Vec<f64> = gaussian_vec(&mut r, 25)
                .into_iter()
                .map(|z| z * sigma2.sqrt())
                .collect();
            let y: Vec<f64> = inst.mu.iter().zip(&e).map(|(a, b)| a + b).collect();
            let c_y = coords(&inst.design, &y).unwrap();
            let loss = build_loss(&inst.design, &c_y, &c_mu).unwrap();
            vals.push(loss.eval_weights(&w));
        }
        let mean: f64 = vals.iter().sum::<f64>() / reps as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        let risk = obj.eval_weights(&w);
        assert!(
            (mean - risk).abs() <= 3.0 * se,
            "simulated {mean} vs risk {risk}, se {se}"
        );
    }

    #[test]
    fn decompositions_match_direct_objectives() {
        let inst = instance(35, &[1, 2, 3, 5, 6], 2, 151);
        let c_y = coords(&inst.design, &inst.y).unwrap();
        let c_mu = coords(&inst.design, &inst.mu).unwrap();
        let c_e = coords(&inst.design, &inst.e).unwrap();
        let sigma2 = 1.3;
        let loss = build_loss(&inst.design, &c_y, &c_mu).unwrap();
        let risk = build_risk(&inst.design, &c_mu, sigma2).unwrap();
        let mut r = rng(157);
        for _ in 0..30 {
            let w = random_simplex(&mut r, 5);
            let l_direct = loss.eval_weights(&w);
            let l_decomp = loss_decomposition(&inst.design, &c_y, &c_e, 2, &w).unwrap();
            assert!((l_direct - l_decomp).abs() <= 1e-8 * l_direct.abs().max(1.0));
            let r_direct = risk.eval_weights(&w);
            let r_decomp = risk_decomposition(&inst.design, &c_mu, sigma2, 2, &w).unwrap();
            assert!((r_direct - r_decomp).abs() <= 1e-8 * r_direct.abs().max(1.0));
        }
        // At the true-model vertex the corrections vanish.
        let mut w0 = vec![0.0; 5];
        w0[2] = 1.0;
        let l0 = loss_decomposition(&inst.design, &c_y, &c_e, 2, &w0).unwrap();
        let e_p = crate::nested_projection::quad_form(&inst.design, &c_e, 3).unwrap();
        assert!((l0 - e_p).abs() <= 1e-10 * e_p.max(1.0));
        let r0 = risk_decomposition(&inst.design, &c_mu, sigma2, 2, &w0).unwrap();
        let expect = sigma2 * inst.design.sizes()[2] as f64;
        assert!((r0 - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn eta_window_sums() {
        // Example-2-style configuration.
        let beta = [1.0, -2.0, 3.0, 1.5, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let sizes: Vec<usize> = (1..=11).collect();
        let oracle: f64 = beta[4..5].iter().map(|b| b * b).sum();
        assert_eq!(eta(&beta, &sizes, 4).unwrap(), oracle);
        assert_eq!(eta(&beta, &sizes, 4).unwrap(), 16.0);
        // Zero window flags a misspecified M0 by returning 0.
        assert_eq!(eta(&beta, &sizes, 6).unwrap(), 0.0);
    }

    #[test]
    fn diagnostics_orthonormal_unit_vector() {
        // Orthonormal covariates with a single-coefficient window: v = ±e_last.
        let n = 50;
        let x = Mat::from_fn(n, 3, |i, j| if i == j { (n as f64).sqrt() } else { 0.0 });
        let design = factorize(&x, &[1, 2, 3]).unwrap();
        let beta = [0.5, 0.8, 0.0];
        let mu = x.mul_vec(&beta);
        let c_mu = coords(&design, &mu).unwrap();
        let d = diagnostics(&design, &c_mu, 1.0, 1, &beta).unwrap();
        assert!((d.v[0]).abs() < 1e-8);
        assert!((d.v[1].abs() - 1.0).abs() < 1e-8);
        assert!((d.kappa0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn diagnostics_kappa0_matches_dense_eigensolve() {
        let inst = instance(60, &[1, 3, 4, 6], 1, 163);
        let c_mu = coords(&inst.design, &inst.mu).unwrap();
        let d = diagnostics(&inst.design, &c_mu, 1.0, 1, &dense_beta(&inst)).unwrap();
        // Dense oracle: eigenvalues of n⁻¹ X_{M0+1}ᵀ X_{M0+1} from the raw design.
        let k_true = inst.design.sizes()[1];
        let xk = Mat::from_fn(60, k_true, |i, j| inst.x[(i, j)]);
        let mut g = xk.tr_mul(&xk);
        for v in &mut g.data {
            *v /= 60.0;
        }
        let (vals, _) = crate::mat::jacobi_eigen(&g, 1e-12);
        assert!((d.kappa0 - vals[0]).abs() <= 1e-8 * vals[0].abs().max(1.0));
        assert!(d.xi_n > 0.0);
    }

    fn dense_beta(inst: &Instance) -> Vec<f64> {
        // Recover the coefficients of mu in the full design by least squares.
        let gram = inst.x.tr_mul(&inst.x);
        let rhs = inst.x.tr_mul_vec(&inst.mu);
        gram.solve(&rhs)
    }

    #[test]
    fn psi_k_single_model_convention() {
        // M_n = 1 cannot host an M0; check the formula directly instead.
        let m_n = 1f64;
        let inner: f64 = 1.0;
        let log_m = 1.0 + m_n.ln();
        assert_eq!(m_n.min(inner) * log_m * log_m, 1.0);
    }

    #[test]
    fn lemma_gap_inequality_sweeps() {
        for seed in 0..100 {
            let inst = instance(40, &[1, 2, 4, 5], 2, 1000 + seed);
            let c_mu = coords(&inst.design, &inst.mu).unwrap();
            let beta = dense_beta(&inst);
            for m in 1..=2 {
                let (lhs, rhs) = lemma_gap(&inst.design, &c_mu, &beta, 2, m).unwrap();
                assert!(
                    lhs >= rhs - 1e-8 * lhs.abs().max(1.0),
                    "seed {seed} m {m}: lhs {lhs} rhs {rhs}"
                );
            }
        }
    }

    #[test]
    fn lemma_gap_zero_window() {
        let inst = instance(40, &[1, 2, 4, 5], 2, 167);
        let c_mu = coords(&inst.design, &inst.mu).unwrap();
        let beta = vec![0.0; 5];
        let (_lhs, rhs) = lemma_gap(&inst.design, &c_mu, &beta, 2, 1).unwrap();
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn weight_vector_checks() {
        let ok = WeightVector::new(vec![0.5, 0.5], WeightSet::Simplex);
        assert!(ok.check(100).is_ok());
        let bad = WeightVector::new(vec![0.6, 0.5], WeightSet::Simplex);
        assert!(bad.check(100).is_err());
        let disc = WeightVector::new(vec![0.5, 0.5], WeightSet::Discrete { n_grid: 2 });
        assert!(disc.check(100).is_ok());
        let disc_bad = WeightVector::new(vec![0.3, 0.7], WeightSet::Discrete { n_grid: 2 });
        assert!(disc_bad.check(100).is_err());
        let restr = WeightVector::new(
            vec![0.0, 1.0, 0.0],
            WeightSet::Restricted { delta: 0.1, tau0: 0.25, m0: 1 },
        );
        assert!(restr.check(100).is_ok());
        let restr_bad = WeightVector::new(
            vec![1e-4, 1.0 - 1e-4, 0.0],
            WeightSet::Restricted { delta: 0.1, tau0: 0.25, m0: 1 },
        );
        assert!(restr_bad.check(100).is_err());
    }

    #[test]
    fn argument_errors() {
        let inst = instance(30, &[1, 2, 3], 1, 173);
        let c_y = coords(&inst.design, &inst.y).unwrap();
        assert!(build_criterion(&inst.design, &c_y, -1.0, 1.0).is_err());
        assert!(build_criterion(&inst.design, &c_y, 2.0, -0.5).is_err());
        let c_mu = coords(&inst.design, &inst.mu).unwrap();
        assert!(build_risk(&inst.design, &c_mu, 0.0).is_err());
        let c_e = coords(&inst.design, &inst.e).unwrap();
        assert!(loss_decomposition(&inst.design, &c_y, &c_e, 2, &[0.5, 0.5, 0.0]).is_err());
    }
}

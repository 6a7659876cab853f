//! Exact and oracle minimizers over the simplex and its variants.
//!
//! In tail coordinates every objective is a separable quadratic under the
//! chain constraint `1 = t_1 ≥ t_2 ≥ … ≥ t_M ≥ 0`, so the exact minimizer is
//! a weighted antitonic regression of the per-coordinate targets
//! `t̂_m = −B_m/(2A_m)` solved by pool-adjacent-violators in O(M). A dense
//! projected-gradient QP in w-space serves as an independent oracle, and the
//! discrete and restricted weight sets get exact enumeration and a two-phase
//! reduction respectively.

use crate::error::{Error, Result};
use crate::objectives::{SeparableSimplexObjective, WeightSet, WeightVector};

/// Weights below this are snapped to zero so events like `Pr(ŵ_m = 0)` are
/// well defined at machine precision.
pub const SNAP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Isotonic,
    GenericQp,
    Enumeration,
    RestrictedTwoPhase,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub weights: WeightVector,
    pub objective_value: f64,
    pub method: Method,
    pub kkt_residual: f64,
    /// Set when a restricted solve could only use the all-true phase because
    /// the mass bound `δ n^{−τ0}` is infeasible.
    pub warning: Option<String>,
}

/// Weighted antitonic (nonincreasing) regression by pool-adjacent-violators.
/// Zero-weight coordinates adopt their pooled neighbors.
fn pava_antitonic(targets: &[f64], weights: &[f64]) -> Vec<f64> {
    let n = targets.len();
    // Blocks of (value, weight, count), merged while increasing.
    let mut vals: Vec<f64> = Vec::with_capacity(n);
    let mut wts: Vec<f64> = Vec::with_capacity(n);
    let mut cnt: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        vals.push(targets[i]);
        wts.push(weights[i]);
        cnt.push(1);
        // Antitonic: each block value must be <= the previous block's value.
        while vals.len() > 1 {
            let l = vals.len();
            if vals[l - 1] <= vals[l - 2] {
                break;
            }
            let w_new = wts[l - 1] + wts[l - 2];
            let v_new = if w_new > 0.0 {
                (vals[l - 1] * wts[l - 1] + vals[l - 2] * wts[l - 2]) / w_new
            } else {
                // Zero curvature on both blocks: value is arbitrary, keep the max
                // so the chain constraint stays satisfiable.
                vals[l - 1].max(vals[l - 2])
            };
            vals[l - 2] = v_new;
            wts[l - 2] = w_new;
            cnt[l - 2] += cnt[l - 1];
            vals.pop();
            wts.pop();
            cnt.pop();
        }
    }
    let mut out = Vec::with_capacity(n);
    for (v, c) in vals.iter().zip(&cnt) {
        out.extend(std::iter::repeat(*v).take(*c));
    }
    out
}

fn weights_from_tails(t: &[f64]) -> Vec<f64> {
    let m = t.len();
    let mut w = Vec::with_capacity(m);
    for i in 0..m {
        let next = if i + 1 < m { t[i + 1] } else { 0.0 };
        let wi = t[i] - next;
        w.push(if wi.abs() <= SNAP_TOL { 0.0 } else { wi.max(0.0) });
    }
    let s: f64 = w.iter().sum();
    for x in &mut w {
        *x /= s;
    }
    w
}

/// KKT residual in w-space: with `λ = min_m ∇_m f`, active coordinates must
/// have `∇_m f = λ`.
fn kkt_residual(obj: &SeparableSimplexObjective, w: &[f64]) -> f64 {
    let grad = obj.gradient_weights(w);
    let lambda = grad.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut res = 0.0f64;
    for (&wm, &g) in w.iter().zip(&grad) {
        if wm > 0.0 {
            res = res.max(g - lambda);
        }
    }
    res / obj.scale()
}

/// Exact global minimizer over the simplex via tail-space antitonic regression.
pub fn solve_simplex(obj: &SeparableSimplexObjective) -> Result<SolveReport> {
    let m = obj.num_models();
    if m == 0 {
        return Err(Error::Argument("objective has no models".into()));
    }
    if m == 1 {
        let weights = WeightVector::new(vec![1.0], WeightSet::Simplex);
        let objective_value = obj.eval_weights(&weights.w);
        return Ok(SolveReport {
            weights,
            objective_value,
            method: Method::Isotonic,
            kkt_residual: 0.0,
            warning: None,
        });
    }
    // The isotonic path needs strictly positive curvature on the free
    // coordinates (targets −B/2A are otherwise undefined); tiny positive A
    // is fine, since PAVA only ever uses the products A·t̂ = −B/2. Route to
    // the generic QP only for genuinely degenerate instances.
    if obj.a.iter().skip(1).any(|&a| !(a > 0.0)) {
        let mut rep = solve_generic_qp(obj, None)?;
        rep.method = Method::GenericQp;
        return Ok(rep);
    }
    solve_chain(obj).map(|(w, value, kkt)| SolveReport {
        weights: WeightVector::new(w, WeightSet::Simplex),
        objective_value: value,
        method: Method::Isotonic,
        kkt_residual: kkt,
        warning: None,
    })
}

fn chain_targets(obj: &SeparableSimplexObjective) -> (Vec<f64>, Vec<f64>) {
    let m = obj.num_models();
    // Coordinate targets for m >= 2; t_1 is pinned at 1.
    let mut targets = Vec::with_capacity(m - 1);
    let mut weights = Vec::with_capacity(m - 1);
    for i in 1..m {
        let a = obj.a[i];
        let t_hat = if a > 0.0 { -obj.b[i] / (2.0 * a) } else { 0.0 };
        // Box clipping happens after the antitonic fit (clipping to a constant
        // box commutes with pool-adjacent-violators, clamping targets does not).
        targets.push(t_hat);
        weights.push(a.max(0.0));
    }
    (targets, weights)
}

/// Unconstrained (simplex-only) PAVA solve in the tail chain.
fn solve_chain(obj: &SeparableSimplexObjective) -> Result<(Vec<f64>, f64, f64)> {
    let (targets, weights) = chain_targets(obj);
    let fitted = pava_antitonic(&targets, &weights);
    let mut t = Vec::with_capacity(obj.num_models());
    t.push(1.0);
    for (i, &v) in fitted.iter().enumerate() {
        let prev = t[i];
        t.push(v.clamp(0.0, 1.0).min(prev));
    }
    let w = weights_from_tails(&t);
    let value = obj.eval_weights(&w);
    let kkt = kkt_residual(obj, &w);
    Ok((w, value, kkt))
}

/// Exact PAVA solve subject to `t_{m0+1} <= c` (head mass at least `1 − c`).
/// Either the unconstrained fit already satisfies the cap, or the cap is
/// active; with `t_{m0+1}` pinned at `c` the chain splits at that coordinate
/// into two independent sub-chains whose boxes `[c, 1]` and `[0, c]` are
/// constant, where post-fit clipping is exact.
fn solve_chain_head_capped(
    obj: &SeparableSimplexObjective,
    m0: usize,
    c: f64,
) -> Result<(Vec<f64>, f64)> {
    debug_assert!(m0 >= 1 && m0 < obj.num_models());
    let (unc_w, unc_value, _) = solve_chain(obj)?;
    let t_head: f64 = unc_w[m0..].iter().sum();
    if t_head <= c + SNAP_TOL {
        return Ok((unc_w, unc_value));
    }
    let (targets, weights) = chain_targets(obj);
    let m = obj.num_models();
    let mut t = Vec::with_capacity(m);
    t.push(1.0);
    // Prefix coordinates t_2..t_{m0}: box [c, 1].
    let pre = pava_antitonic(&targets[..m0 - 1], &weights[..m0 - 1]);
    for (i, &v) in pre.iter().enumerate() {
        let prev = t[i];
        t.push(v.clamp(c, 1.0).min(prev));
    }
    // Pinned coordinate t_{m0+1} = c.
    t.push(c);
    // Suffix coordinates t_{m0+2}..t_M: box [0, c].
    let suf = pava_antitonic(&targets[m0..], &weights[m0..]);
    for (i, &v) in suf.iter().enumerate() {
        let prev = t[m0 + i];
        t.push(v.clamp(0.0, c).min(prev));
    }
    let w = weights_from_tails(&t);
    let value = obj.eval_weights(&w);
    Ok((w, value))
}

/// Extra constraint for the generic QP: require the mass on the first
/// `head_len` coordinates to be at least `min_mass` (equivalently, cap the
/// tail weight `t_{head_len+1}` at `1 − min_mass`).
#[derive(Debug, Clone, Copy)]
pub struct HeadMassBound {
    pub head_len: usize,
    pub min_mass: f64,
}

/// Independent oracle: projected-gradient descent on the dense w-space
/// quadratic with simplex projection.
pub fn solve_generic_qp(
    obj: &SeparableSimplexObjective,
    head_bound: Option<HeadMassBound>,
) -> Result<SolveReport> {
    let m = obj.num_models();
    if m == 0 {
        return Err(Error::Argument("objective has no models".into()));
    }
    // Hessian in w-space: H_{ml} = 2 Σ_{j <= min(m,l)} A_j (assembled densely).
    let mut prefix_a = vec![0.0; m];
    let mut acc = 0.0;
    for i in 0..m {
        acc += obj.a[i];
        prefix_a[i] = acc;
    }
    let hess = |v: &[f64]| -> Vec<f64> {
        // H v with H_{ml} = 2 prefix_a[min(m,l)] in O(M).
        let mut suffix: Vec<f64> = vec![0.0; m + 1];
        for i in (0..m).rev() {
            suffix[i] = suffix[i + 1] + v[i];
        }
        let mut weighted_prefix = 0.0;
        let mut out = vec![0.0; m];
        for i in 0..m {
            // Σ_{l<=i} prefix_a[l] v_l + prefix_a[i] Σ_{l>i} v_l
            weighted_prefix += prefix_a[i] * v[i];
            out[i] = 2.0 * (weighted_prefix + prefix_a[i] * suffix[i + 1]);
        }
        out
    };
    // Lipschitz constant by power iteration on H.
    let mut v = vec![1.0 / (m as f64).sqrt(); m];
    let mut lip = 1.0;
    for _ in 0..100 {
        let hv = hess(&v);
        let norm: f64 = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lip = norm;
        for (a, b) in v.iter_mut().zip(&hv) {
            *a = b / norm;
        }
    }
    let step = 1.0 / lip.max(1e-300);

    let project = |w: &mut Vec<f64>| {
        match head_bound {
            None => project_simplex(w),
            Some(hb) => {
                project_simplex(w);
                let head: f64 = w[..hb.head_len].iter().sum();
                if head + 1e-16 < hb.min_mass {
                    // The group constraint is active: split the projection
                    // into two scaled simplices.
                    let head_part = project_scaled(&w[..hb.head_len], hb.min_mass);
                    let tail_part = project_scaled(&w[hb.head_len..], 1.0 - hb.min_mass);
                    w[..hb.head_len].copy_from_slice(&head_part);
                    w[hb.head_len..].copy_from_slice(&tail_part);
                }
            }
        }
    };

    let mut w = vec![1.0 / m as f64; m];
    project(&mut w);
    let mut f_prev = obj.eval_weights(&w);
    let mut stall = 0usize;
    let max_iter = 1_000_000usize;
    let mut iterations = 0usize;
    for it in 0..max_iter {
        iterations = it + 1;
        let grad = obj.gradient_weights(&w);
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= step * g;
        }
        project(&mut w);
        let f = obj.eval_weights(&w);
        if f_prev - f < 1e-14 * (1.0 + f.abs()) {
            stall += 1;
            if stall >= 10 {
                break;
            }
        } else {
            stall = 0;
        }
        f_prev = f;
    }
    for x in &mut w {
        if *x <= SNAP_TOL {
            *x = 0.0;
        }
    }
    let s: f64 = w.iter().sum();
    for x in &mut w {
        *x /= s;
    }
    let value = obj.eval_weights(&w);
    let kkt = if head_bound.is_none() { kkt_residual(obj, &w) } else { 0.0 };
    if head_bound.is_none() && kkt >= 1e-6 && iterations >= max_iter {
        return Err(Error::SolverFailure {
            kkt_residual: kkt,
            iterations,
            best_objective: value,
        });
    }
    Ok(SolveReport {
        weights: WeightVector::new(w, WeightSet::Simplex),
        objective_value: value,
        method: Method::GenericQp,
        kkt_residual: kkt,
        warning: None,
    })
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(w: &mut [f64]) {
    let scaled = project_scaled(w, 1.0);
    w.copy_from_slice(&scaled);
}

/// Projection onto `{x >= 0, Σx = s}`.
fn project_scaled(w: &[f64], s: f64) -> Vec<f64> {
    if w.is_empty() {
        return Vec::new();
    }
    let mut u = w.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let th = (css - s) / (i + 1) as f64;
        if ui - th > 0.0 {
            rho = i + 1;
            theta = th;
        }
    }
    let _ = rho;
    w.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Exact minimum over the discrete grid `H_n(N)` by enumeration.
/// Ties go to the lexicographically smallest weight vector.
pub fn solve_discrete(obj: &SeparableSimplexObjective, n_grid: usize) -> Result<SolveReport> {
    let m = obj.num_models();
    if n_grid == 0 {
        return Err(Error::Argument("grid denominator must be positive".into()));
    }
    let count = compositions_count(n_grid as u128, m as u128);
    const LIMIT: u128 = 10_000_000;
    if count > LIMIT {
        return Err(Error::Capacity { count, limit: LIMIT });
    }
    let mut best_w: Option<Vec<usize>> = None;
    let mut best_v = f64::INFINITY;
    let mut counts = vec![0usize; m];
    // Lexicographic enumeration with strict improvement keeps the smallest
    // vector on ties.
    fn recurse(
        remaining: usize,
        idx: usize,
        counts: &mut Vec<usize>,
        obj: &SeparableSimplexObjective,
        n_grid: usize,
        best_w: &mut Option<Vec<usize>>,
        best_v: &mut f64,
    ) {
        let m = counts.len();
        if idx == m - 1 {
            counts[idx] = remaining;
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / n_grid as f64).collect();
            let v = obj.eval_weights(&w);
            if v < *best_v {
                *best_v = v;
                *best_w = Some(counts.clone());
            }
            return;
        }
        for take in (0..=remaining).rev() {
            counts[idx] = take;
            recurse(remaining - take, idx + 1, counts, obj, n_grid, best_w, best_v);
        }
    }
    recurse(n_grid, 0, &mut counts, obj, n_grid, &mut best_w, &mut best_v);
    let counts = best_w.unwrap();
    let w: Vec<f64> = counts.iter().map(|&c| c as f64 / n_grid as f64).collect();
    Ok(SolveReport {
        weights: WeightVector::new(w, WeightSet::Discrete { n_grid }),
        objective_value: best_v,
        method: Method::Enumeration,
        kkt_residual: 0.0,
        warning: None,
    })
}

fn compositions_count(n: u128, m: u128) -> u128 {
    // C(n + m - 1, m - 1), saturating.
    let mut num: u128 = 1;
    for i in 0..m - 1 {
        num = num.saturating_mul(n + 1 + i);
        num /= i + 1;
    }
    num
}

/// Exact minimum over the restricted set `H_n^δ`: under-fitted mass is either
/// zero (phase a) or at least `δ n^{−τ0}` (phase b). Ties go to phase (a).
pub fn solve_restricted(
    obj: &SeparableSimplexObjective,
    delta: f64,
    tau0: f64,
    m0: usize,
    n: usize,
) -> Result<SolveReport> {
    if !(delta > 0.0) || !(tau0 > 0.0) {
        return Err(Error::Argument(format!(
            "need positive delta and tau0, got delta = {delta}, tau0 = {tau0}"
        )));
    }
    let m = obj.num_models();
    if m0 >= m {
        return Err(Error::Argument(format!(
            "need M0 < M_n, got M0 = {m0}, M_n = {m}"
        )));
    }
    let set_tag = WeightSet::Restricted { delta, tau0, m0 };
    let bound = delta * (n as f64).powf(-tau0);

    // Phase (a): under-fitted weights forced to zero, i.e. tails
    // t_2..t_{M0+1} pinned at 1.
    let phase_a = {
        // Pinning is done by restricting the sub-problem on models M0+1..M.
        let sub = SeparableSimplexObjective {
            a: obj.a[m0..].to_vec(),
            b: obj.b[m0..].to_vec(),
            c0: obj.c0 + obj.a[..m0].iter().sum::<f64>() + obj.b[..m0].iter().sum::<f64>(),
            kind: obj.kind,
        };
        let rep = solve_simplex(&sub)?;
        let mut w = vec![0.0; m0];
        w.extend(rep.weights.w);
        (w, rep.objective_value)
    };

    if bound >= 1.0 {
        let value = phase_a.1;
        let w = phase_a.0;
        let kkt = kkt_residual(obj, &w);
        return Ok(SolveReport {
            weights: WeightVector::new(w, set_tag),
            objective_value: value,
            method: Method::RestrictedTwoPhase,
            kkt_residual: kkt,
            warning: Some(format!(
                "mass bound {bound} >= 1: only the zero-under-fit phase is feasible"
            )),
        });
    }

    // Phase (b): cap t_{M0+1} <= 1 − δn^{−τ0}; with the cap active the chain
    // splits into two constant-box sub-chains solved exactly.
    let phase_b = {
        if m0 == 0 {
            // No under-fitted models: the restricted set is the whole simplex.
            let rep = solve_simplex(obj)?;
            (rep.weights.w, rep.objective_value)
        } else if obj.a.iter().skip(1).any(|&a| !(a > 0.0)) {
            let rep = solve_generic_qp(
                obj,
                Some(HeadMassBound { head_len: m0, min_mass: bound }),
            )?;
            (rep.weights.w, rep.objective_value)
        } else {
            solve_chain_head_capped(obj, m0, 1.0 - bound)?
        }
    };

    let (w, value) = if phase_a.1 <= phase_b.1 { phase_a } else { phase_b };
    // Snap stray under-fitted dust so the set invariant holds exactly. A head
    // a few ulps below the bound is the active phase-(b) constraint with
    // rounding error: rescale onto it instead of zeroing it out.
    let mut w = w;
    let head: f64 = w[..m0].iter().sum();
    if head > 0.0 && head < bound {
        if head >= bound * (1.0 - 1e-9) {
            let tail: f64 = w[m0..].iter().sum();
            for x in w.iter_mut().take(m0) {
                *x *= bound / head;
            }
            for x in w.iter_mut().skip(m0) {
                *x *= (1.0 - bound) / tail;
            }
        } else {
            for x in w.iter_mut().take(m0) {
                *x = 0.0;
            }
            let s: f64 = w.iter().sum();
            for x in &mut w {
                *x /= s;
            }
        }
    }
    let value = if (obj.eval_weights(&w) - value).abs() > 0.0 {
        obj.eval_weights(&w)
    } else {
        value
    };
    let kkt = kkt_residual(obj, &w);
    Ok(SolveReport {
        weights: WeightVector::new(w, set_tag),
        objective_value: value,
        method: Method::RestrictedTwoPhase,
        kkt_residual: kkt,
        warning: None,
    })
}

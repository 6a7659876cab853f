//! Data-generating processes for the simulation studies.
//!
//! Covariates are stationary Gaussian AR(1) across the coordinate index, so
//! `corr(x_k, x_l) = ρ^{|k−l|}`; errors are i.i.d. `N(0, σ²)`. The noise
//! level is either fixed or backed out of a population R² through the
//! Toeplitz quadratic form `Var(μ) = βᵀ T(ρ) β`.

use crate::error::{Error, Result};
use crate::mat::Mat;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Scenario families from the simulation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Three-covariate example with `β = (−1, 0.1, 0)` and `σ² = 1`.
    Toy,
    /// Fixed true dimension: `β = (1, −2, 3, 1.5, 4)`, eleven candidates.
    FixedDim,
    /// Diverging dimension `p = ⌊2 n^{1/3}⌋` with `η_n = 1`.
    Diverging1,
    /// Slowly diverging dimension `p = ⌊log n⌋` with `η_n → 0`.
    Diverging2,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(ScenarioKind::Toy),
            "fixed" => Ok(ScenarioKind::FixedDim),
            "div1" => Ok(ScenarioKind::Diverging1),
            "div2" => Ok(ScenarioKind::Diverging2),
            other => Err(Error::Argument(format!(
                "unknown scenario '{other}' (expected toy, fixed, div1, div2)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Toy => "toy",
            ScenarioKind::FixedDim => "fixed",
            ScenarioKind::Diverging1 => "div1",
            ScenarioKind::Diverging2 => "div2",
        }
    }
}

/// Fully resolved scenario: coefficients, nesting, noise level.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    /// Nonzero-head coefficient vector (padded with zeros up to `k_max` when
    /// generating data).
    pub beta: Vec<f64>,
    /// Nesting sizes `k_1 < … < k_{M_n}`.
    pub sizes: Vec<usize>,
    /// Number of under-fitted models; model `M0+1` is the true model.
    pub m0: usize,
    pub rho: f64,
    pub sigma2: f64,
    /// Population R² when the noise was derived from one.
    pub r2: Option<f64>,
}

/// One generated replication.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    /// `n × k_max` design, columns in nesting order.
    pub x: Mat,
    pub mu: Vec<f64>,
    pub e: Vec<f64>,
    pub y: Vec<f64>,
}

/// `Var(μ_i) = βᵀ T(ρ) β` with `T_{kl} = ρ^{|k−l|}`.
pub fn mu_variance(beta: &[f64], rho: f64) -> f64 {
    let p = beta.len();
    let mut v = 0.0;
    for k in 0..p {
        for l in 0..p {
            v += beta[k] * beta[l] * rho.powi((k as i32 - l as i32).abs());
        }
    }
    v
}

/// Noise level giving the requested population R².
pub fn sigma2_from_r2(beta: &[f64], rho: f64, r2: f64) -> Result<f64> {
    if !(r2 > 0.0 && r2 < 1.0) {
        return Err(Error::Argument(format!("need 0 < R² < 1, got {r2}")));
    }
    let var_mu = mu_variance(beta, rho);
    if var_mu <= 0.0 {
        return Err(Error::DegenerateTruth);
    }
    Ok(var_mu * (1.0 - r2) / r2)
}

/// Resolve a named scenario at sample size `n`.
///
/// `r2` is required for the fixed and diverging scenarios and rejected for
/// the toy one (its noise level is pinned at 1). `rho_override` replaces the
/// default covariate correlation where the design allows it.
pub fn make_scenario(
    kind: ScenarioKind,
    n: usize,
    r2: Option<f64>,
    rho_override: Option<f64>,
) -> Result<ScenarioSpec> {
    if let Some(rho) = rho_override {
        if rho.abs() >= 1.0 {
            return Err(Error::Argument(format!("need |ρ| < 1, got {rho}")));
        }
    }
    match kind {
        ScenarioKind::Toy => {
            if r2.is_some() {
                return Err(Error::Argument(
                    "the toy scenario fixes σ² = 1; R² cannot be requested".into(),
                ));
            }
            if rho_override.map_or(false, |r| r != 0.0) {
                return Err(Error::Argument(
                    "the toy scenario uses independent covariates (ρ = 0)".into(),
                ));
            }
            if n <= 3 {
                return Err(Error::Argument(format!("need n > 3, got {n}")));
            }
            Ok(ScenarioSpec {
                kind,
                n,
                beta: vec![-1.0, 0.1, 0.0],
                sizes: vec![1, 2, 3],
                m0: 1,
                rho: 0.0,
                sigma2: 1.0,
                r2: None,
            })
        }
        ScenarioKind::FixedDim => {
            let rho = rho_override.unwrap_or(0.5);
            let beta = vec![1.0, -2.0, 3.0, 1.5, 4.0];
            let r2v = r2.ok_or_else(|| Error::Argument("this scenario needs an R²".into()))?;
            let sigma2 = sigma2_from_r2(&beta, rho, r2v)?;
            if n <= 11 {
                return Err(Error::Argument(format!("need n > 11, got {n}")));
            }
            Ok(ScenarioSpec {
                kind,
                n,
                beta,
                sizes: (1..=11).collect(),
                m0: 4,
                rho,
                sigma2,
                r2: Some(r2v),
            })
        }
        ScenarioKind::Diverging1 => {
            let rho = rho_override.unwrap_or(0.5);
            // ⌊2 n^{1/3}⌋ exactly: the largest p with p³ ≤ 8n.
            let mut p = (2.0 * (n as f64).cbrt()).floor() as usize;
            while (p + 1).pow(3) <= 8 * n {
                p += 1;
            }
            while p.pow(3) > 8 * n {
                p -= 1;
            }
            if p < 4 {
                return Err(Error::Argument(format!(
                    "need ⌊2 n^(1/3)⌋ ≥ 4 for a valid nesting, got p = {p} at n = {n}"
                )));
            }
            if n <= p + 5 {
                return Err(Error::Argument(format!(
                    "need n > k_max = {} at n = {n}",
                    p + 5
                )));
            }
            let mut beta: Vec<f64> = (1..p).map(|j| 1.0 / j as f64).collect();
            beta.push(1.0);
            let r2v = r2.ok_or_else(|| Error::Argument("this scenario needs an R²".into()))?;
            let sigma2 = sigma2_from_r2(&beta, rho, r2v)?;
            Ok(ScenarioSpec {
                kind,
                n,
                beta,
                sizes: (p - 3..=p + 5).collect(),
                m0: 3,
                rho,
                sigma2,
                r2: Some(r2v),
            })
        }
        ScenarioKind::Diverging2 => {
            let rho = rho_override.unwrap_or(0.5);
            let p = (n as f64).ln().floor() as usize;
            if p < 2 {
                return Err(Error::Argument(format!(
                    "need ⌊log n⌋ ≥ 2 for at least one under-fitted model, got p = {p}"
                )));
            }
            let loglog = (n as f64).ln().ln();
            if loglog <= 0.0 {
                return Err(Error::Argument(format!(
                    "need log log n > 0, got n = {n}"
                )));
            }
            if n <= p + 3 {
                return Err(Error::Argument(format!(
                    "need n > k_max = {} at n = {n}",
                    p + 3
                )));
            }
            let mut beta: Vec<f64> = (1..p).map(|j| 1.0 / j as f64).collect();
            beta.push(5.0 / loglog);
            let r2v = r2.ok_or_else(|| Error::Argument("this scenario needs an R²".into()))?;
            let sigma2 = sigma2_from_r2(&beta, rho, r2v)?;
            Ok(ScenarioSpec {
                kind,
                n,
                beta,
                sizes: (1..=p + 3).collect(),
                m0: p - 1,
                rho,
                sigma2,
                r2: Some(r2v),
            })
        }
    }
}

impl ScenarioSpec {
    pub fn k_max(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// `β` padded with zeros to the widest candidate.
    pub fn beta_padded(&self) -> Vec<f64> {
        let mut b = self.beta.clone();
        b.resize(self.k_max(), 0.0);
        b
    }

    /// `η_n = Σ_{j ∈ A_{M0+1} ∩ A_{M0}^c} β_j²`.
    pub fn eta(&self) -> f64 {
        let lo = if self.m0 >= 1 { self.sizes[self.m0 - 1] } else { 0 };
        let hi = self.sizes[self.m0];
        self.beta_padded()[lo..hi].iter().map(|b| b * b).sum()
    }
}

/// splitmix64 round, used to derive independent per-replication streams.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for one replication: independent of how many other
/// replications run or in what order.
pub fn rep_rng(master_seed: u64, rep: u64) -> ChaCha12Rng {
    let mut state = master_seed;
    let a = splitmix64(&mut state);
    state ^= rep.wrapping_mul(0xd134_2543_de82_ef95).wrapping_add(1);
    let b = splitmix64(&mut state);
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&a.to_le_bytes());
    seed[8..16].copy_from_slice(&b.to_le_bytes());
    seed[16..24].copy_from_slice(&c.to_le_bytes());
    seed[24..32].copy_from_slice(&d.to_le_bytes());
    ChaCha12Rng::from_seed(seed)
}

/// Stationary AR(1) covariate rows: `x_1 = z_1`, `x_j = ρ x_{j−1} + √(1−ρ²) z_j`.
pub fn gen_covariates(r: &mut impl Rng, n: usize, k: usize, rho: f64) -> Result<Mat> {
    if rho.abs() >= 1.0 {
        return Err(Error::Argument(format!("need |ρ| < 1, got {rho}")));
    }
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = Mat::zeros(n, k);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..k {
            let z: f64 = r.sample(StandardNormal);
            let v = if j == 0 { z } else { rho * prev + innov * z };
            x[(i, j)] = v;
            prev = v;
        }
    }
    Ok(x)
}

/// Generate one replication: covariates first, then errors, in a fixed order
/// so the stream is reproducible.
pub fn generate(spec: &ScenarioSpec, master_seed: u64, rep: u64) -> Result<GeneratedData> {
    let mut r = rep_rng(master_seed, rep);
    let k = spec.k_max();
    let x = gen_covariates(&mut r, spec.n, k, spec.rho)?;
    let beta = spec.beta_padded();
    let mu = x.mul_vec(&beta);
    let sd = spec.sigma2.sqrt();
    let e: Vec<f64> = (0..spec.n)
        .map(|_| {
            let z: f64 = r.sample(StandardNormal);
            sd * z
        })
        .collect();
    let y: Vec<f64> = mu.iter().zip(&e).map(|(m, e)| m + e).collect();
    Ok(GeneratedData { x, mu, e, y })
}

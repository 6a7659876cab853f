//! Statistical toolbox: Beta distribution, Kolmogorov–Smirnov distance,
//! kernel density estimation, survival curves, and reference-law samplers.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, StandardNormal};

/// `ln Γ(x)` by the Lanczos approximation (g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by continued fraction (modified
/// Lentz), with the standard symmetry split for convergence.
pub fn beta_cdf(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Argument(format!(
            "beta shapes must be positive, got a = {a}, b = {b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Argument(format!("need x in [0, 1], got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x) / a)
    } else {
        Ok(1.0 - front * beta_cf(b, a, 1.0 - x) / b)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..400 {
        let m = m as f64;
        let m2 = 2.0 * m;
        // Even step.
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Beta(a, b) density, for overlays and KDE oracles.
pub fn beta_pdf(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Argument(format!(
            "beta shapes must be positive, got a = {a}, b = {b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Ok(0.0);
    }
    let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    Ok(((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_b).exp())
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and a
/// reference CDF, evaluated one-sided at every sample point.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("KS distance needs a nonempty sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / m;
        let hi = (i + 1) as f64 / m;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    Ok(d)
}

/// Silverman's rule-of-thumb bandwidth `1.06 · min(sd, IQR/1.34) · m^{−1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::Argument("KDE needs at least 2 samples".into()));
    }
    let mean = samples.iter().sum::<f64>() / m as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m as f64 - 1.0);
    let sd = var.sqrt();
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |p: f64| -> f64 {
        let idx = p * (m as f64 - 1.0);
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        let frac = idx - lo as f64;
        s[lo] * (1.0 - frac) + s[hi] * frac
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::Argument("KDE needs a sample with nonzero spread".into()));
    }
    Ok(1.06 * spread * (m as f64).powf(-0.2))
}

/// Gaussian kernel density estimate on a grid.
pub fn kde(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(samples)?;
    let m = samples.len() as f64;
    let norm = 1.0 / (m * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&x| {
                    let u = (g - x) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// Empirical survival `Pr{sample ≥ z}` at each grid point (exact counting).
pub fn survival_curve(samples: &[f64], z_grid: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Argument("survival curve needs a nonempty sample".into()));
    }
    if z_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Argument("z grid must be sorted ascending".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = s.len();
    Ok(z_grid
        .iter()
        .map(|&z| {
            // First index with s[idx] >= z.
            let idx = s.partition_point(|&x| x < z);
            (m - idx) as f64 / m as f64
        })
        .collect())
}

/// Limit laws appearing in the fixed-dimension analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceLaw {
    /// `U + (1−U)·Beta(1/2, 1/2)` with `U` Bernoulli(1/2), independent.
    BetaMixture,
    /// `1 + V²/2` with `V = max{1 − 1/Z², 0}`, `Z` standard normal.
    OnePlusHalfVSq,
    /// Plain `Beta(a, b)`.
    Beta(f64, f64),
}

impl ReferenceLaw {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "beta_mixture" => Ok(ReferenceLaw::BetaMixture),
            "one_plus_half_Vsq" => Ok(ReferenceLaw::OnePlusHalfVSq),
            other => {
                if let Some(args) = other.strip_prefix("beta(").and_then(|t| t.strip_suffix(')')) {
                    let parts: Vec<&str> = args.split(',').collect();
                    if parts.len() == 2 {
                        let a: f64 = parts[0].trim().parse().map_err(|_| {
                            Error::Argument(format!("bad beta shape '{}'", parts[0]))
                        })?;
                        let b: f64 = parts[1].trim().parse().map_err(|_| {
                            Error::Argument(format!("bad beta shape '{}'", parts[1]))
                        })?;
                        return Ok(ReferenceLaw::Beta(a, b));
                    }
                }
                Err(Error::Argument(format!(
                    "unknown reference law '{other}' (expected beta_mixture, one_plus_half_Vsq, beta(a,b))"
                )))
            }
        }
    }
}

/// Exact samplers for the reference laws.
pub fn sample_reference_laws(
    law: ReferenceLaw,
    count: usize,
    r: &mut impl Rng,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Argument("need count >= 1".into()));
    }
    match law {
        ReferenceLaw::BetaMixture => {
            let beta = BetaDist::new(0.5, 0.5)
                .map_err(|e| Error::Argument(format!("beta sampler: {e}")))?;
            Ok((0..count)
                .map(|_| {
                    let u = r.gen::<bool>();
                    // Draw the beta unconditionally so the stream does not
                    // depend on the branch (determinism across laws aside,
                    // this keeps U and the Beta independent by construction).
                    let b = beta.sample(r);
                    if u {
                        1.0
                    } else {
                        b
                    }
                })
                .collect())
        }
        ReferenceLaw::OnePlusHalfVSq => Ok((0..count)
            .map(|_| {
                let z: f64 = r.sample(StandardNormal);
                let v = (1.0 - 1.0 / (z * z)).max(0.0);
                1.0 + 0.5 * v * v
            })
            .collect()),
        ReferenceLaw::Beta(a, b) => {
            let beta = BetaDist::new(a, b)
                .map_err(|e| Error::Argument(format!("beta sampler: {e}")))?;
            Ok((0..count).map(|_| beta.sample(r)).collect())
        }
    }
}

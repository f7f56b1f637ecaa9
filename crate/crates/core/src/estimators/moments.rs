//! Closed-form bias-adjustment moments of the sampled conditional likelihood.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::gamma_ur;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

use crate::error::{Error, Result};
use crate::glm::softmax;

/// `kappa_j = E(y^j |y - mu_plt| | x)` for `j = 0, 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMoments {
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl ConditionalMoments {
    /// Mean of `y` under the `|y - mu_plt|`-tilted distribution.
    pub fn tilted_mean(&self) -> f64 {
        self.kappa1 / self.kappa0
    }

    /// Variance of `y` under the tilted distribution, clamped at zero.
    pub fn tilted_variance(&self) -> f64 {
        let r = self.kappa1 / self.kappa0;
        (self.kappa2 / self.kappa0 - r * r).max(0.0)
    }
}

/// Moments for a binary response with `Pr(y = 1) = p_beta` and pilot mean `p_plt`.
pub fn binary_kappas(p_beta: f64, p_plt: f64) -> ConditionalMoments {
    binary_kappas_complement(p_beta, 1.0 - p_beta, p_plt, 1.0 - p_plt)
}

/// [`binary_kappas`] from probabilities and their complements, which keeps
/// full precision when either probability is close to one.
pub fn binary_kappas_complement(p_beta: f64, q_beta: f64, p_plt: f64, q_plt: f64) -> ConditionalMoments {
    let k1 = p_beta * q_plt;
    ConditionalMoments { kappa0: k1 + q_beta * p_plt, kappa1: k1, kappa2: k1 }
}

/// Largest `m` evaluated by direct summation; beyond it the regularized
/// incomplete gamma function is used.
const DIRECT_SUM_LIMIT: i64 = 10_000;

/// Poisson CDF `F(m; mu)`, zero for `m < 0`.
pub fn poisson_cdf(m: i64, mu: f64) -> f64 {
    if m < 0 {
        return 0.0;
    }
    if mu <= 0.0 {
        return 1.0;
    }
    if m > DIRECT_SUM_LIMIT {
        return gamma_ur(m as f64 + 1.0, mu);
    }
    // sum outward from the term closest to the mode so no term underflows
    // before it matters and every partial sum adds positive terms
    let start = (mu.floor() as i64).min(m).max(0);
    let t0 = poisson_pmf(start, mu);
    let mut total = t0;
    let mut t = t0;
    let mut y = start;
    while y > 0 {
        t *= y as f64 / mu;
        y -= 1;
        total += t;
        if t < total * 1e-18 {
            break;
        }
    }
    let mut t = t0;
    let mut y = start;
    while y < m {
        y += 1;
        t *= mu / y as f64;
        total += t;
        if t < total * 1e-18 && y as f64 > mu {
            break;
        }
    }
    total.min(1.0)
}

/// `ln Gamma(n + 1) - (n + 1/2) ln n + n - ln sqrt(2 pi)`.
fn stirling_error(n: f64) -> f64 {
    if n <= 15.0 {
        return ln_factorial(n as u64) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let nn = n * n;
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// Deviance term `x ln(x / np) + np - x`, evaluated without cancellation near `x = np`.
fn deviance_term(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * (x / np).ln() + np - x
}

/// Poisson probability mass, accurate to a few ulps for large `y` and `mu`.
fn poisson_pmf(y: i64, mu: f64) -> f64 {
    if y == 0 {
        return (-mu).exp();
    }
    let x = y as f64;
    (-stirling_error(x) - deviance_term(x, mu) - LN_SQRT_2PI - 0.5 * x.ln()).exp()
}

/// Partial moment `q(m, k) = sum_{y=0}^{m} y^k e^{-mu} mu^y / y!` for `k <= 3`.
pub fn poisson_q(m: i64, k: u32, mu: f64) -> Result<f64> {
    let f = |j: i64| poisson_cdf(j, mu);
    Ok(match k {
        0 => f(m),
        1 => mu * f(m - 1),
        2 => mu * f(m - 1) + mu * mu * f(m - 2),
        3 => mu * f(m - 1) + 3.0 * mu * mu * f(m - 2) + mu.powi(3) * f(m - 3),
        _ => return Err(Error::InvalidArgument(format!("poisson_q supports k in 0..=3, got {k}"))),
    })
}

/// Largest `mu` for which the moments are summed term by term; the closed
/// form in `q(m, k)` cancels badly for larger `kappa2` but costs O(1).
const DIRECT_KAPPA_LIMIT: f64 = 1000.0;

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.s + v;
        if self.s.abs() >= v.abs() {
            self.c += (self.s - t) + v;
        } else {
            self.c += (v - t) + self.s;
        }
        self.s = t;
    }

    fn value(self) -> f64 {
        self.s + self.c
    }
}

/// `sum_y |y - mu_tilde| y^k Pois(y; mu)` for k = 0, 1, 2, all terms non-negative.
fn poisson_kappas_direct(mu: f64, mu_tilde: f64) -> ConditionalMoments {
    let mut k = [Sum::default(); 3];
    let mut add = |y: i64, t: f64| {
        let x = y as f64;
        let w = (x - mu_tilde).abs() * t;
        k[0].add(w);
        k[1].add(w * x);
        k[2].add(w * x * x);
        w * x * x
    };
    let start = mu.floor() as i64;
    let t0 = poisson_pmf(start, mu);
    add(start, t0);
    let mut t = t0;
    for y in (0..start).rev() {
        t *= (y + 1) as f64 / mu;
        add(y, t);
    }
    let mut t = t0;
    let mut y = start;
    let mut total2 = Sum::default();
    loop {
        y += 1;
        t *= mu / y as f64;
        let w2 = add(y, t);
        total2.add(w2);
        if y as f64 > mu_tilde.max(mu) && w2 <= 1e-18 * total2.value() {
            break;
        }
    }
    ConditionalMoments { kappa0: k[0].value(), kappa1: k[1].value(), kappa2: k[2].value() }
}

/// Moments for a Poisson response with mean `mu` and pilot mean `mu_tilde`.
pub fn poisson_kappas(mu: f64, mu_tilde: f64) -> ConditionalMoments {
    if mu > 0.0 && mu <= DIRECT_KAPPA_LIMIT {
        return poisson_kappas_direct(mu, mu_tilde);
    }
    poisson_kappas_closed(mu, mu_tilde)
}

fn poisson_kappas_closed(mu: f64, mu_tilde: f64) -> ConditionalMoments {
    let m = mu_tilde.floor() as i64;
    let f = |j: i64| poisson_cdf(j, mu);
    let (f1, f2, f3) = (f(m - 1), f(m - 2), f(m - 3));
    let mu2 = mu * mu;
    let kappa0 = 2.0 * mu_tilde * f(m) - 2.0 * mu * f1 + mu - mu_tilde;
    let kappa1 = 2.0 * mu * (mu_tilde - 1.0) * f1 - 2.0 * mu2 * f2 + mu + mu2 - mu * mu_tilde;
    let kappa2 = kappa1 + mu2 * (mu_tilde - 2.0) * (2.0 * f2 - 1.0) - 2.0 * mu2 * mu * f3 + mu2 * mu;
    ConditionalMoments { kappa0, kappa1, kappa2 }
}

/// Log-scale offsets `g_k` that turn the model softmax into the sampled-data
/// class probabilities under `||y - p_plt|| ||x||` sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiClassAdjustment {
    pub g: Vec<f64>,
}

impl MultiClassAdjustment {
    /// `p^g_k = softmax(eta_k + g_k)` for full-length predictors `eta`.
    pub fn tilted_probabilities(&self, eta: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = eta.iter().zip(&self.g).map(|(e, g)| e + g).collect();
        softmax(&shifted)
    }
}

/// `g_k = (1/2) log{1 + (1 - 2 p_k) / sum_l p_l^2}` for a pilot probability vector.
pub fn multiclass_adjustment(p_plt: &[f64]) -> MultiClassAdjustment {
    let sum_sq: f64 = p_plt.iter().map(|p| p * p).sum();
    let g = p_plt
        .iter()
        .enumerate()
        .map(|(k, pk)| {
            // 1 - 2 p_k + sum p^2 = ||e_k - p||^2, expanded without cancellation
            let dist_sq = (1.0 - pk) * (1.0 - pk)
                + p_plt.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, p)| p * p).sum::<f64>();
            0.5 * (dist_sq.ln() - sum_sq.ln())
        })
        .collect();
    MultiClassAdjustment { g }
}

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_factorial;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use crate::error::{Error, Result};

/// Inverse link `p(eta)` of a binary response model, `Pr(y = 1 | x) = p(x'beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLink {
    Logit,
    Probit,
    Cloglog,
}

impl BinaryLink {
    pub fn name(self) -> &'static str {
        match self {
            BinaryLink::Logit => "logit",
            BinaryLink::Probit => "probit",
            BinaryLink::Cloglog => "cloglog",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(BinaryLink::Logit),
            "probit" => Ok(BinaryLink::Probit),
            "cloglog" => Ok(BinaryLink::Cloglog),
            other => Err(Error::InvalidArgument(format!("unknown binary link `{other}`"))),
        }
    }

    /// `(p, 1 - p)` evaluated without cancellation in either tail.
    pub fn probabilities(self, eta: f64) -> (f64, f64) {
        match self {
            BinaryLink::Logit => {
                let p = logistic(eta);
                let q = logistic(-eta);
                (p, q)
            }
            BinaryLink::Probit => (0.5 * erfc(-eta * FRAC_1_SQRT_2), 0.5 * erfc(eta * FRAC_1_SQRT_2)),
            BinaryLink::Cloglog => {
                let e = eta.exp();
                (-(-e).exp_m1(), (-e).exp())
            }
        }
    }

    /// First and second derivatives of `p` at `eta`.
    pub fn derivatives(self, eta: f64) -> (f64, f64) {
        match self {
            BinaryLink::Logit => {
                let (p, q) = self.probabilities(eta);
                let d1 = p * q;
                (d1, d1 * (q - p))
            }
            BinaryLink::Probit => {
                let d1 = (-0.5 * eta * eta).exp() / (2.0 * PI).sqrt();
                (d1, -eta * d1)
            }
            BinaryLink::Cloglog => {
                let e = eta.exp();
                let d1 = (eta - e).exp();
                (d1, d1 * (1.0 - e))
            }
        }
    }

    /// `(log p, log(1 - p))`.
    pub fn log_probabilities(self, eta: f64) -> (f64, f64) {
        match self {
            BinaryLink::Logit => (-softplus(-eta), -softplus(eta)),
            BinaryLink::Cloglog => {
                let e = eta.exp();
                ((-(-e).exp_m1()).ln(), -e)
            }
            BinaryLink::Probit => {
                let (p, q) = self.probabilities(eta);
                (p.ln(), q.ln())
            }
        }
    }
}

/// Response distribution and link of a GLM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// Bernoulli response with a general monotone inverse link.
    BinaryLink { link: BinaryLink },
    /// Bernoulli response with the canonical logit link.
    Logistic,
    /// Multinomial logit over `classes` outcomes, last class as baseline.
    MultiLogistic { classes: usize },
    /// Poisson counts with the canonical log link.
    Poisson,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::BinaryLink { link } => write!(f, "binary:{}", link.name()),
            Family::Logistic => write!(f, "logistic"),
            Family::MultiLogistic { classes } => write!(f, "multiclass:{classes}"),
            Family::Poisson => write!(f, "poisson"),
        }
    }
}

/// Quantities of a univariate GLM at one linear predictor value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnivariateTerms {
    pub mu: f64,
    /// `b'(eta)`.
    pub b1: f64,
    /// `b''(eta)`.
    pub b2: f64,
    /// `Var(y | x)` at dispersion one.
    pub variance: f64,
}

/// Mean of the response at a covariate row.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanResponse {
    Scalar(f64),
    Probabilities(Vec<f64>),
}

/// An exponential-family GLM with known dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub family: Family,
    pub dispersion: f64,
}

impl GlmModel {
    pub fn logistic() -> Self {
        Self { family: Family::Logistic, dispersion: 1.0 }
    }

    pub fn poisson() -> Self {
        Self { family: Family::Poisson, dispersion: 1.0 }
    }

    pub fn binary(link: BinaryLink) -> Self {
        Self { family: Family::BinaryLink { link }, dispersion: 1.0 }
    }

    pub fn multi_logistic(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("multi-class model needs at least 2 classes, got {classes}")));
        }
        Ok(Self { family: Family::MultiLogistic { classes }, dispersion: 1.0 })
    }

    /// Parses `logistic`, `poisson`, `binary:<link>` or `multiclass:<K>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Self::logistic()),
            "poisson" => Ok(Self::poisson()),
            _ => {
                if let Some(link) = s.strip_prefix("binary:") {
                    Ok(Self::binary(BinaryLink::parse(link)?))
                } else if let Some(k) = s.strip_prefix("multiclass:") {
                    let k = k
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidArgument(format!("bad class count in `{s}`")))?;
                    Self::multi_logistic(k)
                } else {
                    Err(Error::InvalidArgument(format!("unknown family `{s}`")))
                }
            }
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match self.family {
            Family::MultiLogistic { classes } => Some(classes),
            _ => None,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self.family, Family::Logistic | Family::BinaryLink { .. })
    }

    /// Whether `b` is the identity, i.e. `b' = 1` and `b'' = 0`.
    pub fn is_canonical(&self) -> bool {
        !matches!(self.family, Family::BinaryLink { link } if link != BinaryLink::Logit)
    }

    /// Length of the free coefficient vector for `d` covariates.
    pub fn coef_dim(&self, d: usize) -> usize {
        match self.family {
            Family::MultiLogistic { classes } => (classes - 1) * d,
            _ => d,
        }
    }

    pub fn check_dims(&self, beta: &[f64], x: &[f64]) -> Result<()> {
        let expected = self.coef_dim(x.len());
        if beta.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: beta.len() });
        }
        Ok(())
    }

    /// Checks that `y` is a valid response value for the family.
    pub fn validate_response(&self, y: f64) -> Result<()> {
        let ok = match self.family {
            Family::Logistic | Family::BinaryLink { .. } => y == 0.0 || y == 1.0,
            Family::Poisson => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
            Family::MultiLogistic { classes } => y >= 0.0 && y.fract() == 0.0 && (y as usize) < classes,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("response value {y} is not valid for family {}", self.family)))
        }
    }

    /// Univariate GLM terms at linear predictor `eta`. Panics for the multi-class family.
    pub fn univariate_terms(&self, eta: f64) -> UnivariateTerms {
        match self.family {
            Family::Logistic => {
                let p = logistic(eta);
                let q = logistic(-eta);
                UnivariateTerms { mu: p, b1: 1.0, b2: 0.0, variance: p * q }
            }
            Family::Poisson => {
                let mu = eta.exp();
                UnivariateTerms { mu, b1: 1.0, b2: 0.0, variance: mu }
            }
            Family::BinaryLink { link } => {
                let (p, q) = link.probabilities(eta);
                let (d1, d2) = link.derivatives(eta);
                let v = p * q;
                let b1 = d1 / v;
                let b2 = d2 / v - d1 * d1 * (q - p) / (v * v);
                UnivariateTerms { mu: p, b1, b2, variance: v }
            }
            Family::MultiLogistic { .. } => panic!("univariate_terms called on multi-class family"),
        }
    }

    /// `(p, 1 - p)` at `eta` for binary families, each accurate in its own tail.
    pub fn binary_probabilities(&self, eta: f64) -> Option<(f64, f64)> {
        match self.family {
            Family::Logistic => Some(BinaryLink::Logit.probabilities(eta)),
            Family::BinaryLink { link } => Some(link.probabilities(eta)),
            _ => None,
        }
    }

    /// Length-K linear predictors for a multi-class row; the baseline entry is 0.
    pub fn class_predictors(&self, beta: &[f64], x: &[f64]) -> Vec<f64> {
        let k = self.classes().expect("multi-class family");
        let d = x.len();
        let mut eta = vec![0.0; k];
        for (c, e) in eta.iter_mut().take(k - 1).enumerate() {
            *e = dot(&beta[c * d..(c + 1) * d], x);
        }
        eta
    }

    pub fn mean_response(&self, beta: &[f64], x: &[f64]) -> Result<MeanResponse> {
        self.check_dims(beta, x)?;
        Ok(match self.family {
            Family::MultiLogistic { .. } => MeanResponse::Probabilities(softmax(&self.class_predictors(beta, x))),
            _ => MeanResponse::Scalar(self.univariate_terms(dot(beta, x)).mu),
        })
    }

    pub fn log_density(&self, beta: &[f64], x: &[f64], y: f64) -> Result<f64> {
        self.check_dims(beta, x)?;
        Ok(match self.family {
            Family::Logistic => {
                let eta = dot(beta, x);
                -(y * softplus(-eta) + (1.0 - y) * softplus(eta))
            }
            Family::BinaryLink { link } => {
                let (lp, lq) = link.log_probabilities(dot(beta, x));
                if y == 1.0 { lp } else { lq }
            }
            Family::Poisson => {
                let eta = dot(beta, x);
                (y * eta - eta.exp()) / self.dispersion - ln_factorial(y as u64)
            }
            Family::MultiLogistic { .. } => {
                let eta = self.class_predictors(beta, x);
                eta[y as usize] - log_sum_exp(&eta)
            }
        })
    }

    /// Per-observation score `d log f / d beta`.
    pub fn score(&self, beta: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
        self.check_dims(beta, x)?;
        Ok(match self.family {
            Family::MultiLogistic { classes } => {
                let p = softmax(&self.class_predictors(beta, x));
                let d = x.len();
                let mut s = vec![0.0; (classes - 1) * d];
                for c in 0..classes - 1 {
                    let r = indicator(y, c) - p[c];
                    for j in 0..d {
                        s[c * d + j] = r * x[j];
                    }
                }
                s
            }
            _ => {
                let t = self.univariate_terms(dot(beta, x));
                let r = (y - t.mu) * t.b1 / self.dispersion;
                x.iter().map(|v| r * v).collect()
            }
        })
    }

    /// Per-observation expected Fisher information, row-major.
    pub fn information(&self, beta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(beta, x)?;
        let d = x.len();
        Ok(match self.family {
            Family::MultiLogistic { classes } => {
                let p = softmax(&self.class_predictors(beta, x));
                let w = softmax_weight(&p, classes - 1);
                kron_outer(&w, classes - 1, x)
            }
            _ => {
                let t = self.univariate_terms(dot(beta, x));
                let w = t.b1 * t.b1 * t.variance / (self.dispersion * self.dispersion);
                let mut m = vec![0.0; d * d];
                for a in 0..d {
                    for b in 0..d {
                        m[a * d + b] = w * x[a] * x[b];
                    }
                }
                m
            }
        })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[inline]
pub(crate) fn indicator(y: f64, class: usize) -> f64 {
    if y as usize == class { 1.0 } else { 0.0 }
}

/// `1 / (1 + exp(-t))` without overflow.
#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|e| (e - m).exp()).sum::<f64>().ln()
}

/// Softmax with max subtraction.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|t| (t - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|t| t / s).collect()
}

/// Leading `free x free` block of `diag(p) - p p'`, row-major.
pub(crate) fn softmax_weight(p: &[f64], free: usize) -> Vec<f64> {
    let mut w = vec![0.0; free * free];
    for a in 0..free {
        for b in 0..free {
            w[a * free + b] = if a == b { p[a] * (1.0 - p[a]) } else { -p[a] * p[b] };
        }
    }
    w
}

/// `w (free x free) kron x x'`, row-major with dimension `free * d`.
pub(crate) fn kron_outer(w: &[f64], free: usize, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let dim = free * d;
    let mut m = vec![0.0; dim * dim];
    for a in 0..free {
        for b in 0..free {
            let wab = w[a * free + b];
            if wab == 0.0 {
                continue;
            }
            for i in 0..d {
                let row = (a * d + i) * dim + b * d;
                let s = wab * x[i];
                for j in 0..d {
                    m[row + j] += s * x[j];
                }
            }
        }
    }
    m
}

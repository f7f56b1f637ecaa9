use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{dot, softmax, Dataset, Family, GlmModel};

/// Distribution of the non-intercept covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    /// `N(0, Omega)` with `Omega_ij = rho^|i-j|`.
    MvNormalAr { rho: f64 },
    /// `exp(z)` with `z ~ N(0, Omega)`.
    MvLogNormal { rho: f64 },
    /// Multivariate t: `z / sqrt(w / df)` with a shared `w ~ chi^2(df)` per row.
    MvT { df: f64, rho: f64 },
    IidExp { rate: f64 },
    IidUniform01,
    IidBeta { a: f64, b: f64 },
}

impl CovariateLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CovariateLaw::MvNormalAr { rho } | CovariateLaw::MvLogNormal { rho } => rho.abs() < 1.0,
            CovariateLaw::MvT { df, rho } => df > 0.0 && rho.abs() < 1.0,
            CovariateLaw::IidExp { rate } => rate > 0.0,
            CovariateLaw::IidUniform01 => true,
            CovariateLaw::IidBeta { a, b } => a > 0.0 && b > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid covariate law {self:?}")))
        }
    }
}

fn ar_normal<R: Rng + ?Sized>(rho: f64, out: &mut [f64], rng: &mut R) {
    let innov = (1.0 - rho * rho).sqrt();
    let mut prev = 0.0;
    for (j, v) in out.iter_mut().enumerate() {
        let e: f64 = StandardNormal.sample(rng);
        prev = if j == 0 { e } else { rho * prev + innov * e };
        *v = prev;
    }
}

/// `n_rows x n_features` row-major matrix whose first column is all ones.
pub fn generate_covariates<R: Rng + ?Sized>(
    law: &CovariateLaw,
    n_rows: usize,
    n_features: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    law.validate()?;
    if n_features == 0 {
        return Err(Error::InvalidArgument("need at least the intercept column".into()));
    }
    let p = n_features - 1;
    let mut x = vec![0.0; n_rows * n_features];
    let exp = match *law {
        CovariateLaw::IidExp { rate } => Some(Exp::new(rate).expect("positive rate")),
        _ => None,
    };
    let beta = match *law {
        CovariateLaw::IidBeta { a, b } => Some(Beta::new(a, b).expect("positive shapes")),
        _ => None,
    };
    let chi = match *law {
        CovariateLaw::MvT { df, .. } => Some(ChiSquared::new(df).expect("positive df")),
        _ => None,
    };
    for row in x.chunks_exact_mut(n_features) {
        row[0] = 1.0;
        let rest = &mut row[1..];
        match *law {
            CovariateLaw::MvNormalAr { rho } => ar_normal(rho, rest, rng),
            CovariateLaw::MvLogNormal { rho } => {
                ar_normal(rho, rest, rng);
                rest.iter_mut().for_each(|v| *v = v.exp());
            }
            CovariateLaw::MvT { df, rho } => {
                ar_normal(rho, rest, rng);
                let w: f64 = chi.as_ref().unwrap().sample(rng);
                let s = (df / w).sqrt();
                rest.iter_mut().for_each(|v| *v *= s);
            }
            CovariateLaw::IidExp { .. } => rest.iter_mut().for_each(|v| *v = exp.as_ref().unwrap().sample(rng)),
            CovariateLaw::IidUniform01 => rest.iter_mut().for_each(|v| *v = rng.random::<f64>()),
            CovariateLaw::IidBeta { .. } => rest.iter_mut().for_each(|v| *v = beta.as_ref().unwrap().sample(rng)),
        }
        debug_assert_eq!(rest.len(), p);
    }
    Ok(x)
}

/// Draws `y | x` from the model at `beta` for every row of the row-major `x`.
pub fn generate_responses<R: Rng + ?Sized>(
    model: &GlmModel,
    beta: &[f64],
    x: &[f64],
    n_features: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dim = model.coef_dim(n_features);
    if beta.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: beta.len() });
    }
    if n_features == 0 || !x.len().is_multiple_of(n_features) {
        return Err(Error::DimensionMismatch { expected: n_features, found: x.len() });
    }
    x.chunks_exact(n_features)
        .map(|row| {
            Ok(match model.family {
                Family::MultiLogistic { .. } => {
                    let p = softmax(&model.class_predictors(beta, row));
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut class = p.len() - 1;
                    for (k, pk) in p.iter().enumerate() {
                        acc += pk;
                        if u < acc {
                            class = k;
                            break;
                        }
                    }
                    class as f64
                }
                Family::Poisson => {
                    let mu = dot(beta, row).exp();
                    Poisson::new(mu)
                        .map_err(|e| Error::InvalidArgument(format!("Poisson mean {mu}: {e}")))?
                        .sample(rng)
                }
                _ => {
                    let p = model.univariate_terms(dot(beta, row)).mu;
                    (rng.random::<f64>() < p) as u8 as f64
                }
            })
        })
        .collect()
}

/// Covariates and responses in one dataset.
pub fn generate_dataset<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    model: &GlmModel,
    law: &CovariateLaw,
    beta: &[f64],
    n_rows: usize,
    n_features: usize,
    x_rng: &mut R1,
    y_rng: &mut R2,
) -> Result<Dataset> {
    let x = generate_covariates(law, n_rows, n_features, x_rng)?;
    let y = generate_responses(model, beta, &x, n_features, y_rng)?;
    Dataset::from_rows(x, y, n_features)
}

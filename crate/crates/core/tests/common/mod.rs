#![allow(dead_code, clippy::same_item_push)]

use mscle_core::experiments::generate_responses;
use mscle_core::glm::{BinaryLink, Coefficients, Dataset, GlmModel};
use mscle_core::subsampling::{plan_probabilities, HVariant, PilotEstimate, SamplingMethod, SubsampleDraw, SubsamplePlan};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A small random problem: data, pilot, plan and a draw of every row with
/// positive probability, plus an evaluation point near the pilot.
pub struct Config {
    pub model: GlmModel,
    pub data: Dataset,
    pub pilot: PilotEstimate,
    pub plan: SubsamplePlan,
    pub draw: SubsampleDraw,
    pub beta: Vec<f64>,
}

pub fn families() -> Vec<GlmModel> {
    vec![
        GlmModel::logistic(),
        GlmModel::binary(BinaryLink::Probit),
        GlmModel::binary(BinaryLink::Cloglog),
        GlmModel::poisson(),
        GlmModel::multi_logistic(3).unwrap(),
    ]
}

pub fn sampling_methods(model: &GlmModel) -> Vec<SamplingMethod> {
    if model.classes().is_some() {
        vec![SamplingMethod::MultiClassLopt, SamplingMethod::GradientNorm]
    } else {
        vec![
            SamplingMethod::UnifiedGlm(HVariant::Ones),
            SamplingMethod::UnifiedGlm(HVariant::XNorm),
            SamplingMethod::UnifiedGlm(HVariant::AOpt),
            SamplingMethod::GradientNorm,
        ]
    }
}

pub fn random_config<R: Rng>(model: &GlmModel, method: SamplingMethod, rows: usize, d: usize, rng: &mut R) -> Config {
    let mut x = Vec::with_capacity(rows * d);
    for _ in 0..rows {
        x.push(1.0);
        for _ in 1..d {
            let z: f64 = StandardNormal.sample(rng);
            x.push(0.8 * z);
        }
    }
    let dim = model.coef_dim(d);
    let truth: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.8..0.8)).collect();
    let y = generate_responses(model, &truth, &x, d, rng).unwrap();
    let data = Dataset::from_rows(x, y, d).unwrap();
    let pilot_beta: Vec<f64> = truth.iter().map(|b| b + rng.random_range(-0.4..0.4)).collect();
    let pilot =
        PilotEstimate::from_coefficients(model, &data, Coefficients::new(pilot_beta.clone()), (0..rows).collect(), method)
            .unwrap();
    let plan = plan_probabilities(model, &data, &pilot, rows as f64 / 2.0).unwrap();
    let draw = SubsampleDraw::from_indicators(plan.probabilities.iter().map(|&p| p > 0.0).collect());
    let beta = pilot_beta.iter().map(|b| b + rng.random_range(-0.4..0.4)).collect();
    Config { model: *model, data, pilot, plan, draw, beta }
}

/// `max_j |a_j - b_j| / max(max_j |b_j|, 1)`.
pub fn scaled_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max) / scale
}

/// Central finite-difference gradient with step `1e-6 (1 + |beta_j|)`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, beta: &[f64]) -> Vec<f64> {
    (0..beta.len())
        .map(|j| {
            let h = 1e-6 * (1.0 + beta[j].abs());
            let mut up = beta.to_vec();
            let mut dn = beta.to_vec();
            up[j] += h;
            dn[j] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Logistic pseudo-random data of size `n` with `d - 1` normal covariates.
pub fn logistic_data<R: Rng>(n: usize, beta: &[f64], rng: &mut R) -> Dataset {
    let d = beta.len();
    let mut x = Vec::with_capacity(n * d);
    for _ in 0..n {
        x.push(1.0);
        for _ in 1..d {
            x.push(StandardNormal.sample(rng));
        }
    }
    let y = generate_responses(&GlmModel::logistic(), beta, &x, d, rng).unwrap();
    Dataset::from_rows(x, y, d).unwrap()
}

/// Double-double accumulator for brute-force oracles.
#[derive(Debug, Clone, Copy, Default)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    pub fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (s, e) = two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        Dd::norm(s, e + self.lo + o.lo)
    }

    pub fn mul_f(self, b: f64) -> Dd {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p);
        Dd::norm(p, e + self.lo * b)
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::norm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    pub fn div_f(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let r = self.add(Dd::new(q1).mul_f(-b));
        Dd::norm(q1, r.hi / b)
    }

    /// `|a - b|` exactly as a double-double.
    pub fn abs_diff(a: f64, b: f64) -> Dd {
        let (s, e) = two_sum(a, -b);
        if s < 0.0 || (s == 0.0 && e < 0.0) {
            Dd { hi: -s, lo: -e }
        } else {
            Dd { hi: s, lo: e }
        }
    }
}

/// Poisson pmf terms `e^{-mu} mu^y / y!` from `y = 0` until the `y^3`-weighted
/// tail is negligible (well below the 1e-14 tail-mass requirement).
pub fn poisson_terms(mu: f64) -> Vec<Dd> {
    let mut terms = vec![Dd::new((-mu).exp())];
    let mut mass = terms[0];
    let mut y = 0u32;
    loop {
        y += 1;
        let t = terms.last().unwrap().mul_f(mu).div_f(y as f64);
        terms.push(t);
        mass = mass.add(t);
        if y as f64 > mu + 10.0 && 1.0 - mass.value() < 1e-14 && t.value() * (y as f64).powi(3) < 1e-18 {
            break;
        }
    }
    terms
}

/// Brute-force `E(y^j |y - mu_tilde|)`, `j = 0, 1, 2`, for `y ~ Poisson(mu)`.
pub fn brute_poisson_kappas(mu: f64, mu_tilde: f64) -> [f64; 3] {
    let mut k = [Dd::default(); 3];
    for (y, p) in poisson_terms(mu).into_iter().enumerate() {
        let w = Dd::abs_diff(y as f64, mu_tilde).mul(p);
        k[0] = k[0].add(w);
        k[1] = k[1].add(w.mul_f(y as f64));
        k[2] = k[2].add(w.mul_f((y * y) as f64));
    }
    k.map(Dd::value)
}

/// Brute-force `q(m, k) = sum_{y <= m} y^k Pois(y; mu)`.
pub fn brute_q(m: i64, k: u32, mu: f64) -> f64 {
    if m < 0 {
        return 0.0;
    }
    let mut s = Dd::default();
    for (y, p) in poisson_terms(mu).into_iter().enumerate().take(m as usize + 1) {
        s = s.add(p.mul_f((y as f64).powi(k as i32)));
    }
    s.value()
}

/// Brute-force binary moments by enumerating `y in {0, 1}`.
pub fn brute_binary_kappas(p: f64, p_plt: f64) -> [f64; 3] {
    let mut k = [0.0; 3];
    for (y, prob) in [(0.0f64, 1.0 - p), (1.0, p)] {
        let w = prob * (y - p_plt).abs();
        k[0] += w;
        k[1] += y * w;
        k[2] += y * y * w;
    }
    k
}

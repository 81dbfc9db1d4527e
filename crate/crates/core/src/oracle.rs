//! Classical ground truth for the example models.
//!
//! - Reflected Brownian motion with re-entrance: ½f″ with the nonlocal
//!   boundary condition αf′(0) + ∫(f(x) − f(0))|g(x)|²dx = 0, discretized
//!   and exponentiated (no sampling).
//! - Transport with jumps: a point moves toward 0 at unit speed; on reaching
//!   0 it jumps to a point drawn from |g|². Sampled exactly in law.
//! - Pure birth chains: explosion iff Σ1/λ_k < ∞.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, from_real, CMat};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClassicalSpec {
    ReflectedBm { alpha: f64, g: Vec<f64>, h: f64 },
    TransportJump { g: Vec<f64>, h: f64 },
    PureBirth { rates: Vec<f64> },
}

impl ClassicalSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ClassicalSpec::ReflectedBm { .. } => "reflected_bm_reentrance",
            ClassicalSpec::TransportJump { .. } => "transport_jump",
            ClassicalSpec::PureBirth { .. } => "pure_birth",
        }
    }
}

/// Discrete generator: ½Δ_h inside, reflecting at x_max, and at the origin
/// ½(f₁ − f₀)/h² + (1/(2αh)) Σ_k h|g_k|²(f_k − f₀).
pub fn classical_generator_bm(spec: &ClassicalSpec) -> Result<CMat> {
    let ClassicalSpec::ReflectedBm { alpha, g, h } = spec else {
        return Err(Error::Parameter(format!("expected reflected_bm_reentrance spec, got {}", spec.kind())));
    };
    let (alpha, h, n) = (*alpha, *h, g.len());
    if n < 2 || !(alpha > 0.0) || !(h > 0.0) {
        return Err(Error::Parameter("reflected_bm spec needs >= 2 points, alpha > 0, h > 0".into()));
    }
    let d2 = 0.5 / (h * h);
    let mut a = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        a[(k, k - 1)] += d2;
        a[(k, k)] -= d2;
        if k + 1 < n {
            a[(k, k + 1)] += d2;
            a[(k, k)] -= d2;
        }
    }
    a[(0, 1)] += d2;
    a[(0, 0)] -= d2;
    let coef = 1.0 / (2.0 * alpha * h);
    for k in 1..n {
        let r = coef * h * g[k] * g[k];
        a[(0, k)] += r;
        a[(0, 0)] -= r;
    }
    Ok(from_real(&a))
}

/// e^{tA}f for the reflected-BM generator.
pub fn bm_expectation(spec: &ClassicalSpec, f: &[f64], t: f64) -> Result<Vec<f64>> {
    let a = classical_generator_bm(spec)?;
    if f.len() != a.nrows() {
        return Err(Error::Dimension("f does not match the grid".into()));
    }
    let e = linalg::expm(&(a * linalg::c(t)));
    let fv = DVector::from_iterator(f.len(), f.iter().map(|&x| linalg::c(x)));
    Ok((e * fv).iter().map(|z| z.re).collect())
}

/// Replaces f₀ so that the discrete boundary condition holds; returns the
/// projected vector and |Δf₀|.
pub fn boundary_projection(spec: &ClassicalSpec, f: &[f64]) -> Result<(Vec<f64>, f64)> {
    let ClassicalSpec::ReflectedBm { alpha, g, h } = spec else {
        return Err(Error::Parameter("boundary projection applies to reflected_bm only".into()));
    };
    let mut num = alpha * f[1] / h;
    let mut den = alpha / h;
    for k in 1..f.len() {
        num += h * g[k] * g[k] * f[k];
        den += h * g[k] * g[k];
    }
    let mut out = f.to_vec();
    out[0] = num / den;
    let shift = (out[0] - f[0]).abs();
    Ok((out, shift))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathStats {
    pub n_paths: usize,
    pub seed: u64,
    /// observable → (mean, std_error)
    pub estimates: BTreeMap<String, (f64, f64)>,
}

/// Inverse-CDF sampler on the grid-quantized density |g|²: pick cell k with
/// probability h|g_k|², then a uniform point inside [kh, (k+1)h].
struct JumpSampler {
    cdf: Vec<f64>,
    h: f64,
}

impl JumpSampler {
    fn new(g: &[f64], h: f64) -> Result<Self> {
        let mass: f64 = g.iter().map(|v| h * v * v).sum();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::Parameter(format!("jump density must have unit mass, got {mass:.12}")));
        }
        let mut acc = 0.0;
        let cdf = g
            .iter()
            .map(|v| {
                acc += h * v * v / mass;
                acc
            })
            .collect();
        Ok(JumpSampler { cdf, h })
    }

    fn cell(cdf: &[f64], u: f64) -> usize {
        cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let k = Self::cell(&self.cdf, rng.random::<f64>());
        (k as f64 + rng.random::<f64>()) * self.h
    }
}

fn path_rng(seed: u64, idx: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(idx);
    r
}

fn run_transport(sampler: &JumpSampler, mut x: f64, t: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mut left = t;
    while x < left {
        left -= x;
        x = sampler.sample(rng);
    }
    x - left
}

fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub type Observable<'a> = (&'a str, &'a (dyn Fn(f64) -> f64 + Sync));

/// Start distribution of the transport simulation.
pub enum Start<'a> {
    Point(f64),
    /// cell probabilities on the spec's grid, uniform inside each cell
    Cells(&'a [f64]),
}

/// Positions X_t of `n_paths` independent paths. Path i draws from its own
/// ChaCha stream (root seed, stream i), so results do not depend on how
/// rayon schedules the work.
pub fn transport_positions(spec: &ClassicalSpec, start: &Start, t: f64, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
    let ClassicalSpec::TransportJump { g, h } = spec else {
        return Err(Error::Parameter(format!("expected transport_jump spec, got {}", spec.kind())));
    };
    if !(t >= 0.0) {
        return Err(Error::Precondition("t must be >= 0".into()));
    }
    let sampler = JumpSampler::new(g, *h)?;
    let start_cdf = match start {
        Start::Point(x0) if *x0 >= 0.0 => None,
        Start::Point(x0) => return Err(Error::Precondition(format!("x0 must be >= 0, got {x0}"))),
        Start::Cells(p) => {
            let total: f64 = p.iter().sum();
            let mut acc = 0.0;
            Some(p.iter().map(|v| {
                acc += v / total;
                acc
            }).collect::<Vec<f64>>())
        }
    };
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let x0 = match (start, &start_cdf) {
                (Start::Point(x0), _) => *x0,
                (_, Some(cdf)) => {
                    let k = JumpSampler::cell(cdf, rng.random::<f64>());
                    (k as f64 + rng.random::<f64>()) * h
                }
                _ => unreachable!(),
            };
            run_transport(&sampler, x0, t, &mut rng)
        })
        .collect())
}

pub fn simulate_transport_jump(
    spec: &ClassicalSpec,
    observables: &[Observable],
    start: &Start,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathStats> {
    let xs = transport_positions(spec, start, t, n_paths, seed)?;
    let mut estimates = BTreeMap::new();
    for (name, f) in observables {
        let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        estimates.insert((*name).to_string(), summarize(&vals));
    }
    Ok(PathStats { n_paths, seed, estimates })
}

// ---------------------------------------------------------------------------
// explosion

/// Asymptotic shape λ_k ~ k^p (log k)^q of a rate sequence.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TailRule {
    Polynomial { p: f64, q: f64 },
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Explosion {
    Explosive,
    NonExplosive,
    Undetermined,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplosionVerdict {
    /// (K, Σ_{k<K} 1/λ_k)
    pub partial_sums: Vec<(usize, f64)>,
    pub verdict: Explosion,
}

/// Σ 1/λ_k converges for k^p (log k)^q iff p > 1, or p = 1 and q > 1.
pub fn explosion_test(rates: &[f64], tail: TailRule) -> Result<ExplosionVerdict> {
    if rates.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Parameter("rates must be positive".into()));
    }
    let mut partial_sums = Vec::new();
    let mut s = 0.0;
    let mut next = 1;
    for (k, r) in rates.iter().enumerate() {
        s += 1.0 / r;
        if k + 1 == next || k + 1 == rates.len() {
            partial_sums.push((k + 1, s));
            next *= 10;
        }
    }
    let verdict = match tail {
        TailRule::Polynomial { p, q } if p > 1.0 || (p == 1.0 && q > 1.0) => Explosion::Explosive,
        TailRule::Polynomial { .. } => Explosion::NonExplosive,
        TailRule::Unknown => Explosion::Undetermined,
    };
    Ok(ExplosionVerdict { partial_sums, verdict })
}

/// E₀[e^{−λζ}] for the truncated chain killed on leaving state N−1: the
/// solution v of (λ − A)v = κ at state 0, A the sub-generator and κ the
/// killing rate. Equals ⟨e₀, (I − λR_λ(I)) e₀⟩ of the quantum truncation.
pub fn birth_killing_transform(rates: &[f64], lambda: f64) -> Result<f64> {
    let n = rates.len();
    if n < 2 || !(lambda > 0.0) {
        return Err(Error::Parameter("need >= 2 rates and lambda > 0".into()));
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut kappa = DVector::<f64>::zeros(n);
    for k in 0..n {
        m[(k, k)] = lambda + rates[k];
        if k + 1 < n {
            m[(k, k + 1)] = -rates[k];
        } else {
            kappa[k] = rates[k];
        }
    }
    let v = m.lu().solve(&kappa).ok_or(Error::Solver { what: "killing transform".into(), condition: f64::INFINITY })?;
    Ok(v[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_g(n: usize, h: f64) -> Vec<f64> {
        let g: Vec<f64> = (0..n).map(|k| (-((k as f64 + 0.5) * h)).exp()).collect();
        let s = (h * g.iter().map(|v| v * v).sum::<f64>()).sqrt();
        g.iter().map(|v| v / s).collect()
    }

    #[test]
    fn bm_generator_is_markov() {
        let h = 0.25;
        let spec = ClassicalSpec::ReflectedBm { alpha: 1.0, g: unit_g(32, h), h };
        let a = classical_generator_bm(&spec).unwrap();
        for i in 0..32 {
            let row: f64 = (0..32).map(|j| a[(i, j)].re).sum();
            assert!(row.abs() < 1e-10);
            for j in 0..32 {
                if i != j {
                    assert!(a[(i, j)].re >= 0.0);
                }
            }
        }
    }

    #[test]
    fn bm_zero_g_is_neumann() {
        let spec = ClassicalSpec::ReflectedBm { alpha: 1.0, g: vec![0.0; 8], h: 0.5 };
        let a = classical_generator_bm(&spec).unwrap();
        assert_eq!(a[(0, 0)].re, -2.0);
        assert_eq!(a[(0, 1)].re, 2.0);
        assert!((2..8).all(|k| a[(0, k)].re == 0.0));
    }

    #[test]
    fn transport_deterministic_segment() {
        let h = 0.1;
        let spec = ClassicalSpec::TransportJump { g: unit_g(100, h), h };
        let f = |x: f64| (-x).exp();
        let s = simulate_transport_jump(&spec, &[("exp", &f)], &Start::Point(2.0), 0.5, 100, 1).unwrap();
        let (m, se) = s.estimates["exp"];
        assert!((m - (-1.5f64).exp()).abs() < 1e-15 && se < 1e-15);
        let one = |_: f64| 1.0;
        let s = simulate_transport_jump(&spec, &[("one", &one)], &Start::Point(0.2), 3.0, 1000, 1).unwrap();
        assert_eq!(s.estimates["one"], (1.0, 0.0));
    }

    #[test]
    fn transport_is_reproducible_across_thread_counts() {
        let h = 0.1;
        let spec = ClassicalSpec::TransportJump { g: unit_g(100, h), h };
        let a = transport_positions(&spec, &Start::Point(1.0), 2.0, 5000, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| transport_positions(&spec, &Start::Point(1.0), 2.0, 5000, 42).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn unnormalized_jump_density_rejected() {
        let spec = ClassicalSpec::TransportJump { g: vec![1.0; 10], h: 0.5 };
        assert!(transport_positions(&spec, &Start::Point(1.0), 2.0, 10, 0).is_err());
    }

    #[test]
    fn explosion_rules() {
        let sq: Vec<f64> = (0..10000).map(|k| ((k + 1) * (k + 1)) as f64).collect();
        let v = explosion_test(&sq, TailRule::Polynomial { p: 2.0, q: 0.0 }).unwrap();
        assert_eq!(v.verdict, Explosion::Explosive);
        let last = v.partial_sums.last().unwrap().1;
        assert!((last - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-3);
        let lin: Vec<f64> = (0..1000).map(|k| (k + 1) as f64).collect();
        assert_eq!(explosion_test(&lin, TailRule::Polynomial { p: 1.0, q: 0.0 }).unwrap().verdict, Explosion::NonExplosive);
        assert_eq!(explosion_test(&lin, TailRule::Unknown).unwrap().verdict, Explosion::Undetermined);
    }

    #[test]
    fn log_squared_rates_explode_by_integral_test() {
        // λ_k = (k+1) log(k+2)²: ∫_K^∞ dx/((x+1)log²(x+2)) ≤ 1/log(K+1), finite
        let rates: Vec<f64> = (0..100_000).map(|k| (k as f64 + 1.0) * ((k as f64 + 2.0).ln()).powi(2)).collect();
        let v = explosion_test(&rates, TailRule::Polynomial { p: 1.0, q: 2.0 }).unwrap();
        assert_eq!(v.verdict, Explosion::Explosive);
        let k = rates.len() as f64;
        let tail_bound = 1.0 / (k + 1.0).ln();
        let total = v.partial_sums.last().unwrap().1 + tail_bound;
        assert!(total.is_finite() && total < 10.0);
    }

    #[test]
    fn killing_transform_product_formula() {
        let rates: Vec<f64> = (0..30).map(|k| ((k + 1) * (k + 1)) as f64).collect();
        let v = birth_killing_transform(&rates, 1.0).unwrap();
        let p: f64 = rates.iter().map(|r| r / (1.0 + r)).product();
        assert!((v - p).abs() < 1e-13);
    }
}

//! Heisenberg-picture evolution T_t(X) and the Picard construction of the
//! minimal semigroup.
//!
//! Small models (dim ≤ [`SUPEROP_MAX_DIM`]) are propagated exactly through
//! the exponential of the vectorized generator; larger ones use adaptive
//! Dormand–Prince 5(4) on dX/dt = G*X + XG + Σ L*XL.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, eye, fro_norm, hermitian_part, op_norm, CMat};
use crate::operators::{semigroup_action, GKSLModel};
use crate::resolvent::{neumann_resolvent, ResolventConfig};

/// Above this dimension the dim²×dim² superoperator is not formed.
pub const SUPEROP_MAX_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    Trapezoid,
    Simpson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub t_final: f64,
    pub dt: f64,
    pub quad_rule: QuadRule,
    pub picard_depth: usize,
}

impl EvolutionConfig {
    /// dt = t/200, trapezoid.
    pub fn new(t_final: f64, picard_depth: usize) -> Self {
        let dt = if t_final > 0.0 { t_final / 200.0 } else { 1.0 };
        EvolutionConfig { t_final, dt, quad_rule: QuadRule::Trapezoid, picard_depth }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final >= 0.0) || !(self.dt > 0.0) {
            return Err(Error::Parameter(format!("need t_final >= 0 and dt > 0 (t_final={}, dt={})", self.t_final, self.dt)));
        }
        if self.t_final > 0.0 && self.dt > self.t_final {
            return Err(Error::Parameter(format!("dt={} exceeds t_final={}", self.dt, self.t_final)));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let dp = {
                    let (mut p0, mut p1) = (1.0, z);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    n as f64 * (z * p1 - p0) / (z * z - 1.0)
                };
                x[i] = 0.5 * (1.0 - z);
                w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

// ---------------------------------------------------------------------------
// Propagation

/// vec(L(X)) = S vec(X) with column-major vec:
/// S = I⊗G* + Gᵀ⊗I + Σ Lᵀ⊗L*.
pub fn superoperator(model: &GKSLModel) -> CMat {
    let n = model.dim();
    let id = eye(n);
    let mut s = id.kronecker(&model.g.adjoint()) + model.g.transpose().kronecker(&id);
    for l in &model.ls {
        s += l.transpose().kronecker(&l.adjoint());
    }
    s
}

fn vec_of(x: &CMat) -> DVector<Complex64> {
    DVector::from_column_slice(x.as_slice())
}

fn mat_of(v: &DVector<Complex64>, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

/// Fixed-step propagator T_dt, reusable across many steps.
pub enum Propagator<'a> {
    Superop { n: usize, e: CMat },
    Ode { model: &'a GKSLModel, dt: f64 },
}

impl<'a> Propagator<'a> {
    pub fn new(model: &'a GKSLModel, dt: f64) -> Self {
        if model.dim() <= SUPEROP_MAX_DIM {
            Propagator::Superop { n: model.dim(), e: linalg::expm(&(superoperator(model) * c(dt))) }
        } else {
            Propagator::Ode { model, dt }
        }
    }

    pub fn apply(&self, x: &CMat) -> Result<CMat> {
        match self {
            Propagator::Superop { n, e } => Ok(mat_of(&(e * vec_of(x)), *n)),
            Propagator::Ode { model, dt } => dopri(model, x, *dt),
        }
    }
}

fn rhs(model: &GKSLModel, x: &CMat) -> CMat {
    linalg::adj_mul(&model.g, x) + linalg::mul(x, &model.g) + model.jump_map(x)
}

// Dormand–Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const DOPRI_RTOL: f64 = 1e-11;

fn dopri(model: &GKSLModel, x0: &CMat, t: f64) -> Result<CMat> {
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let scale = fro_norm(x0).max(1e-300);
    let atol = DOPRI_RTOL * scale;
    let gen_norm = 2.0 * linalg::one_norm(&model.g) + model.ls.iter().map(|l| linalg::one_norm(l).powi(2)).sum::<f64>();
    let mut h = (0.5 / gen_norm.max(1e-12)).min(t);
    let mut x = x0.clone();
    let mut s = 0.0;
    let mut k1 = rhs(model, &x);
    let mut steps = 0usize;
    while s < t {
        if steps > 2_000_000 {
            return Err(Error::Integration(format!("step budget exhausted at t={s:.6e} of {t:.6e}")));
        }
        steps += 1;
        let h_eff = h.min(t - s);
        let hc = c(h_eff);
        let k2 = rhs(model, &(&x + &k1 * (hc * A21)));
        let k3 = rhs(model, &(&x + &k1 * (hc * A31) + &k2 * (hc * A32)));
        let k4 = rhs(model, &(&x + &k1 * (hc * A41) + &k2 * (hc * A42) + &k3 * (hc * A43)));
        let k5 = rhs(model, &(&x + &k1 * (hc * A51) + &k2 * (hc * A52) + &k3 * (hc * A53) + &k4 * (hc * A54)));
        let k6 = rhs(model, &(&x + &k1 * (hc * A61) + &k2 * (hc * A62) + &k3 * (hc * A63) + &k4 * (hc * A64) + &k5 * (hc * A65)));
        let xn = &x + (&k1 * c(B1) + &k3 * c(B3) + &k4 * c(B4) + &k5 * c(B5) + &k6 * c(B6)) * hc;
        let k7 = rhs(model, &xn);
        let err = (&k1 * c(E1) + &k3 * c(E3) + &k4 * c(E4) + &k5 * c(E5) + &k6 * c(E6) + &k7 * c(E7)) * hc;
        let tol = atol + DOPRI_RTOL * fro_norm(&xn);
        let ratio = fro_norm(&err) / tol;
        if !ratio.is_finite() {
            return Err(Error::Integration(format!("non-finite error estimate at t={s:.6e}, h={h_eff:.3e}")));
        }
        if ratio <= 1.0 {
            s += h_eff;
            x = xn;
            k1 = k7;
        }
        let fac = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h = h_eff * fac;
        if h < 1e-14 * t {
            return Err(Error::Integration(format!("step size underflow at t={s:.6e}")));
        }
    }
    Ok(x)
}

/// T_t(X).
pub fn evolve(model: &GKSLModel, x: &CMat, t: f64) -> Result<CMat> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("evolution time must be >= 0, got {t}")));
    }
    if x.shape() != model.g.shape() {
        return Err(Error::Dimension("X does not match model dim".into()));
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    let herm = linalg::is_hermitian(x, 1e-14);
    let y = Propagator::new(model, t).apply(x)?;
    Ok(if herm { hermitian_part(&y) } else { y })
}

/// ‖T_{t+s}(X) − T_t(T_s(X))‖.
pub fn semigroup_property_check(model: &GKSLModel, x: &CMat, s: f64, t: f64) -> Result<f64> {
    let lhs = evolve(model, x, t + s)?;
    let rhs = evolve(model, &evolve(model, x, s)?, t)?;
    Ok(op_norm(&(lhs - rhs)))
}

// ---------------------------------------------------------------------------
// Picard iterates

const PICARD_NODES: usize = 8;

struct PicardGrid {
    steps: usize,
    p_dt: CMat,
    nodes: Vec<(f64, f64, CMat)>, // (σ/dt, weight·dt, P(σ))
}

impl PicardGrid {
    fn new(model: &GKSLModel, t: f64, dt: f64) -> Result<Self> {
        let steps = ((t / dt).round() as usize).max(1);
        let dt = t / steps as f64;
        let (xs, ws) = gauss_legendre(PICARD_NODES);
        let mut nodes = Vec::with_capacity(PICARD_NODES);
        for (x, w) in xs.into_iter().zip(ws) {
            nodes.push((x, w * dt, semigroup_action(model, x * dt)?));
        }
        Ok(PicardGrid { steps, p_dt: semigroup_action(model, dt)?, nodes })
    }

    /// ∫₀^{dt} P(σ)* [Σ_i ℓ_i(σ/dt) J_i] P(σ) dσ with interpolation weights ℓ_i.
    fn panel(&self, js: &[&CMat], basis: impl Fn(f64) -> Vec<f64>) -> CMat {
        let n = js[0].nrows();
        let mut out = CMat::zeros(n, n);
        for (tau, w, p) in &self.nodes {
            let l = basis(*tau);
            let mut mix = CMat::zeros(n, n);
            for (j, li) in js.iter().zip(l) {
                mix += *j * c(li);
            }
            out += p.adjoint() * mix * p * c(*w);
        }
        out
    }
}

fn picard_once(model: &GKSLModel, x: &CMat, cfg: &EvolutionConfig) -> Result<Vec<CMat>> {
    let grid = PicardGrid::new(model, cfg.t_final, cfg.dt)?;
    let m = grid.steps;
    let n = model.dim();

    // T⁽⁰⁾ on the grid
    let mut base = Vec::with_capacity(m + 1);
    let mut p = eye(n);
    for _ in 0..=m {
        base.push(hermitian_part(&(p.adjoint() * x * &p)));
        p = &p * &grid.p_dt;
    }
    let mut out = vec![base[m].clone()];
    let mut level = base.clone();
    for _ in 0..cfg.picard_depth {
        let js: Vec<CMat> = level.iter().map(|t| model.jump_map(t)).collect();
        let mut next = Vec::with_capacity(m + 1);
        let mut conv = CMat::zeros(n, n);
        next.push(base[0].clone());
        for j in 0..m {
            let v = match cfg.quad_rule {
                QuadRule::Simpson if j >= 1 => grid.panel(&[&js[j + 1], &js[j], &js[j - 1]], |t| {
                    vec![(t - 1.0) * (t - 2.0) / 2.0, t * (2.0 - t), t * (t - 1.0) / 2.0]
                }),
                _ => grid.panel(&[&js[j + 1], &js[j]], |t| vec![1.0 - t, t]),
            };
            conv = grid.p_dt.adjoint() * conv * &grid.p_dt + v;
            next.push(hermitian_part(&(&base[j + 1] + &conv)));
        }
        if next.iter().any(|t| t.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(Error::Integration("non-finite Picard iterate".into()));
        }
        out.push(next[m].clone());
        level = next;
    }
    Ok(out)
}

/// [T⁽⁰⁾_t(X), …, T⁽ⁿ⁾_t(X)] at t = t_final.
///
/// The convolution is discretized interval by interval: on each step the
/// iterate is interpolated in time (linear, or backward quadratic for
/// Simpson) and the product with P(σ)*·P(σ) is integrated by 8-point
/// Gauss–Legendre. The linear rule keeps every panel a positive combination,
/// so positivity and the bound T ⪯ ‖X‖I survive discretization.
pub fn picard_iterates(model: &GKSLModel, x: &CMat, cfg: &EvolutionConfig) -> Result<Vec<CMat>> {
    cfg.validate()?;
    if x.shape() != model.g.shape() {
        return Err(Error::Dimension("X does not match model dim".into()));
    }
    if linalg::min_eig(x) < -1e-12 * op_norm(x).max(1.0) {
        return Err(Error::Precondition("Picard iterates need X positive semidefinite".into()));
    }
    if cfg.t_final == 0.0 {
        return Ok(vec![x.clone(); cfg.picard_depth + 1]);
    }
    let mut cfg = cfg.clone();
    for _ in 0..3 {
        match picard_once(model, x, &cfg) {
            Err(Error::Integration(_)) => cfg.dt /= 2.0,
            r => return r,
        }
    }
    Err(Error::Integration("Picard quadrature unstable after three dt halvings".into()))
}

// ---------------------------------------------------------------------------
// Laplace cross-check

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossCheck {
    #[serde(skip)]
    pub quad_value: CMat,
    #[serde(skip)]
    pub resolvent_value: CMat,
    /// ‖quad − R‖ / ‖R‖ (absolute when R = 0)
    pub discrepancy: f64,
    pub tail_bound: f64,
    pub t_final: f64,
    pub panels: usize,
}

/// ∫₀^T e^{−λt} T_t(X) dt by composite Gauss–Legendre against the Neumann
/// resolvent. T is chosen so that the neglected tail e^{−λT}‖X‖/λ stays below
/// `tail_target`.
pub fn laplace_crosscheck(model: &GKSLModel, lambda: f64, x: &CMat, res: &ResolventConfig, tail_target: f64) -> Result<CrossCheck> {
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("lambda must be > 0, got {lambda}")));
    }
    let xn = op_norm(x);
    let n = model.dim();
    let resolvent_value = neumann_resolvent(model, &ResolventConfig { lambda, ..res.clone() }, x)?.r;
    if xn == 0.0 {
        return Ok(CrossCheck {
            quad_value: CMat::zeros(n, n),
            resolvent_value,
            discrepancy: 0.0,
            tail_bound: 0.0,
            t_final: 0.0,
            panels: 0,
        });
    }
    let t_final = ((xn / (lambda * tail_target)).ln() / lambda).max(0.0);
    let rate = 2.0 * linalg::one_norm(&model.g) + model.ls.iter().map(|l| linalg::one_norm(l).powi(2)).sum::<f64>();
    let width = 1.0 / (lambda + rate);
    let panels = ((t_final / width).ceil() as usize).max(1);
    let width = t_final / panels as f64;
    let (xs, ws) = gauss_legendre(PICARD_NODES);
    let step = Propagator::new(model, width);
    let node_props: Vec<Propagator> = xs.iter().map(|&s| Propagator::new(model, s * width)).collect();
    let mut start = x.clone();
    let mut quad = CMat::zeros(n, n);
    for p in 0..panels {
        let t0 = p as f64 * width;
        for ((s, w), prop) in xs.iter().zip(&ws).zip(&node_props) {
            let t = t0 + s * width;
            quad += prop.apply(&start)? * c(w * width * (-lambda * t).exp());
        }
        start = step.apply(&start)?;
    }
    let quad = hermitian_part_if(&quad, x);
    let rn = op_norm(&resolvent_value);
    let diff = op_norm(&(&quad - &resolvent_value));
    Ok(CrossCheck {
        quad_value: quad,
        resolvent_value,
        discrepancy: if rn > 0.0 { diff / rn } else { diff },
        tail_bound: (-lambda * t_final).exp() * xn / lambda,
        t_final,
        panels,
    })
}

fn hermitian_part_if(y: &CMat, x: &CMat) -> CMat {
    if linalg::is_hermitian(x, 1e-14) {
        hermitian_part(y)
    } else {
        y.clone()
    }
}

/// Trajectory rows (t, selected diagonal entries, ‖T_t(I) − I‖) as CSV.
pub fn trajectory_csv(model: &GKSLModel, x: &CMat, times: &[f64], entries: &[usize]) -> Result<String> {
    use std::fmt::Write as _;
    let mut s = String::from("t");
    for k in entries {
        let _ = write!(s, ",re_x{k}{k}");
    }
    s.push_str(",unitality_gap\n");
    let id = eye(model.dim());
    for &t in times {
        let y = evolve(model, x, t)?;
        let yi = evolve(model, &id, t)?;
        let _ = write!(s, "{t:.16e}");
        for &k in entries {
            let _ = write!(s, ",{:.16e}", y[(k, k)].re);
        }
        let _ = writeln!(s, ",{:.16e}", op_norm(&(yi - &id)));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(g: f64, l: f64) -> GKSLModel {
        GKSLModel::new(CMat::from_element(1, 1, c(g)), vec![CMat::from_element(1, 1, c(l))], "scalar").unwrap()
    }

    fn one(x: f64) -> CMat {
        CMat::from_element(1, 1, c(x))
    }

    #[test]
    fn gauss_legendre_integrates_degree_15() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(15)).sum();
        assert!((s - 1.0 / 16.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_evolution() {
        let m = scalar(-1.0, 0.0);
        let y = evolve(&m, &one(1.0), 1.0).unwrap();
        assert!((y[(0, 0)].re - (-2.0f64).exp()).abs() < 1e-14);
        assert_eq!(evolve(&m, &one(3.0), 0.0).unwrap(), one(3.0));
        let e = scalar(-0.5, 1.0);
        assert!((evolve(&e, &one(1.0), 2.0).unwrap()[(0, 0)].re - 1.0).abs() < 1e-13);
    }

    #[test]
    fn dopri_matches_superoperator() {
        let g = CMat::from_fn(5, 5, |i, j| {
            if i == j {
                c(-1.0 - i as f64)
            } else {
                Complex64::new(0.1 * (i as f64 - j as f64), 0.2)
            }
        });
        let l = CMat::from_fn(5, 5, |i, j| c(0.3 / (1.0 + i as f64 + j as f64)));
        let m = GKSLModel::new(g, vec![l], "r").unwrap();
        let x = CMat::from_fn(5, 5, |i, j| c(1.0 / (1.0 + i as f64 + j as f64)));
        let a = evolve(&m, &x, 0.8).unwrap();
        let b = dopri(&m, &x, 0.8).unwrap();
        assert!(fro_norm(&(a - b)) < 1e-9);
    }

    #[test]
    fn scalar_semigroup_property() {
        let m = scalar(-0.7, 0.4);
        assert!(semigroup_property_check(&m, &one(1.0), 0.5, 0.5).unwrap() < 1e-12);
        assert_eq!(semigroup_property_check(&m, &one(1.0), 0.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn picard_scalar_converges_to_one() {
        let m = scalar(-0.5, 1.0);
        let it = picard_iterates(&m, &one(1.0), &EvolutionConfig::new(1.0, 30)).unwrap();
        assert!((it[0][(0, 0)].re - (-1.0f64).exp()).abs() < 1e-12);
        // closed form of the scalar recursion: Σ_{k≤n} e^{−t} t^k / k!
        let mut term = (-1.0f64).exp();
        let mut sum = term;
        for k in 1..=30 {
            term /= k as f64;
            sum += term;
            assert!(it[k][(0, 0)].re <= it.get(k + 1).map(|t| t[(0, 0)].re).unwrap_or(f64::INFINITY) + 1e-12);
            assert!((it[k][(0, 0)].re - sum).abs() < 1e-4, "level {k}");
        }
        assert!((it[30][(0, 0)].re - 1.0).abs() < 1e-4);
    }

    #[test]
    fn picard_simpson_is_more_accurate() {
        let m = scalar(-0.5, 1.0);
        let mut cfg = EvolutionConfig::new(1.0, 20);
        cfg.dt = 0.05;
        let trap = picard_iterates(&m, &one(1.0), &cfg).unwrap();
        cfg.quad_rule = QuadRule::Simpson;
        let simp = picard_iterates(&m, &one(1.0), &cfg).unwrap();
        assert!((simp[20][(0, 0)].re - 1.0).abs() < (trap[20][(0, 0)].re - 1.0).abs());
    }

    #[test]
    fn picard_without_channels_is_constant() {
        let m = GKSLModel::new(one(-0.3), vec![], "free").unwrap();
        let it = picard_iterates(&m, &one(2.0), &EvolutionConfig::new(1.0, 4)).unwrap();
        for t in &it {
            assert!((t[(0, 0)].re - it[0][(0, 0)].re).abs() < 1e-15);
        }
    }

    #[test]
    fn laplace_scalar() {
        let m = scalar(-0.5, 1.0);
        let cc = laplace_crosscheck(&m, 1.0, &one(1.0), &ResolventConfig::default(), 1e-9).unwrap();
        assert!((cc.quad_value[(0, 0)].re - 1.0).abs() < 1e-5);
        assert!(cc.discrepancy < 1e-5 + cc.tail_bound);
        let z = laplace_crosscheck(&m, 1.0, &one(0.0), &ResolventConfig::default(), 1e-9).unwrap();
        assert_eq!(z.discrepancy, 0.0);
    }
}

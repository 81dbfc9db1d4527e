//! Discretized example models.
//!
//! Half-line models live on a cell-centered grid x_k = (k + ½)h, k = 0..n−1,
//! with uniform weight h. Matrices act on orthonormal coordinates v_k = √h·u_k,
//! so point evaluation at the boundary, u(0) ≈ u_0 = v_0/√h, carries the
//! h^{−1/2} factor explicitly and rank-one maps u ↦ u(0)g have honest adjoints.
//!
//! Reflected Brownian motion with re-entrance (`build_reflected_bm`):
//!   G = ½ d²/dx² with u′(0) = θu(0), θ = ‖g‖²/(2α),
//!   L₁ = d/dx, L₂u = u(0) g/√(2α), reference C = −2G.
//!
//! Transport with jumps (`build_transport_jump`):
//!   G = d/dx (motion toward 0), Lu = u(0) g with ‖g‖ = 1,
//!   reference Cu = −2u″ with u′(0) = u(0).
//!
//! Heavy-ion analog on [−x_max, x_max] (`build_heavy_ion_1d`). The physical
//! model is three-dimensional:
//!   H₀ = −Δ/(2m), L_ℓ = W(x)(x_ℓ + α ∂_ℓ), ℓ = 1, 2, 3,
//!   G = −i(H₀ + V) − ½ Σ L_ℓ* L_ℓ, with sup|W|² < (mα²)^{−1},
//! and C = c(−Δ + 1). Only the ℓ = 1 reduction is built here.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::criteria::PhiOperator;
use crate::error::{Error, Result};
use crate::linalg::{self, c, eye, hermitian_part, op_norm, CMat, CVec};
use crate::operators::{check_condition_a, Boundary, GKSLModel, GridMeta, DEFAULT_TOL};
use crate::oracle::ClassicalSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfLineGrid {
    pub n_points: usize,
    pub h: f64,
    pub x_max: f64,
}

impl HalfLineGrid {
    pub fn new(n_points: usize, x_max: f64) -> Result<Self> {
        if n_points < 8 {
            return Err(Error::Parameter(format!("half-line grid needs n_points >= 8, got {n_points}")));
        }
        if !(x_max > 0.0) {
            return Err(Error::Parameter(format!("x_max must be > 0, got {x_max}")));
        }
        Ok(HalfLineGrid { n_points, h: x_max / n_points as f64, x_max })
    }

    pub fn x(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.h
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.x(k)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points().into_iter().map(f).collect()
    }

    /// Orthonormal coordinates √h·u(x_k).
    pub fn coords(&self, u: &[f64]) -> CVec {
        CVec::from_iterator(u.len(), u.iter().map(|&v| c(v * self.h.sqrt())))
    }

    /// h Σ |u_k|².
    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        self.h * u.iter().map(|v| v * v).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    MinusTwoG,
    LaplacianPlusOne,
    RobinLaplacian,
    Custom,
}

/// Positive reference operator C with its square root. `domain` lists
/// linear constraints Σ r_k v_k = 0 describing the boundary condition of
/// D(C); form inequalities are checked on that subspace.
#[derive(Clone, Debug)]
pub struct ReferenceOperator {
    pub c: CMat,
    pub sqrt_c: CMat,
    pub kind: ReferenceKind,
    pub domain: Vec<CVec>,
}

impl ReferenceOperator {
    pub fn new(c_mat: CMat, kind: ReferenceKind) -> Result<Self> {
        let c_mat = hermitian_part(&c_mat);
        let norm = op_norm(&c_mat);
        let lo = linalg::min_eig(&c_mat);
        if lo < -1e-10 * norm.max(1.0) {
            return Err(Error::Parameter(format!("reference operator is not positive (min eig {lo:.3e})")));
        }
        let sqrt_c = linalg::sqrtm_psd(&c_mat);
        Ok(ReferenceOperator { c: c_mat, sqrt_c, kind, domain: Vec::new() })
    }

    pub fn with_domain(mut self, rows: Vec<CVec>) -> Self {
        self.domain = rows;
        self
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Ok(ReferenceOperator::new(&self.c * c(s), self.kind)?.with_domain(self.domain.clone()))
    }
}

#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub model: GKSLModel,
    pub reference: ReferenceOperator,
    pub phi: Option<PhiOperator>,
    pub classical: Option<ClassicalSpec>,
    pub half_line: Option<HalfLineGrid>,
    pub theta: Option<f64>,
    pub defect_norm: f64,
    pub provenance: String,
}

fn forward_difference(n: usize, h: f64, keep_last: bool) -> CMat {
    let mut a = CMat::zeros(n, n);
    for k in 0..n - 1 {
        a[(k, k)] = c(-1.0 / h);
        a[(k, k + 1)] = c(1.0 / h);
    }
    if keep_last {
        a[(n - 1, n - 1)] = c(-1.0 / h);
    }
    a
}

/// Discrete Robin row (u₁ − u₀)/h = θu₀ in orthonormal coordinates.
fn robin_row(n: usize, h: f64, theta: f64) -> CVec {
    let mut r = CVec::zeros(n);
    r[0] = c(-1.0 / h - theta);
    r[1] = c(1.0 / h);
    r
}

fn rank_one_at_origin(values: &[f64], scale: f64) -> CMat {
    // (L v)_k = values_k·scale·u(0)·√h = values_k·scale·v₀
    let n = values.len();
    let mut l = CMat::zeros(n, n);
    for (k, &g) in values.iter().enumerate() {
        l[(k, 0)] = c(g * scale);
    }
    l
}

fn finish(model: GKSLModel, reference: ReferenceOperator, provenance: String) -> Result<ModelBundle> {
    let rep = check_condition_a(&model, DEFAULT_TOL)?;
    Ok(ModelBundle {
        model,
        reference,
        phi: None,
        classical: None,
        half_line: None,
        theta: None,
        defect_norm: rep.defect_norm,
        provenance,
    })
}

pub fn build_reflected_bm(alpha: f64, g: &[f64], grid: &HalfLineGrid) -> Result<ModelBundle> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be > 0, got {alpha}")));
    }
    let n = grid.n_points;
    if g.len() != n {
        return Err(Error::Dimension(format!("g has {} samples, grid has {n}", g.len())));
    }
    let h = grid.h;
    let theta = grid.norm_sq(g) / (2.0 * alpha);

    // ½u″ by ghost points: u₋₁ from the Robin condition, reflecting at x_max
    let mut gm = CMat::zeros(n, n);
    let d2 = 0.5 / (h * h);
    gm[(0, 0)] = c(-d2 - theta / (2.0 * h));
    gm[(0, 1)] = c(d2);
    for k in 1..n - 1 {
        gm[(k, k - 1)] = c(d2);
        gm[(k, k)] = c(-2.0 * d2);
        gm[(k, k + 1)] = c(d2);
    }
    gm[(n - 1, n - 2)] = c(d2);
    gm[(n - 1, n - 1)] = c(-d2);

    let l1 = forward_difference(n, h, false);
    let l2 = rank_one_at_origin(g, 1.0 / (2.0 * alpha).sqrt());
    let meta = GridMeta::new(h, 0.0, grid.x_max, Boundary::Robin { theta }, "cell-centered; reflecting at x_max")?;
    let model = GKSLModel::new(gm.clone(), vec![l1, l2], format!("reflected_bm(alpha={alpha}, n={n})"))?.with_grid(meta);
    let reference = ReferenceOperator::new(&gm * c(-2.0), ReferenceKind::MinusTwoG)?.with_domain(vec![robin_row(n, h, theta)]);
    let mut b = finish(model, reference, format!("reflected Brownian motion with re-entrance, alpha={alpha}, n={n}, x_max={}", grid.x_max))?;
    b.phi = crate::criteria::build_phi(&b.model).ok();
    b.classical = Some(ClassicalSpec::ReflectedBm { alpha, g: g.to_vec(), h });
    b.half_line = Some(grid.clone());
    b.theta = Some(theta);
    Ok(b)
}

pub fn build_transport_jump(g: &[f64], grid: &HalfLineGrid, normalize: bool) -> Result<ModelBundle> {
    let n = grid.n_points;
    if g.len() != n {
        return Err(Error::Dimension(format!("g has {} samples, grid has {n}", g.len())));
    }
    let h = grid.h;
    let norm = grid.norm_sq(g).sqrt();
    let g: Vec<f64> = if (norm - 1.0).abs() <= 1e-10 {
        g.to_vec()
    } else if normalize && norm > 0.0 {
        g.iter().map(|v| v / norm).collect()
    } else {
        return Err(Error::Parameter(format!("g must have unit grid norm, got {norm:.12}")));
    };

    // central skew difference, one-sided at 0 so that G + G* = −e₀e₀*/h
    let mut gm = CMat::zeros(n, n);
    for k in 0..n {
        if k + 1 < n {
            gm[(k, k + 1)] = c(0.5 / h);
        }
        if k > 0 {
            gm[(k, k - 1)] = c(-0.5 / h);
        }
    }
    gm[(0, 0)] = c(-0.5 / h);
    let l = rank_one_at_origin(&g, 1.0);
    let a = forward_difference(n, h, true);
    let mut cm = a.adjoint() * &a;
    cm[(0, 0)] += c(1.0 / h);
    let cm = cm * c(2.0);

    let meta = GridMeta::new(h, 0.0, grid.x_max, Boundary::None, "cell-centered; central transport, Dirichlet C at x_max")?;
    let model = GKSLModel::new(gm, vec![l], format!("transport_jump(n={n})"))?.with_grid(meta);
    let reference = ReferenceOperator::new(cm, ReferenceKind::RobinLaplacian)?.with_domain(vec![robin_row(n, h, 1.0)]);
    let mut b = finish(model, reference, format!("transport toward 0 with re-injection, n={n}, x_max={}", grid.x_max))?;
    b.phi = crate::criteria::build_phi(&b.model).ok();
    b.classical = Some(ClassicalSpec::TransportJump { g, h });
    b.half_line = Some(grid.clone());
    Ok(b)
}

/// Interior grid of [−x_max, x_max] with Dirichlet ends.
pub fn symmetric_grid(n_points: usize, x_max: f64) -> Result<(Vec<f64>, f64)> {
    if n_points < 8 || !(x_max > 0.0) {
        return Err(Error::Parameter("symmetric grid needs n_points >= 8 and x_max > 0".into()));
    }
    let h = 2.0 * x_max / (n_points + 1) as f64;
    Ok(((0..n_points).map(|k| -x_max + (k + 1) as f64 * h).collect(), h))
}

fn dirichlet_laplacian(n: usize, h: f64) -> CMat {
    let mut d = CMat::zeros(n, n);
    for k in 0..n {
        d[(k, k)] = c(-2.0 / (h * h));
        if k + 1 < n {
            d[(k, k + 1)] = c(1.0 / (h * h));
            d[(k + 1, k)] = c(1.0 / (h * h));
        }
    }
    d
}

/// Safety factor applied to the smallest admissible c in C = c(−Δ + 1).
pub const HEAVY_ION_MARGIN: f64 = 1.1;

pub fn build_heavy_ion_1d(mass: f64, alpha: f64, v: &[f64], w: &[f64], n_points: usize, x_max: f64) -> Result<ModelBundle> {
    if !(mass > 0.0) {
        return Err(Error::Parameter(format!("mass must be > 0, got {mass}")));
    }
    let (xs, h) = symmetric_grid(n_points, x_max)?;
    if v.len() != n_points || w.len() != n_points {
        return Err(Error::Dimension("V and W must be sampled on the grid".into()));
    }
    let sup_w2 = w.iter().fold(0.0f64, |m, x| m.max(x * x));
    if alpha != 0.0 && sup_w2 >= 1.0 / (mass * alpha * alpha) {
        return Err(Error::Precondition(format!(
            "sup|W|^2 = {sup_w2:.6} must be < 1/(m alpha^2) = {:.6}",
            1.0 / (mass * alpha * alpha)
        )));
    }
    let n = n_points;
    let lap = dirichlet_laplacian(n, h);
    let mut hmat = &lap * c(-1.0 / (2.0 * mass));
    for k in 0..n {
        hmat[(k, k)] += c(v[k]);
    }
    let mut d0 = CMat::zeros(n, n);
    for k in 0..n {
        if k + 1 < n {
            d0[(k, k + 1)] = c(0.5 / h);
        }
        if k > 0 {
            d0[(k, k - 1)] = c(-0.5 / h);
        }
    }
    let mut l = &d0 * c(alpha);
    for k in 0..n {
        l[(k, k)] += c(xs[k]);
    }
    for k in 0..n {
        for j in 0..n {
            l[(k, j)] *= w[k];
        }
    }
    let mmat = hermitian_part(&(l.adjoint() * &l));
    let model = GKSLModel::from_hamiltonian(hmat, mmat.clone(), vec![l], format!("heavy_ion_1d(m={mass}, alpha={alpha}, n={n})"))?
        .with_grid(GridMeta::new(h, -x_max, x_max, Boundary::None, "interior grid, Dirichlet ends")?);

    let base = -&lap + eye(n);
    // smallest c with Φ ⪯ c·base: max eigenvalue of base^{-1/2} Φ base^{-1/2}
    let bi = linalg::spectral_map(&base, |x| 1.0 / x.sqrt());
    let ratio = linalg::max_eig(&(&bi * &mmat * &bi)).max(0.0);
    let scale = if ratio > 0.0 { HEAVY_ION_MARGIN * ratio } else { 1.0 };
    let reference = ReferenceOperator::new(base * c(scale), ReferenceKind::LaplacianPlusOne)?;
    let mut b = finish(model, reference, format!("1-D heavy-ion analog, c = {scale:.6e}"))?;
    b.phi = crate::criteria::build_phi(&b.model).ok();
    Ok(b)
}

pub fn build_birth_process(rates: &[f64], n_states: usize) -> Result<ModelBundle> {
    if n_states < 2 {
        return Err(Error::Parameter(format!("birth chain needs N >= 2, got {n_states}")));
    }
    if rates.len() < n_states || rates[..n_states].iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Parameter(format!("need {n_states} positive rates")));
    }
    let n = n_states;
    let mut g = CMat::zeros(n, n);
    let mut l = CMat::zeros(n, n);
    for k in 0..n {
        g[(k, k)] = c(-0.5 * rates[k]);
        if k + 1 < n {
            l[(k + 1, k)] = c(rates[k].sqrt());
        }
    }
    let model = GKSLModel::new(g, vec![l], format!("birth(N={n})"))?;
    let reference = ReferenceOperator::new(eye(n), ReferenceKind::Custom)?;
    let mut b = finish(model, reference, format!("pure birth chain truncated at N={n}, last jump dropped"))?;
    b.classical = Some(ClassicalSpec::PureBirth { rates: rates[..n].to_vec() });
    Ok(b)
}

pub fn build_reference(kind: ReferenceKind, model: &GKSLModel, scale: f64) -> Result<ReferenceOperator> {
    let n = model.dim();
    match kind {
        ReferenceKind::MinusTwoG => {
            let cm = &model.g * c(-2.0);
            if !linalg::is_hermitian(&cm, 1e-10) {
                return Err(Error::Parameter("-2G is not hermitian for this model".into()));
            }
            ReferenceOperator::new(cm * c(scale), kind)
        }
        ReferenceKind::LaplacianPlusOne => {
            let h = model.grid.as_ref().map(|g| g.h).ok_or(Error::Parameter("laplacian reference needs grid metadata".into()))?;
            ReferenceOperator::new((-dirichlet_laplacian(n, h) + eye(n)) * c(scale), kind)
        }
        ReferenceKind::RobinLaplacian => {
            let h = model.grid.as_ref().map(|g| g.h).ok_or(Error::Parameter("Robin reference needs grid metadata".into()))?;
            let a = forward_difference(n, h, true);
            let mut cm = a.adjoint() * &a;
            cm[(0, 0)] += c(1.0 / h);
            Ok(ReferenceOperator::new(cm * c(2.0 * scale), kind)?.with_domain(vec![robin_row(n, h, 1.0)]))
        }
        ReferenceKind::Custom => ReferenceOperator::new(eye(n) * c(scale), kind),
    }
}

// ---------------------------------------------------------------------------
// test vectors

/// Exponents of the default family u_j(x) = x^{a_j} e^{−b_j x}, j = 1..20.
/// a₁ = 0, the others in [1, 2.8] so every member has a square-integrable
/// derivative.
pub fn test_family_params() -> Vec<(f64, f64)> {
    (0..20)
        .map(|j| {
            let a = if j == 0 { 0.0 } else { 1.0 + 0.1 * (j - 1) as f64 };
            let b = 1.0 + 1.5 * ((7 * j) % 20) as f64 / 19.0;
            (a, b)
        })
        .collect()
}

pub fn test_function(a: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| x.powf(a) * (-b * x).exp()
}

/// Unit vectors (orthonormal coordinates) of the test family on `grid`,
/// rejecting members that have not decayed by x_max.
pub fn test_family(grid: &HalfLineGrid) -> Result<Vec<CVec>> {
    let mut out = Vec::new();
    for (a, b) in test_family_params() {
        let f = test_function(a, b);
        let u = grid.sample(&f);
        let norm = grid.norm_sq(&u).sqrt();
        if f(grid.x_max).abs() > 1e-6 * norm {
            return Err(Error::Precondition(format!("test function x^{a}e^(-{b}x) has not decayed by x_max={}", grid.x_max)));
        }
        let v = grid.coords(&u);
        let vn = v.norm();
        out.push(v / c(vn));
    }
    Ok(out)
}

/// Gaussian wave packet centered at x0, unit norm in orthonormal coordinates.
pub fn probe_state(grid: &HalfLineGrid, x0: f64, sigma: f64) -> CVec {
    let u = grid.sample(|x| (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp());
    let v = grid.coords(&u);
    let n = v.norm();
    v / c(n)
}

/// Multiplication operator M_f on the grid.
pub fn multiplication(values: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Classification;

    fn g_exp(x: f64) -> f64 {
        2f64.sqrt() * (-x).exp()
    }

    #[test]
    fn bm_theta_and_exactness() {
        let grid = HalfLineGrid::new(64, 24.0).unwrap();
        let b = build_reflected_bm(1.0, &grid.sample(g_exp), &grid).unwrap();
        let th = b.theta.unwrap();
        // midpoint rule for ∫2e^{−2x}: 1 − h²/3 + …, θ = half of it
        assert!((th - 0.5).abs() < grid.h * grid.h / 4.0, "theta {th}");
        assert!(b.defect_norm < 1e-10, "defect {}", b.defect_norm);
    }

    #[test]
    fn bm_zero_g_is_reflecting() {
        let grid = HalfLineGrid::new(16, 8.0).unwrap();
        let b = build_reflected_bm(1.0, &vec![0.0; 16], &grid).unwrap();
        assert_eq!(b.theta, Some(0.0));
        assert!(linalg::fro_norm(&b.model.ls[1]) == 0.0);
        assert!(linalg::min_eig(&b.reference.c) > -1e-12);
    }

    #[test]
    fn transport_normalization() {
        let grid = HalfLineGrid::new(32, 24.0).unwrap();
        let g = grid.sample(g_exp);
        assert!(build_transport_jump(&g, &grid, false).is_err());
        let b = build_transport_jump(&g, &grid, true).unwrap();
        assert!(b.defect_norm < 1e-10);
        // L*L = ‖g‖² e₀e₀*/h: the point evaluation at 0 carries weight 1/h
        let tr: f64 = b.model.jump_mass().trace().re;
        assert!((tr * grid.h - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_ion_rejects_strong_w() {
        let (xs, _) = symmetric_grid(16, 4.0).unwrap();
        let w = vec![1.0; xs.len()];
        assert!(matches!(build_heavy_ion_1d(1.0, 1.0, &vec![0.0; 16], &w, 16, 4.0), Err(Error::Precondition(_))));
        let w = vec![0.5; xs.len()];
        let b = build_heavy_ion_1d(1.0, 1.0, &vec![0.0; 16], &w, 16, 4.0).unwrap();
        assert_eq!(check_condition_a(&b.model, DEFAULT_TOL).unwrap().classification, Classification::Exact);
    }

    #[test]
    fn birth_assembly() {
        let b = build_birth_process(&[1.0, 3.0], 2).unwrap();
        let d = b.model.defect();
        assert!(d[(0, 0)].norm() < 1e-15);
        assert!((d[(1, 1)].re + 3.0).abs() < 1e-15);
        assert_eq!(check_condition_a(&b.model, DEFAULT_TOL).unwrap().classification, Classification::Substochastic);
        assert!(build_birth_process(&[1.0], 1).is_err());
    }

    #[test]
    fn laplacian_reference_spectrum() {
        let grid = HalfLineGrid::new(16, 8.0).unwrap();
        let b = build_reflected_bm(1.0, &vec![0.0; 16], &grid).unwrap();
        let r = build_reference(ReferenceKind::LaplacianPlusOne, &b.model, 1.0).unwrap();
        let ev = linalg::eigvalsh(&r.c);
        let h = grid.h;
        assert!(ev[0] >= 1.0 - 1e-12 && *ev.last().unwrap() <= 1.0 + 4.0 / (h * h) + 1e-9);
    }

    #[test]
    fn family_decays_on_default_grid() {
        let grid = HalfLineGrid::new(64, 24.0).unwrap();
        assert_eq!(test_family(&grid).unwrap().len(), 20);
        let short = HalfLineGrid::new(64, 8.0).unwrap();
        assert!(test_family(&short).is_err());
    }
}

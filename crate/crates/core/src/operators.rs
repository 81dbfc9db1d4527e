//! GKSL operator families on a finite truncation.
//!
//! A model is a contraction generator `G` plus a finite list of jump
//! operators `L_ℓ`. The formal generator of the semigroup acts on bounded
//! operators as `L(X) = G*X + XG + Σ L_ℓ* X L_ℓ`.

use std::fmt::Write as _;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, eye, hermitian_part, op_norm, CMat, SchurForm};

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Boundary {
    Robin { theta: f64 },
    None,
    Upwind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub h: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub boundary: Boundary,
    pub notes: String,
}

impl GridMeta {
    pub fn new(h: f64, x_min: f64, x_max: f64, boundary: Boundary, notes: impl Into<String>) -> Result<Self> {
        if !(h > 0.0) || !(x_min < x_max) {
            return Err(Error::Parameter(format!("grid needs h > 0 and x_min < x_max (h={h}, [{x_min}, {x_max}])")));
        }
        Ok(GridMeta { h, x_min, x_max, boundary, notes: notes.into() })
    }
}

/// Schur forms of −G* and −G, the two triangular factors every P_λ solve needs.
#[derive(Debug)]
pub(crate) struct SchurCache {
    pub minus_g_adj: SchurForm,
    pub minus_g: SchurForm,
}

#[derive(Debug)]
pub struct GKSLModel {
    pub g: CMat,
    pub ls: Vec<CMat>,
    pub hamiltonian: Option<(CMat, CMat)>,
    pub grid: Option<GridMeta>,
    pub label: String,
    schur: OnceLock<SchurCache>,
    defect_max: OnceLock<f64>,
}

impl Clone for GKSLModel {
    fn clone(&self) -> Self {
        GKSLModel {
            g: self.g.clone(),
            ls: self.ls.clone(),
            hamiltonian: self.hamiltonian.clone(),
            grid: self.grid.clone(),
            label: self.label.clone(),
            schur: OnceLock::new(),
            defect_max: OnceLock::new(),
        }
    }
}

impl GKSLModel {
    pub fn new(g: CMat, ls: Vec<CMat>, label: impl Into<String>) -> Result<Self> {
        let n = g.nrows();
        if n == 0 || !g.is_square() {
            return Err(Error::Dimension(format!("G must be square with dim >= 1, got {}x{}", g.nrows(), g.ncols())));
        }
        for (i, l) in ls.iter().enumerate() {
            if l.nrows() != n || l.ncols() != n {
                return Err(Error::Dimension(format!("L[{i}] is {}x{}, G is {n}x{n}", l.nrows(), l.ncols())));
            }
        }
        Ok(GKSLModel { g, ls, hamiltonian: None, grid: None, label: label.into(), schur: OnceLock::new(), defect_max: OnceLock::new() })
    }

    /// Builds G = −iH − ½M and checks the split.
    pub fn from_hamiltonian(h: CMat, m: CMat, ls: Vec<CMat>, label: impl Into<String>) -> Result<Self> {
        if h.shape() != m.shape() {
            return Err(Error::Dimension("H and M differ in shape".into()));
        }
        if !linalg::is_hermitian(&h, 1e-12) {
            return Err(Error::Parameter("H is not hermitian".into()));
        }
        if linalg::min_eig(&m) < -1e-12 * op_norm(&m) {
            return Err(Error::Parameter("M is not positive".into()));
        }
        let g = &h * Complex64::new(0.0, -1.0) - &m * c(0.5);
        let mut model = GKSLModel::new(g, ls, label)?;
        model.hamiltonian = Some((h, m));
        model.validate()?;
        Ok(model)
    }

    pub fn with_grid(mut self, grid: GridMeta) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((h, m)) = &self.hamiltonian {
            let resid = op_norm(&(&self.g + h * Complex64::new(0.0, 1.0) + m * c(0.5)));
            if resid > 1e-10 * (op_norm(h) + op_norm(m) + 1.0) {
                return Err(Error::Parameter(format!("G differs from -iH - M/2 by {resid:.3e}")));
            }
        }
        Ok(())
    }

    /// J(X) = Σ L_ℓ* X L_ℓ.
    pub fn jump_map(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(self.dim(), self.dim());
        for l in &self.ls {
            out += linalg::adj_mul(l, &linalg::mul(x, l));
        }
        out
    }

    /// Σ L_ℓ* L_ℓ.
    pub fn jump_mass(&self) -> CMat {
        hermitian_part(&self.jump_map(&eye(self.dim())))
    }

    /// D = G + G* + Σ L*L.
    pub fn defect(&self) -> CMat {
        hermitian_part(&(&self.g + self.g.adjoint() + self.jump_mass()))
    }

    /// Largest eigenvalue of D, computed once.
    pub fn max_defect_eig(&self) -> f64 {
        *self.defect_max.get_or_init(|| linalg::max_eig(&self.defect()))
    }

    pub(crate) fn schur(&self) -> &SchurCache {
        self.schur.get_or_init(|| SchurCache {
            minus_g_adj: SchurForm::new(&-self.g.adjoint()),
            minus_g: SchurForm::new(&-&self.g),
        })
    }

    fn check_dim(&self, x: &CMat, what: &str) -> Result<()> {
        if x.nrows() != self.dim() || x.ncols() != self.dim() {
            return Err(Error::Dimension(format!("{what} is {}x{}, model dim is {}", x.nrows(), x.ncols(), self.dim())));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Exact,
    Substochastic,
    Violated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionAReport {
    pub defect_norm: f64,
    pub max_defect_eig: f64,
    pub classification: Classification,
}

pub fn check_condition_a(model: &GKSLModel, tol: f64) -> Result<ConditionAReport> {
    for l in &model.ls {
        model.check_dim(l, "jump operator")?;
    }
    let d = model.defect();
    let defect_norm = op_norm(&d);
    let max_defect_eig = linalg::max_eig(&d);
    let classification = if defect_norm <= tol {
        Classification::Exact
    } else if max_defect_eig <= tol {
        Classification::Substochastic
    } else {
        Classification::Violated
    };
    Ok(ConditionAReport { defect_norm, max_defect_eig, classification })
}

/// L(X) = G*X + XG + Σ L*XL. Hermitian input gives symmetrized hermitian output.
pub fn apply_generator(model: &GKSLModel, x: &CMat) -> Result<CMat> {
    model.check_dim(x, "X")?;
    let out = linalg::adj_mul(&model.g, x) + linalg::mul(x, &model.g) + model.jump_map(x);
    if linalg::is_hermitian(x, 1e-14) {
        Ok(hermitian_part(&out))
    } else {
        Ok(out)
    }
}

/// P(t) = e^{tG}.
pub fn semigroup_action(model: &GKSLModel, t: f64) -> Result<CMat> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("semigroup time must be >= 0, got {t}")));
    }
    Ok(linalg::expm(&(&model.g * c(t))))
}

/// A Y + Y B = Q.
pub fn solve_sylvester(a: &CMat, b: &CMat, q: &CMat) -> Result<CMat> {
    linalg::solve_sylvester(a, b, q)
}

// ---------------------------------------------------------------------------
// Plain-text interchange.
//
//   matrix <name>
//   dim <n>
//   <re> <im>      n² lines, row-major, 17 significant digits

pub fn format_matrix(name: &str, a: &CMat) -> String {
    let n = a.nrows();
    let mut s = String::with_capacity(48 * n * n + 32);
    let _ = writeln!(s, "matrix {name}");
    let _ = writeln!(s, "dim {n}");
    for i in 0..n {
        for j in 0..n {
            let z = a[(i, j)];
            let _ = writeln!(s, "{:.16e} {:.16e}", z.re, z.im);
        }
    }
    s
}

/// Parses every `matrix` block in `text`, in order.
pub fn parse_matrices(text: &str) -> Result<Vec<(String, CMat)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let mut out = Vec::new();
    while let Some((ln, header)) = lines.next() {
        let name = header
            .trim()
            .strip_prefix("matrix")
            .map(|s| s.trim().to_string())
            .ok_or_else(|| Error::Parse { line: ln + 1, msg: format!("expected 'matrix <name>', got '{header}'") })?;
        let (ln, dim_line) = lines.next().ok_or(Error::Parse { line: ln + 1, msg: "missing dim line".into() })?;
        let n: usize = dim_line
            .trim()
            .strip_prefix("dim")
            .and_then(|s| s.trim().parse().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Parse { line: ln + 1, msg: format!("expected 'dim <n>' with n >= 1, got '{dim_line}'") })?;
        let mut m = CMat::zeros(n, n);
        for k in 0..n * n {
            let (ln, l) = lines.next().ok_or(Error::Parse { line: ln + 1, msg: format!("matrix {name}: expected {} entries, got {k}", n * n) })?;
            let mut it = l.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(re)), Some(Ok(im)), None) => m[(k / n, k % n)] = Complex64::new(re, im),
                _ => return Err(Error::Parse { line: ln + 1, msg: format!("expected '<re> <im>', got '{l}'") }),
            }
        }
        out.push((name, m));
    }
    Ok(out)
}

/// A model file holds a `G` block followed by any number of `L*` blocks.
pub fn format_model(model: &GKSLModel) -> String {
    let mut s = format!("# {}\n", model.label);
    s.push_str(&format_matrix("G", &model.g));
    for (i, l) in model.ls.iter().enumerate() {
        s.push_str(&format_matrix(&format!("L{i}"), l));
    }
    s
}

pub fn parse_model(text: &str, label: &str) -> Result<GKSLModel> {
    let mats = parse_matrices(text)?;
    let mut g = None;
    let mut ls = Vec::new();
    for (name, m) in mats {
        if name == "G" {
            if g.is_some() {
                return Err(Error::Parse { line: 0, msg: "duplicate G block".into() });
            }
            g = Some(m);
        } else if name.starts_with('L') {
            ls.push(m);
        } else {
            return Err(Error::Parse { line: 0, msg: format!("unknown matrix name '{name}'") });
        }
    }
    let g = g.ok_or(Error::Parse { line: 0, msg: "model file has no G block".into() })?;
    GKSLModel::new(g, ls, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fro_norm;

    fn scalar(g: f64, l: f64) -> GKSLModel {
        GKSLModel::new(CMat::from_element(1, 1, c(g)), vec![CMat::from_element(1, 1, c(l))], "scalar").unwrap()
    }

    #[test]
    fn scalar_classifications() {
        let r = check_condition_a(&scalar(-0.5, 1.0), DEFAULT_TOL).unwrap();
        assert_eq!(r.classification, Classification::Exact);
        let r = check_condition_a(&scalar(-1.0, 1.0), DEFAULT_TOL).unwrap();
        assert_eq!(r.classification, Classification::Substochastic);
        assert!((r.max_defect_eig + 1.0).abs() < 1e-15);
        let r = check_condition_a(&scalar(0.0, 1.0), DEFAULT_TOL).unwrap();
        assert_eq!(r.classification, Classification::Violated);
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let err = GKSLModel::new(eye(2), vec![eye(3)], "bad").unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        let m = scalar(-0.5, 1.0);
        assert!(matches!(apply_generator(&m, &eye(2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn generator_on_scalar() {
        let m = scalar(-0.5, 1.0);
        let y = apply_generator(&m, &CMat::from_element(1, 1, c(5.0))).unwrap();
        assert!(y[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn semigroup_scalar_and_identity() {
        let m = scalar(-1.0, 0.0);
        assert!((semigroup_action(&m, 1.0).unwrap()[(0, 0)].re - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(semigroup_action(&m, 0.0).unwrap(), eye(1));
        assert!(semigroup_action(&m, -1.0).is_err());
    }

    #[test]
    fn hamiltonian_split_is_checked() {
        let h = CMat::from_element(1, 1, c(2.0));
        let mm = CMat::from_element(1, 1, c(1.0));
        let model = GKSLModel::from_hamiltonian(h, mm, vec![CMat::from_element(1, 1, c(1.0))], "hm").unwrap();
        assert_eq!(check_condition_a(&model, DEFAULT_TOL).unwrap().classification, Classification::Exact);
        let bad = CMat::from_element(1, 1, c(-1.0));
        assert!(GKSLModel::from_hamiltonian(eye(1), bad, vec![], "x").is_err());
    }

    #[test]
    fn interchange_round_trip_is_bit_exact() {
        let g = CMat::from_fn(3, 3, |i, j| Complex64::new(1.0 / (1.0 + i as f64 + 3.0 * j as f64), (i as f64 - j as f64) / 7.0));
        let l = CMat::from_fn(3, 3, |i, j| Complex64::new((i * j) as f64 * std::f64::consts::PI, -1e-300));
        let m = GKSLModel::new(g.clone(), vec![l.clone()], "rt").unwrap();
        let back = parse_model(&format_model(&m), "rt").unwrap();
        assert_eq!(back.g, g);
        assert_eq!(back.ls[0], l);
    }

    #[test]
    fn parse_reports_line() {
        let err = parse_matrices("matrix G\ndim 1\n1.0 x\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn defect_matches_generator_on_identity() {
        let g = CMat::from_fn(3, 3, |i, j| Complex64::new(-(i as f64 + 1.0) * f64::from(u8::from(i == j)), 0.1 * (i as f64 - j as f64)));
        let l = CMat::from_fn(3, 3, |i, j| Complex64::new(0.3 * (i + j) as f64, 0.2));
        let m = GKSLModel::new(g, vec![l], "r").unwrap();
        let a = apply_generator(&m, &eye(3)).unwrap();
        assert!(fro_norm(&(a - m.defect())) < 1e-12);
    }
}

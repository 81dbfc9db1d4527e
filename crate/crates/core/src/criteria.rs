//! Sufficient conditions for conservativity based on a reference operator C.
//!
//! The form inequality checked by [`estimate_b`] is
//!
//!   2Re⟨Cu, Gu⟩ + Σ⟨L_ℓu, CL_ℓu⟩ ≤ b⟨u, Cu⟩,
//!
//! i.e. K ⪯ bC with K = CG + G*C + Σ L_ℓ*CL_ℓ, on the subspace described by
//! the reference operator's boundary constraints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, eye, hermitian_part, op_norm, CMat, CVec};
use crate::models::ReferenceOperator;
use crate::operators::{check_condition_a, Classification, GKSLModel, DEFAULT_TOL};
use crate::resolvent::{neumann_resolvent, ResolventConfig};

/// Default sample of n for F_n ⪯ C.
pub const FN_SAMPLES: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

/// F_n = Σ (nL_ℓR(n;G))*(nL_ℓR(n;G)).
pub fn build_fn(model: &GKSLModel, n: usize) -> Result<CMat> {
    if n == 0 {
        return Err(Error::Parameter("F_n needs n >= 1".into()));
    }
    let d = model.dim();
    let nn = n as f64;
    let r = (eye(d) * c(nn) - &model.g)
        .lu()
        .try_inverse()
        .ok_or(Error::Solver { what: format!("resolvent R({n}; G)"), condition: f64::INFINITY })?;
    let mut f = CMat::zeros(d, d);
    for l in &model.ls {
        let m = linalg::mul(l, &r) * c(nn);
        f += linalg::adj_mul(&m, &m);
    }
    Ok(hermitian_part(&f))
}

#[derive(Clone, Debug)]
pub struct BEstimate {
    pub b: f64,
    pub witness: CVec,
    /// dimension of the constrained subspace after deflating ker C
    pub effective_dim: usize,
}

/// Smallest b with K ⪯ bC, from the generalized eigenproblem Kv = μCv on the
/// constraint subspace. Eigenvalues of C below 1e-12‖C‖ are deflated.
pub fn estimate_b(model: &GKSLModel, reference: &ReferenceOperator) -> Result<BEstimate> {
    let n = model.dim();
    let cm = &reference.c;
    if cm.nrows() != n {
        return Err(Error::Dimension("reference operator does not match model".into()));
    }
    let mut k = linalg::mul(cm, &model.g) + linalg::adj_mul(&model.g, cm);
    for l in &model.ls {
        k += linalg::adj_mul(l, &linalg::mul(cm, l));
    }
    let k = hermitian_part(&k);
    let basis = if reference.domain.is_empty() { eye(n) } else { linalg::constraint_null_basis(n, &reference.domain) };
    let kr = basis.adjoint() * &k * &basis;
    let cr = basis.adjoint() * cm * &basis;
    let (vals, vecs) = linalg::eigh(&cr);
    let top = vals.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-12 * top && vals[i] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::Parameter("reference operator vanishes on the constraint subspace".into()));
    }
    let mut w = CMat::zeros(basis.ncols(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        w.set_column(j, &(vecs.column(i) * c(1.0 / vals[i].sqrt())));
    }
    let m = w.adjoint() * kr * &w;
    let (mu, mv) = linalg::eigh(&m);
    let last = mu.len() - 1;
    let witness = &basis * (&w * mv.column(last));
    let wn = witness.norm();
    Ok(BEstimate { b: mu[last], witness: witness / c(wn), effective_dim: keep.len() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Margin {
    pub max_eig_diff: f64,
    pub pass: bool,
}

/// A ⪯ B + tol·I.
pub fn dominance_check(a: &CMat, b: &CMat, tol: f64) -> Result<Margin> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension("dominance operands differ in shape".into()));
    }
    let m = linalg::max_eig(&(a - b));
    Ok(Margin { max_eig_diff: m, pass: m <= tol })
}

#[derive(Clone, Debug)]
pub struct PhiOperator {
    pub phi: CMat,
}

/// Φ = Σ L*L, defined when the model satisfies the dissipation identity.
pub fn build_phi(model: &GKSLModel) -> Result<PhiOperator> {
    let rep = check_condition_a(model, DEFAULT_TOL)?;
    if rep.classification != Classification::Exact {
        return Err(Error::Refused(format!("Phi needs an exact model; defect norm is {:.3e}", rep.defect_norm)));
    }
    let phi = model.jump_mass();
    let gap = op_norm(&(&phi + &model.g + model.g.adjoint()));
    if gap > 1e-10 * op_norm(&phi).max(1.0) {
        return Err(Error::Refused(format!("Phi differs from -(G + G*) by {gap:.3e}")));
    }
    Ok(PhiOperator { phi })
}

/// C_ε = C(I + εC)^{−1}.
pub fn regularize(reference: &ReferenceOperator, eps: f64) -> Result<CMat> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be > 0, got {eps}")));
    }
    Ok(linalg::spectral_map(&reference.c, |x| {
        let x = x.max(0.0);
        x / (1.0 + eps * x)
    }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundEntry {
    pub eps: f64,
    pub vector: usize,
    /// (λ − b)⟨u, R_λ(C_ε)u⟩
    pub lhs: f64,
    /// ‖C^{1/2}u‖²
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub b: f64,
    pub entries: Vec<BoundEntry>,
    pub min_slack: f64,
}

/// (λ − b)⟨u, R_λ(C_ε)u⟩ ≤ ‖C^{1/2}u‖² for every u and ε given.
pub fn prop_4_2_check(
    model: &GKSLModel,
    reference: &ReferenceOperator,
    lambda: f64,
    b: f64,
    us: &[CVec],
    eps_list: &[f64],
    res: &ResolventConfig,
) -> Result<BoundReport> {
    if !(lambda > b) {
        return Err(Error::Precondition(format!("need lambda > b (lambda={lambda}, b={b})")));
    }
    let mut entries = Vec::new();
    for &eps in eps_list {
        let ce = regularize(reference, eps)?;
        let r = neumann_resolvent(model, &ResolventConfig { lambda, ..res.clone() }, &ce)?;
        if !r.converged {
            return Err(Error::Integration(format!("resolvent series did not converge (tail {:.3e})", r.tail_norm)));
        }
        for (i, u) in us.iter().enumerate() {
            let lhs = (lambda - b) * linalg::quad_form(&r.r, u);
            let rhs = (&reference.sqrt_c * u).norm_squared();
            entries.push(BoundEntry { eps, vector: i, lhs, rhs, slack: rhs - lhs });
        }
    }
    let min_slack = entries.iter().map(|e| e.slack).fold(f64::INFINITY, f64::min);
    Ok(BoundReport { lambda, b, entries, min_slack })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Condition A, finite b, F_n ⪯ C
    #[serde(rename = "thm_4_3")]
    Thm43,
    /// Condition A, finite b, Φ ⪯ C
    #[serde(rename = "thm_4_4")]
    Thm44,
    /// Condition A, form inequality, Φ ⪯ C
    #[serde(rename = "cor_4_5")]
    Cor45,
    /// Condition A, form inequality, F_n ⪯ C
    #[serde(rename = "remark_b_prime")]
    RemarkBPrime,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Thm43 => "thm_4_3",
            Strategy::Thm44 => "thm_4_4",
            Strategy::Cor45 => "cor_4_5",
            Strategy::RemarkBPrime => "remark_b_prime",
        }
    }

    fn uses_fn(self) -> bool {
        matches!(self, Strategy::Thm43 | Strategy::RemarkBPrime)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertVerdict {
    Certified,
    RefutedHypothesis,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub theorem: Strategy,
    pub b_estimate: Option<f64>,
    /// worst max-eig(A − C) over the dominance checks
    pub dominance_margin: Option<f64>,
    pub checks: Vec<Check>,
    pub verdict: CertVerdict,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub tol_a: f64,
    pub dominance_tol: f64,
    pub fn_samples: Vec<usize>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { tol_a: DEFAULT_TOL, dominance_tol: 1e-8, fn_samples: FN_SAMPLES.to_vec() }
    }
}

pub fn certify(model: &GKSLModel, reference: &ReferenceOperator, strategy: Strategy, opts: &CertifyOptions) -> Result<Certificate> {
    let mut checks = Vec::new();
    let mut inconclusive = false;
    let mut notes = vec![
        "Condition C asks L_l(D(G^2)) to lie in D(C^{1/2}); every subspace qualifies on a truncation.".to_string(),
        "Statements concern this truncation, not the continuum model.".to_string(),
    ];

    let rep = check_condition_a(model, opts.tol_a)?;
    checks.push(Check {
        name: "condition_a".into(),
        pass: rep.classification == Classification::Exact,
        value: Some(rep.defect_norm),
        note: format!("{:?}, tol {:.1e}", rep.classification, opts.tol_a),
    });

    let b_estimate = match estimate_b(model, reference) {
        Ok(est) => {
            checks.push(Check {
                name: if matches!(strategy, Strategy::Thm43 | Strategy::Thm44) { "condition_c_b_finite" } else { "form_inequality_b" }.into(),
                pass: est.b.is_finite(),
                value: Some(est.b),
                note: format!("generalized eigenproblem on {} constrained directions", est.effective_dim),
            });
            Some(est.b)
        }
        Err(e) => {
            inconclusive = true;
            checks.push(Check { name: "condition_c_b_finite".into(), pass: false, value: None, note: e.to_string() });
            None
        }
    };

    let mut worst: Option<f64> = None;
    if strategy.uses_fn() {
        for &n in &opts.fn_samples {
            let f = build_fn(model, n)?;
            let m = dominance_check(&f, &reference.c, opts.dominance_tol)?;
            worst = Some(worst.map_or(m.max_eig_diff, |w: f64| w.max(m.max_eig_diff)));
            checks.push(Check { name: format!("f_{n}_dominated"), pass: m.pass, value: Some(m.max_eig_diff), note: String::new() });
        }
        notes.push(format!("F_n dominance sampled at n in {:?}", opts.fn_samples));
    } else {
        match build_phi(model) {
            Ok(phi) => {
                let m = dominance_check(&phi.phi, &reference.c, opts.dominance_tol)?;
                worst = Some(m.max_eig_diff);
                checks.push(Check { name: "phi_dominated".into(), pass: m.pass, value: Some(m.max_eig_diff), note: String::new() });
            }
            Err(e) => checks.push(Check { name: "phi_dominated".into(), pass: false, value: None, note: e.to_string() }),
        }
    }

    let verdict = if checks.iter().all(|c| c.pass) {
        CertVerdict::Certified
    } else if inconclusive {
        CertVerdict::Inconclusive
    } else {
        CertVerdict::RefutedHypothesis
    };
    Ok(Certificate { theorem: strategy, b_estimate, dominance_margin: worst, checks, verdict, notes })
}

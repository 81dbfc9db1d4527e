//! Resolvent of the minimal semigroup through the completely positive maps
//!
//!   P_λ(X) = ∫₀^∞ e^{−λs} P(s)* X P(s) ds,   Q_λ(X) = P_λ(Σ L* X L),
//!
//! and the defect sequence Q_λⁿ(I).
//!
//! P_λ(X) is the unique solution of (λ − G*)Y − YG = X; differentiating
//! e^{−λs}P(s)*XP(s) and integrating over [0, ∞) gives the equation. The
//! tests check it against direct quadrature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{self, c, eye, fro_norm, hermitian_part, op_norm, CMat, CVec};
use crate::operators::{check_condition_a, Classification, GKSLModel, DEFAULT_TOL};

/// How the finite-dimensional defect I − λR_λ(I) is reduced to one number.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectProbe {
    /// operator norm
    #[default]
    Norm,
    /// ⟨v, Y v⟩ / ⟨v, v⟩ for a fixed real vector
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolventConfig {
    pub lambda: f64,
    pub max_terms: usize,
    pub tail_tol: f64,
    /// defect level above which a converged sequence is reported as defective
    pub defect_tol: f64,
    pub stagnation_factor: f64,
    pub stagnation_floor: f64,
    pub probe: DefectProbe,
    /// keep every Q_λⁿ(I) in the result (memory grows like n·dim²)
    pub keep_terms: bool,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        ResolventConfig {
            lambda: 1.0,
            max_terms: 2000,
            tail_tol: 1e-12,
            defect_tol: 1e-6,
            stagnation_factor: 1e-2,
            stagnation_floor: 10.0,
            probe: DefectProbe::Norm,
            keep_terms: false,
        }
    }
}

impl ResolventConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        ResolventConfig { lambda, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Parameter(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.tail_tol > 0.0) || self.max_terms == 0 {
            return Err(Error::Parameter("tail_tol must be > 0 and max_terms >= 1".into()));
        }
        Ok(())
    }
}

fn require_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("lambda must be > 0, got {lambda}")))
    }
}

fn require_not_violated(model: &GKSLModel) -> Result<()> {
    let m = model.max_defect_eig();
    if m > DEFAULT_TOL {
        return Err(Error::Precondition(format!("model violates the dissipation inequality (max eig of D = {m:.3e})")));
    }
    Ok(())
}

fn p_raw(model: &GKSLModel, lambda: f64, x: &CMat) -> Result<CMat> {
    let s = model.schur();
    let y = linalg::sylvester_schur(&s.minus_g_adj, c(lambda), &s.minus_g, x).map_err(|e| match e {
        Error::Solver { condition, .. } => Error::Solver { what: format!("P_lambda at lambda={lambda}"), condition },
        e => e,
    })?;
    Ok(if linalg::is_hermitian(x, 1e-14) { hermitian_part(&y) } else { y })
}

fn q_raw(model: &GKSLModel, lambda: f64, x: &CMat) -> Result<CMat> {
    p_raw(model, lambda, &model.jump_map(x))
}

pub fn p_lambda(model: &GKSLModel, lambda: f64, x: &CMat) -> Result<CMat> {
    require_lambda(lambda)?;
    require_not_violated(model)?;
    if x.shape() != model.g.shape() {
        return Err(Error::Dimension("X does not match model dim".into()));
    }
    p_raw(model, lambda, x)
}

pub fn q_lambda(model: &GKSLModel, lambda: f64, x: &CMat) -> Result<CMat> {
    p_lambda(model, lambda, &model.jump_map(x))
}

#[derive(Clone, Debug)]
pub struct NeumannResult {
    pub r: CMat,
    pub terms_used: usize,
    pub tail_norm: f64,
    pub converged: bool,
}

/// R = Σ_k Q_λᵏ(P_λ(X)), truncated once a term drops below tail_tol
/// (Frobenius norm, an upper bound for the operator norm).
pub fn neumann_resolvent(model: &GKSLModel, cfg: &ResolventConfig, x: &CMat) -> Result<NeumannResult> {
    cfg.validate()?;
    require_not_violated(model)?;
    let lambda = cfg.lambda;
    let mut term = p_raw(model, lambda, x)?;
    let mut r = term.clone();
    let mut tail_norm = fro_norm(&term);
    let mut k = 0;
    while tail_norm > cfg.tail_tol && k < cfg.max_terms {
        term = q_raw(model, lambda, &term)?;
        r += &term;
        tail_norm = fro_norm(&term);
        k += 1;
    }
    Ok(NeumannResult { r, terms_used: k, tail_norm, converged: tail_norm <= cfg.tail_tol })
}

/// ‖Σ_{k≤n} Q_λᵏ(P_λ(I)) + λ⁻¹Q_λ^{n+1}(I) − λ⁻¹I‖, defined for exact models only.
pub fn identity_residual(model: &GKSLModel, lambda: f64, n: usize) -> Result<f64> {
    require_lambda(lambda)?;
    let rep = check_condition_a(model, DEFAULT_TOL)?;
    if rep.classification != Classification::Exact {
        return Err(Error::Refused(format!(
            "identity needs an exact model; defect norm is {:.3e} ({:?}). Use defect_iteration for the signed residual",
            rep.defect_norm, rep.classification
        )));
    }
    let id = eye(model.dim());
    let mut w = p_raw(model, lambda, &id)?;
    let mut sum = w.clone();
    let mut qi = q_raw(model, lambda, &id)?;
    for _ in 0..n {
        w = q_raw(model, lambda, &w)?;
        sum += &w;
        qi = q_raw(model, lambda, &qi)?;
    }
    Ok(op_norm(&(sum + qi * c(1.0 / lambda) - id * c(1.0 / lambda))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConservativeAtTol,
    DefectDetected,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefectRow {
    pub n: usize,
    /// ‖Q_λⁿ(I)‖
    pub norm: f64,
    /// min eig(Q_λⁿ(I) − Q_λ^{n+1}(I))
    pub min_eig_monotonicity: f64,
    /// ‖Σ_{k<n} Q_λᵏP_λ(I) + λ⁻¹Q_λⁿ(I) − λ⁻¹I‖
    pub identity_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefectSequence {
    pub lambda: f64,
    pub rows: Vec<DefectRow>,
    #[serde(skip)]
    pub terms: Vec<CMat>,
    #[serde(skip)]
    pub last_term: CMat,
    pub verdict: Verdict,
    /// Y = I − λR_λ(I), assembled as R_λ(−D) + Q_λⁿ(I) so no cancellation occurs
    #[serde(skip)]
    pub defect_estimate: CMat,
    /// scalar reduction of Y under the configured probe
    pub defect: f64,
    /// ‖Q_λⁿ(I)‖ at the last iterate, the truncated analog of lim Q_λⁿ(I)
    pub defect_limit_norm: f64,
    /// ‖R_λ(I) + λ⁻¹Q_λⁿ(I) − λ⁻¹I‖
    pub consistency_residual: f64,
    pub stagnated: bool,
}

impl DefectSequence {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,norm,min_eig_monotonicity,identity_residual\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.16e},{:.16e},{:.16e}", r.n, r.norm, r.min_eig_monotonicity, r.identity_residual);
        }
        s
    }
}

fn probe_value(probe: &DefectProbe, y: &CMat) -> Result<f64> {
    match probe {
        DefectProbe::Norm => Ok(op_norm(y)),
        DefectProbe::Vector(v) => {
            if v.len() != y.nrows() {
                return Err(Error::Dimension(format!("probe has length {}, model dim is {}", v.len(), y.nrows())));
            }
            let u = CVec::from_iterator(v.len(), v.iter().map(|&x| c(x)));
            let nn = u.norm_squared();
            if nn == 0.0 {
                return Err(Error::Parameter("probe vector is zero".into()));
            }
            Ok(linalg::quad_form(y, &u) / nn)
        }
    }
}

/// Iterates Q_λⁿ(I) and classifies the limit.
pub fn defect_iteration(model: &GKSLModel, cfg: &ResolventConfig) -> Result<DefectSequence> {
    cfg.validate()?;
    require_not_violated(model)?;
    let lambda = cfg.lambda;
    let n = model.dim();
    let id = eye(n);
    let inv = c(1.0 / lambda);

    let mut q = id.clone();
    let mut w = p_raw(model, lambda, &id)?;
    let mut partial = CMat::zeros(n, n);
    let mut rows = Vec::new();
    let mut terms = Vec::new();
    let mut stagnated = false;
    let mut step = 0;
    loop {
        let norm = op_norm(&q);
        let ident = op_norm(&(&partial + &q * inv - &id * inv));
        let next = q_raw(model, lambda, &q)?;
        let diff = &q - &next;
        let spec = linalg::eigvalsh(&diff);
        let mono = spec.first().copied().unwrap_or(0.0);
        let diff_norm = spec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        rows.push(DefectRow { n: step, norm, min_eig_monotonicity: mono, identity_residual: ident });
        if cfg.keep_terms {
            terms.push(q.clone());
        }
        if norm < cfg.tail_tol || step >= cfg.max_terms {
            break;
        }
        if diff_norm < cfg.tail_tol * cfg.stagnation_factor && norm >= cfg.stagnation_floor * cfg.tail_tol {
            stagnated = true;
            break;
        }
        partial += &w;
        w = q_raw(model, lambda, &w)?;
        q = next;
        step += 1;
    }
    let converged = rows.last().map(|r| r.norm < cfg.tail_tol).unwrap_or(false);

    let minus_d = -model.defect();
    let r_loss = neumann_resolvent(model, &ResolventConfig { lambda, ..cfg.clone() }, &minus_d)?;
    let y = hermitian_part(&(&r_loss.r + &q));
    let defect = probe_value(&cfg.probe, &y)?;
    // finish R_λ(I) from the partial sums already accumulated
    let mut r_id = partial + &w;
    let mut k = step;
    while fro_norm(&w) > cfg.tail_tol && k < cfg.max_terms {
        w = q_raw(model, lambda, &w)?;
        r_id += &w;
        k += 1;
    }
    let consistency_residual = op_norm(&(&r_id + &q * inv - &id * inv));

    let verdict = if stagnated {
        Verdict::DefectDetected
    } else if converged && r_loss.converged {
        if defect <= cfg.defect_tol {
            Verdict::ConservativeAtTol
        } else {
            Verdict::DefectDetected
        }
    } else {
        Verdict::Inconclusive
    };
    Ok(DefectSequence {
        lambda,
        rows,
        terms,
        defect_limit_norm: op_norm(&q),
        last_term: q,
        verdict,
        defect_estimate: y,
        defect,
        consistency_residual,
        stagnated,
    })
}

/// Runs `defect_iteration` for each λ in parallel, results in input order.
pub fn defect_sweep(model: &GKSLModel, base: &ResolventConfig, lambdas: &[f64]) -> Result<Vec<DefectSequence>> {
    lambdas
        .par_iter()
        .map(|&l| defect_iteration(model, &ResolventConfig { lambda: l, ..base.clone() }))
        .collect()
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
    fn scalar_maps() {
        let y = p_lambda(&scalar(-1.0, 0.0), 1.0, &one(1.0)).unwrap();
        assert!((y[(0, 0)].re - 1.0 / 3.0).abs() < 1e-15);
        let y = q_lambda(&scalar(-0.5, 1.0), 1.0, &one(1.0)).unwrap();
        assert!((y[(0, 0)].re - 0.5).abs() < 1e-15);
        assert_eq!(p_lambda(&scalar(-1.0, 0.0), 1.0, &one(0.0)).unwrap()[(0, 0)], c(0.0));
    }

    #[test]
    fn preconditions() {
        assert!(p_lambda(&scalar(-1.0, 0.0), 0.0, &one(1.0)).is_err());
        assert!(p_lambda(&scalar(0.0, 1.0), 1.0, &one(1.0)).is_err());
        assert!(matches!(identity_residual(&scalar(-1.0, 1.0), 1.0, 3), Err(Error::Refused(_))));
    }

    #[test]
    fn scalar_geometric_resolvent() {
        let r = neumann_resolvent(&scalar(-0.5, 1.0), &ResolventConfig::default(), &one(1.0)).unwrap();
        assert!(r.converged);
        assert!((r.r[(0, 0)].re - 1.0).abs() < 1e-11);
        let r = neumann_resolvent(&scalar(-0.5, 1.0), &ResolventConfig::default(), &one(0.0)).unwrap();
        assert_eq!(r.r[(0, 0)], c(0.0));
    }

    #[test]
    fn scalar_identity() {
        let m = scalar(-0.5, 1.0);
        assert!(identity_residual(&m, 1.0, 0).unwrap() <= 1e-12);
        assert!(identity_residual(&m, 1.0, 5).unwrap() <= 1e-12);
    }

    #[test]
    fn scalar_conservative_verdict() {
        let s = defect_iteration(&scalar(-0.5, 1.0), &ResolventConfig::default()).unwrap();
        assert_eq!(s.verdict, Verdict::ConservativeAtTol);
        for r in &s.rows {
            assert!((r.norm - 0.5f64.powi(r.n as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_loss_is_detected() {
        let m = GKSLModel::new(one(-0.5), vec![], "loss").unwrap();
        let s = defect_iteration(&m, &ResolventConfig::default()).unwrap();
        assert_eq!(s.verdict, Verdict::DefectDetected);
        assert!(s.defect_limit_norm < 1e-15);
        assert!((s.consistency_residual - 0.5).abs() < 1e-12);
        assert!((s.defect - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stagnation_flags_a_frozen_sequence() {
        // Q_λ(1) = 1/(1+λ) is numerically 1 for tiny λ.
        let m = scalar(-0.5, 1.0);
        let cfg = ResolventConfig { lambda: 1e-14, max_terms: 50, tail_tol: 1e-6, ..Default::default() };
        let s = defect_iteration(&m, &cfg).unwrap();
        assert!(s.stagnated);
        assert_eq!(s.verdict, Verdict::DefectDetected);
    }

    #[test]
    fn csv_header_and_rows() {
        let s = defect_iteration(&scalar(-0.5, 1.0), &ResolventConfig { tail_tol: 1e-3, ..Default::default() }).unwrap();
        let csv = s.to_csv();
        assert!(csv.starts_with("n,norm,min_eig_monotonicity,identity_residual\n"));
        assert_eq!(csv.lines().count(), s.rows.len() + 1);
    }
}

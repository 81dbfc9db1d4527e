//! Scenario orchestration: model construction and the analysis stages.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use minqds::criteria::{certify, prop_4_2_check, BoundReport, CertVerdict, Certificate, CertifyOptions};
use minqds::linalg::{self, c, eye, op_norm, CMat};
use minqds::models::{
    build_birth_process, build_heavy_ion_1d, build_reflected_bm, build_transport_jump, multiplication, probe_state, symmetric_grid,
    test_family, HalfLineGrid, ModelBundle, ReferenceKind, ReferenceOperator,
};
use minqds::operators::{check_condition_a, parse_model, Classification};
use minqds::oracle::{bm_expectation, boundary_projection, explosion_test, simulate_transport_jump, ClassicalSpec, ExplosionVerdict, Observable, Start, Explosion};
use minqds::resolvent::{defect_iteration, neumann_resolvent, DefectProbe, DefectRow, DefectSequence, ResolventConfig, Verdict};
use minqds::timedomain::{evolve, laplace_crosscheck, picard_iterates, trajectory_csv, EvolutionConfig, SUPEROP_MAX_DIM};
use minqds::{ConditionAReport, Error, GKSLModel};

use crate::config::{LambdaEntry, ModelKind, ObservableKind, Potential, ProbeKind, Profile, ScenarioConfig};

/// Analysis stages; each subcommand selects a subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    CheckA,
    Defect,
    Resolve,
    Certify,
    Evolve,
    Oracle,
    Sweep,
}

impl Stage {
    pub const ALL: [Stage; 7] = [Stage::CheckA, Stage::Defect, Stage::Resolve, Stage::Certify, Stage::Evolve, Stage::Oracle, Stage::Sweep];
}

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Compute(Error),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Compute(e) => write!(f, "computation failed: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Compute(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSummary {
    pub label: String,
    pub kind: ModelKind,
    pub dim: usize,
    pub provenance: String,
    pub h: Option<f64>,
    pub theta: Option<f64>,
    pub reference: Option<ReferenceKind>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefectSummary {
    pub lambda: f64,
    pub verdict: Verdict,
    pub defect: f64,
    pub defect_limit_norm: f64,
    pub consistency_residual: f64,
    pub terms: usize,
    pub stagnated: bool,
    pub min_monotonicity: f64,
    #[serde(skip)]
    pub rows: Vec<DefectRow>,
}

impl DefectSummary {
    fn from_sequence(s: DefectSequence) -> Self {
        DefectSummary {
            lambda: s.lambda,
            verdict: s.verdict,
            defect: s.defect,
            defect_limit_norm: s.defect_limit_norm,
            consistency_residual: s.consistency_residual,
            terms: s.rows.len(),
            stagnated: s.stagnated,
            min_monotonicity: s.rows.iter().map(|r| r.min_eig_monotonicity).fold(f64::INFINITY, f64::min),
            rows: s.rows,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolveSummary {
    pub lambda: f64,
    pub terms_used: usize,
    pub tail_norm: f64,
    pub converged: bool,
    /// ‖λR_λ(I)‖, 1 for a conservative truncation
    pub lambda_r_identity_norm: f64,
    pub crosscheck_discrepancy: Option<f64>,
    pub crosscheck_tail_bound: Option<f64>,
    #[serde(skip)]
    pub matrix: CMat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionSummary {
    pub t_final: f64,
    pub times: Vec<f64>,
    /// ‖T_t(I)‖ at each sampled t
    pub norms: Vec<f64>,
    pub max_norm_excess: f64,
    /// min over k of min-eig(C_{k+1} − C_k) for the Picard iterates from I
    pub picard_min_increment: Option<f64>,
    pub picard_max_norm: Option<f64>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub trajectory_csv: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleRow {
    pub observable: String,
    pub quantum: f64,
    pub classical: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub classical_kind: String,
    pub t: f64,
    pub h: Option<f64>,
    pub n_paths: Option<usize>,
    pub seed: u64,
    pub rows: Vec<OracleRow>,
    /// largest |Δf₀| needed to put an observable into the discrete boundary condition
    pub projection_shift: Option<f64>,
    pub explosion: Option<ExplosionVerdict>,
    /// birth chains: probed defect at N and 2N for each λ
    pub refinement: Vec<BirthRefinement>,
    pub agree: bool,
}

/// A truncation defect that survives doubling N is the finite shadow of
/// explosion; one that shrinks is a truncation artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BirthRefinement {
    pub lambda: f64,
    pub n_states: usize,
    pub defect: f64,
    pub n_states_doubled: usize,
    pub defect_doubled: f64,
    pub persistent: bool,
    pub vanishing: bool,
}

/// Relative change under N → 2N below which a defect counts as persistent.
pub const PERSISTENT_REL_CHANGE: f64 = 0.1;
/// Ratio defect(2N)/defect(N) below which a defect counts as vanishing.
pub const VANISHING_RATIO: f64 = 0.75;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_points: usize,
    pub h: f64,
    pub dim: usize,
    pub defect_norm: f64,
    pub theta: Option<f64>,
    pub b_estimate: Option<f64>,
    pub certificate: Option<CertVerdict>,
    pub dominance_margin: Option<f64>,
    pub defect_verdicts: Vec<Verdict>,
    pub defects: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub config: ScenarioConfig,
    pub model: Option<ModelSummary>,
    /// builder refusal citing a violated hypothesis
    pub rejected: Option<String>,
    pub condition_a: Option<ConditionAReport>,
    pub defects: Vec<DefectSummary>,
    pub resolvents: Vec<ResolveSummary>,
    pub certificate: Option<Certificate>,
    pub form_bound: Option<BoundReport>,
    pub evolution: Option<EvolutionSummary>,
    pub oracle: Option<OracleReport>,
    pub sweep: Vec<SweepRow>,
    pub refutations: Vec<String>,
    pub timing_ms: BTreeMap<String, f64>,
    pub versions: BTreeMap<String, String>,
}

impl ScenarioReport {
    /// 0 when every stage completed without refuting a hypothesis, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.refutations.is_empty() {
            0
        } else {
            2
        }
    }
}

fn profile(p: Profile) -> impl Fn(f64) -> f64 {
    move |x| match p {
        Profile::Sqrt2Exp => 2f64.sqrt() * (-x).exp(),
        Profile::Zero => 0.0,
    }
}

fn custom_bundle(model: GKSLModel, provenance: &str) -> Result<ModelBundle, Error> {
    let rep = check_condition_a(&model, minqds::operators::DEFAULT_TOL)?;
    let reference = ReferenceOperator::new(eye(model.dim()), ReferenceKind::Custom)?;
    Ok(ModelBundle {
        phi: minqds::criteria::build_phi(&model).ok(),
        model,
        reference,
        classical: None,
        half_line: None,
        theta: None,
        defect_norm: rep.defect_norm,
        provenance: provenance.to_string(),
    })
}

/// Builds the bundle described by `cfg.model`; `n_override` replaces the
/// grid size (sweeps). Relative file paths resolve against `base`.
pub fn build_bundle(cfg: &ScenarioConfig, n_override: Option<usize>, base: &Path) -> Result<ModelBundle, Error> {
    let m = &cfg.model;
    let x_max = m.x_max.unwrap_or(24.0);
    match m.kind {
        ModelKind::Scalar => {
            let model = GKSLModel::new(CMat::from_element(1, 1, c(-0.5)), vec![CMat::from_element(1, 1, c(1.0))], "scalar")?;
            custom_bundle(model, "scalar model G = -1/2, L = 1")
        }
        ModelKind::PureLoss => {
            let model = GKSLModel::new(CMat::from_element(1, 1, c(-0.5)), vec![], "pure_loss")?;
            custom_bundle(model, "scalar pure loss G = -1/2, no channels")
        }
        ModelKind::RandomExact | ModelKind::RandomSubstochastic => {
            let dim = m.dim.unwrap_or(4);
            let ch = m.channels.unwrap_or(2);
            let seed = m.model_seed.unwrap_or(cfg.seed);
            let model = if m.kind == ModelKind::RandomExact {
                minqds::gallery::random_exact(dim, ch, seed)
            } else {
                minqds::gallery::random_substochastic(dim, ch, seed)
            };
            custom_bundle(model, &format!("seeded random model, dim {dim}, {ch} channels, seed {seed}"))
        }
        ModelKind::ReflectedBm => {
            let grid = HalfLineGrid::new(n_override.or(m.n_points).unwrap_or(64), x_max)?;
            let g = grid.sample(profile(m.g.unwrap_or(Profile::Sqrt2Exp)));
            build_reflected_bm(m.alpha.unwrap_or(1.0), &g, &grid)
        }
        ModelKind::TransportJump => {
            let grid = HalfLineGrid::new(n_override.or(m.n_points).unwrap_or(128), x_max)?;
            let g = grid.sample(profile(m.g.unwrap_or(Profile::Sqrt2Exp)));
            build_transport_jump(&g, &grid, m.normalize.unwrap_or(true))
        }
        ModelKind::HeavyIon => {
            let n = n_override.or(m.n_points).unwrap_or(64);
            let x_max = m.x_max.unwrap_or(6.0);
            let (xs, _) = symmetric_grid(n, x_max)?;
            let v: Vec<f64> = match m.potential.unwrap_or(Potential::Zero) {
                Potential::Zero => vec![0.0; n],
                Potential::Tanh => xs.iter().map(|x| x.tanh()).collect(),
            };
            let w = vec![m.w.unwrap_or(0.5); n];
            build_heavy_ion_1d(m.mass.unwrap_or(1.0), m.alpha.unwrap_or(1.0), &v, &w, n, x_max)
        }
        ModelKind::Birth => {
            let n = n_override.or(m.n_states).unwrap_or(100);
            let rates = m.rates.expect("validated").rates(n);
            build_birth_process(&rates, n)
        }
        ModelKind::File => {
            let path = base.join(m.path.as_deref().expect("validated"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Parameter(format!("cannot read model file {}: {e}", path.display())))?;
            let model = parse_model(&text, &path.display().to_string())?;
            custom_bundle(model, &format!("interchange file {}", path.display()))
        }
    }
}

fn resolvent_config(cfg: &ScenarioConfig, lambda: f64, dim: usize) -> ResolventConfig {
    let r = &cfg.resolvent;
    let probe = match r.probe {
        ProbeKind::Norm => DefectProbe::Norm,
        ProbeKind::E0 => {
            let mut v = vec![0.0; dim];
            v[0] = 1.0;
            DefectProbe::Vector(v)
        }
    };
    ResolventConfig { max_terms: r.max_terms, tail_tol: r.tail_tol, defect_tol: r.defect_tol, probe, ..ResolventConfig::with_lambda(lambda) }
}

fn certify_options(cfg: &ScenarioConfig) -> CertifyOptions {
    let mut o = CertifyOptions { tol_a: cfg.tolerances.condition_a, dominance_tol: cfg.tolerances.dominance, ..Default::default() };
    if let Some(s) = cfg.certificate.as_ref().and_then(|c| c.fn_samples.clone()) {
        o.fn_samples = s;
    }
    o
}

/// λ list with the "2b+1" rule resolved (b clamped at 0).
fn lambdas(cfg: &ScenarioConfig, b: Option<f64>) -> Result<Vec<f64>, RunError> {
    cfg.resolvent
        .lambdas
        .iter()
        .map(|l| match l {
            LambdaEntry::Value(x) => Ok(*x),
            LambdaEntry::Rule(_) => b
                .map(|b| 2.0 * b.max(0.0) + 1.0)
                .ok_or_else(|| RunError::Config("lambda rule 2b+1 needs a b estimate, which the certificate did not produce".into())),
        })
        .collect()
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn run_scenario(cfg: &ScenarioConfig, stages: &[Stage], base: &Path) -> Result<ScenarioReport, RunError> {
    cfg.validate().map_err(|(t, k, m)| RunError::Config(format!("{}{k}: {m}", t.map(|t| format!("{t}.")).unwrap_or_default())))?;
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    let has = |s: Stage| stages.contains(&s);
    let mut report = ScenarioReport {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        stages: stages.clone(),
        config: cfg.clone(),
        model: None,
        rejected: None,
        condition_a: None,
        defects: Vec::new(),
        resolvents: Vec::new(),
        certificate: None,
        form_bound: None,
        evolution: None,
        oracle: None,
        sweep: Vec::new(),
        refutations: Vec::new(),
        timing_ms: BTreeMap::new(),
        versions: BTreeMap::from([
            ("minqds".to_string(), minqds::VERSION.to_string()),
            ("minqds-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]),
    };

    let t = Instant::now();
    let bundle = match build_bundle(cfg, None, base) {
        Ok(b) => b,
        // builders refuse parameters that violate a hypothesis of the model
        Err(Error::Precondition(msg)) => {
            report.refutations.push(format!("model rejected: {msg}"));
            report.rejected = Some(msg);
            return Ok(report);
        }
        Err(e) => return Err(e.into()),
    };
    report.timing_ms.insert("build".into(), ms(t));
    let model = &bundle.model;
    report.model = Some(ModelSummary {
        label: model.label.clone(),
        kind: cfg.model.kind,
        dim: model.dim(),
        provenance: bundle.provenance.clone(),
        h: model.grid.as_ref().map(|g| g.h),
        theta: bundle.theta,
        reference: Some(bundle.reference.kind),
    });

    let rep = check_condition_a(model, cfg.tolerances.condition_a)?;
    if rep.classification == Classification::Violated {
        report.refutations.push(format!("dissipation inequality violated: max eig of D = {:.3e}", rep.max_defect_eig));
    }
    report.condition_a = Some(rep.clone());
    if rep.classification == Classification::Violated {
        return Ok(report);
    }

    let mut b_estimate = None;
    if has(Stage::Certify) {
        let t = Instant::now();
        let Some(cs) = &cfg.certificate else {
            return Err(RunError::Config("certify needs a [certificate] section".into()));
        };
        let cert = certify(model, &bundle.reference, cs.strategy, &certify_options(cfg))?;
        b_estimate = cert.b_estimate;
        if cert.verdict == CertVerdict::RefutedHypothesis {
            let failed: Vec<&str> = cert.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            report.refutations.push(format!("{} hypotheses refuted: {}", cs.strategy.name(), failed.join(", ")));
        }
        if let (Some(grid), Some(b)) = (&bundle.half_line, b_estimate) {
            if cert.verdict == CertVerdict::Certified {
                let us = test_family(grid)?;
                let lambda = 2.0 * b.max(0.0) + 1.0;
                let res = resolvent_config(cfg, lambda, model.dim());
                report.form_bound = Some(prop_4_2_check(model, &bundle.reference, lambda, b.max(0.0), &us, &[1.0, 0.1, 0.01], &res)?);
            }
        }
        report.certificate = Some(cert);
        report.timing_ms.insert("certify".into(), ms(t));
    } else if cfg.resolvent.lambdas.iter().any(|l| matches!(l, LambdaEntry::Rule(_))) && (has(Stage::Defect) || has(Stage::Resolve)) {
        // the λ rule still needs b
        if let Some(cs) = &cfg.certificate {
            b_estimate = certify(model, &bundle.reference, cs.strategy, &certify_options(cfg))?.b_estimate;
        }
    }

    let birth_oracle = has(Stage::Oracle) && cfg.model.kind == ModelKind::Birth;
    if has(Stage::Defect) || birth_oracle || (has(Stage::Certify) && cfg.resolvent.lambdas.iter().any(|l| matches!(l, LambdaEntry::Rule(_)))) {
        let t = Instant::now();
        let ls = lambdas(cfg, b_estimate)?;
        let seqs: Vec<Result<DefectSequence, Error>> =
            ls.par_iter().map(|&l| defect_iteration(model, &resolvent_config(cfg, l, model.dim()))).collect();
        for s in seqs {
            report.defects.push(DefectSummary::from_sequence(s?));
        }
        report.timing_ms.insert("defect".into(), ms(t));
    }

    if has(Stage::Resolve) {
        let t = Instant::now();
        let id = eye(model.dim());
        for l in lambdas(cfg, b_estimate)? {
            let res = resolvent_config(cfg, l, model.dim());
            let nr = neumann_resolvent(model, &res, &id)?;
            let cross = if cfg.resolvent.crosscheck { Some(laplace_crosscheck(model, l, &id, &res, 1e-10)?) } else { None };
            report.resolvents.push(ResolveSummary {
                lambda: l,
                terms_used: nr.terms_used,
                tail_norm: nr.tail_norm,
                converged: nr.converged,
                lambda_r_identity_norm: l * op_norm(&nr.r),
                crosscheck_discrepancy: cross.as_ref().map(|c| c.discrepancy),
                crosscheck_tail_bound: cross.as_ref().map(|c| c.tail_bound),
                matrix: nr.r,
            });
        }
        report.timing_ms.insert("resolve".into(), ms(t));
    }

    if has(Stage::Evolve) {
        if let Some(ev) = &cfg.evolution {
            let t = Instant::now();
            report.evolution = Some(run_evolution(model, ev.t_final, ev.picard_depth, ev.samples)?);
            report.timing_ms.insert("evolve".into(), ms(t));
        } else {
            return Err(RunError::Config("evolve needs an [evolution] section".into()));
        }
    }

    if has(Stage::Oracle) {
        match &cfg.oracle {
            Some(o) if o.enabled => {
                let t = Instant::now();
                let rep = run_oracle(cfg, &bundle, &report.defects, base)?;
                report.oracle = Some(rep);
                report.timing_ms.insert("oracle".into(), ms(t));
            }
            Some(_) => {}
            None => return Err(RunError::Config("oracle-compare needs an [oracle] section".into())),
        }
    }

    if has(Stage::Sweep) {
        let Some(sw) = &cfg.sweep else {
            return Err(RunError::Config("sweep needs a [sweep] section".into()));
        };
        let t = Instant::now();
        let rows: Vec<Result<SweepRow, RunError>> = sw.n_points.par_iter().map(|&n| sweep_row(cfg, n, base)).collect();
        for r in rows {
            report.sweep.push(r?);
        }
        report.timing_ms.insert("sweep".into(), ms(t));
    }
    Ok(report)
}

fn run_evolution(model: &GKSLModel, t_final: f64, depth: usize, samples: usize) -> Result<EvolutionSummary, Error> {
    let n = model.dim();
    let id = eye(n);
    let times: Vec<f64> = (1..=samples).map(|k| t_final * k as f64 / samples as f64).collect();
    let mut norms = Vec::with_capacity(samples);
    for &t in &times {
        norms.push(op_norm(&evolve(model, &id, t)?));
    }
    let max_norm_excess = norms.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v - 1.0));
    let mut notes = Vec::new();
    let (picard_min_increment, picard_max_norm) = if n <= SUPEROP_MAX_DIM {
        let its = picard_iterates(model, &id, &EvolutionConfig::new(t_final, depth))?;
        let inc = its.windows(2).map(|w| linalg::min_eig(&(&w[1] - &w[0]))).fold(f64::INFINITY, f64::min);
        let top = its.iter().map(op_norm).fold(0.0, f64::max);
        (Some(inc), Some(top))
    } else {
        notes.push(format!("Picard iterates skipped above dim {SUPEROP_MAX_DIM}"));
        (None, None)
    };
    let entries: Vec<usize> = (0..n.min(4)).collect();
    let trajectory_csv = trajectory_csv(model, &id, &times, &entries)?;
    Ok(EvolutionSummary { t_final, times, norms, max_norm_excess, picard_min_increment, picard_max_norm, notes, trajectory_csv })
}

/// ⟨ψ, T_t(M_f) ψ⟩ for a Gaussian probe ψ.
fn quantum_expectation(model: &GKSLModel, grid: &HalfLineGrid, f: ObservableKind, t: f64, psi: &minqds::CVec) -> Result<f64, Error> {
    let m = multiplication(&grid.sample(|x| f.eval(x)));
    Ok(linalg::quad_form(&evolve(model, &m, t)?, psi))
}

fn run_oracle(cfg: &ScenarioConfig, bundle: &ModelBundle, defects: &[DefectSummary], base: &Path) -> Result<OracleReport, RunError> {
    let o = cfg.oracle.as_ref().expect("checked by caller");
    let spec = bundle
        .classical
        .as_ref()
        .ok_or_else(|| RunError::Config(format!("model kind {} has no classical counterpart", cfg.model.kind.name())))?;
    let mut rep = OracleReport {
        classical_kind: spec.kind().to_string(),
        t: o.t,
        h: bundle.half_line.as_ref().map(|g| g.h),
        n_paths: None,
        seed: cfg.seed,
        rows: Vec::new(),
        projection_shift: None,
        explosion: None,
        refinement: Vec::new(),
        agree: true,
    };
    match spec {
        ClassicalSpec::PureBirth { rates } => {
            let family = cfg.model.rates.expect("birth models carry a rate family");
            let ev = explosion_test(rates, family.tail())?;
            let n = rates.len();
            let doubled = build_bundle(cfg, Some(2 * n), base)?;
            for d in defects {
                let s2 = defect_iteration(&doubled.model, &resolvent_config(cfg, d.lambda, 2 * n))?;
                let change = (s2.defect - d.defect).abs() / d.defect.abs().max(f64::MIN_POSITIVE);
                rep.refinement.push(BirthRefinement {
                    lambda: d.lambda,
                    n_states: n,
                    defect: d.defect,
                    n_states_doubled: 2 * n,
                    defect_doubled: s2.defect,
                    persistent: d.verdict == Verdict::DefectDetected && change <= PERSISTENT_REL_CHANGE,
                    vanishing: d.verdict == Verdict::ConservativeAtTol || s2.defect <= VANISHING_RATIO * d.defect,
                });
            }
            rep.agree = match ev.verdict {
                Explosion::Explosive => rep.refinement.iter().all(|r| r.persistent),
                Explosion::NonExplosive => rep.refinement.iter().all(|r| r.vanishing),
                Explosion::Undetermined => true,
            };
            rep.explosion = Some(ev);
        }
        ClassicalSpec::ReflectedBm { .. } => {
            let grid = bundle.half_line.as_ref().expect("half-line model");
            let psi = probe_state(grid, o.x0, o.sigma);
            let p: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
            let mut shift: f64 = 0.0;
            for &f in &o.observables {
                let fv = grid.sample(|x| f.eval(x));
                shift = shift.max(boundary_projection(spec, &fv)?.1);
                let classical: f64 = bm_expectation(spec, &fv, o.t)?.iter().zip(&p).map(|(a, b)| a * b).sum();
                let quantum = quantum_expectation(&bundle.model, grid, f, o.t, &psi)?;
                let tolerance = o.h_constant * grid.h + 1e-6;
                rep.rows.push(OracleRow {
                    observable: f.name().into(),
                    quantum,
                    classical,
                    std_error: 0.0,
                    tolerance,
                    pass: (quantum - classical).abs() <= tolerance,
                });
            }
            rep.projection_shift = Some(shift);
        }
        ClassicalSpec::TransportJump { .. } => {
            let grid = bundle.half_line.as_ref().expect("half-line model");
            let psi = probe_state(grid, o.x0, o.sigma);
            let p: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
            let fns: Vec<Box<dyn Fn(f64) -> f64 + Sync>> = o.observables.iter().map(|&f| Box::new(move |x| f.eval(x)) as Box<dyn Fn(f64) -> f64 + Sync>).collect();
            let obs: Vec<Observable> = o.observables.iter().zip(&fns).map(|(f, b)| (f.name(), b.as_ref())).collect();
            let stats = simulate_transport_jump(spec, &obs, &Start::Cells(&p), o.t, o.n_paths, cfg.seed)?;
            for &f in &o.observables {
                let (mean, se) = stats.estimates[f.name()];
                let quantum = quantum_expectation(&bundle.model, grid, f, o.t, &psi)?;
                let tolerance = 3.0 * se + o.h_constant * grid.h;
                rep.rows.push(OracleRow {
                    observable: f.name().into(),
                    quantum,
                    classical: mean,
                    std_error: se,
                    tolerance,
                    pass: (quantum - mean).abs() <= tolerance,
                });
            }
            rep.n_paths = Some(o.n_paths);
        }
    }
    if !rep.rows.is_empty() {
        rep.agree = rep.rows.iter().all(|r| r.pass);
    }
    Ok(rep)
}

fn sweep_row(cfg: &ScenarioConfig, n: usize, base: &Path) -> Result<SweepRow, RunError> {
    let bundle = build_bundle(cfg, Some(n), base)?;
    let model = &bundle.model;
    let rep = check_condition_a(model, cfg.tolerances.condition_a)?;
    let cert = match &cfg.certificate {
        Some(cs) => Some(certify(model, &bundle.reference, cs.strategy, &certify_options(cfg))?),
        None => None,
    };
    let b = cert.as_ref().and_then(|c| c.b_estimate);
    let mut defect_verdicts = Vec::new();
    let mut defects = Vec::new();
    if cfg.model.kind == ModelKind::Birth {
        for l in lambdas(cfg, b)? {
            let s = defect_iteration(model, &resolvent_config(cfg, l, model.dim()))?;
            defect_verdicts.push(s.verdict);
            defects.push(s.defect);
        }
    }
    Ok(SweepRow {
        n_points: n,
        h: model.grid.as_ref().map_or(1.0, |g| g.h),
        dim: model.dim(),
        defect_norm: rep.defect_norm,
        theta: bundle.theta,
        b_estimate: b,
        certificate: cert.as_ref().map(|c| c.verdict),
        dominance_margin: cert.as_ref().and_then(|c| c.dominance_margin),
        defect_verdicts,
        defects,
    })
}

//! Report artifacts and report comparison.
//!
//! CSV numbers use 17 significant digits with '.' as decimal separator, so
//! identical runs give byte-identical files. report.json additionally holds
//! wall-clock timings and is excluded from that guarantee.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use minqds::operators::format_matrix;

use crate::scenario::ScenarioReport;

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// CSV artifacts by file name, in a fixed order.
pub fn csv_artifacts(r: &ScenarioReport) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if let Some(a) = &r.condition_a {
        let mut s = String::from("defect_norm,max_defect_eig,classification\n");
        let _ = writeln!(s, "{},{},{}", num(a.defect_norm), num(a.max_defect_eig), snake(&a.classification));
        out.push(("condition_a.csv".into(), s));
    }
    if !r.defects.is_empty() {
        let mut s = String::from("lambda,verdict,defect,defect_limit_norm,consistency_residual,terms,stagnated,min_monotonicity\n");
        for d in &r.defects {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                num(d.lambda),
                snake(&d.verdict),
                num(d.defect),
                num(d.defect_limit_norm),
                num(d.consistency_residual),
                d.terms,
                d.stagnated,
                num(d.min_monotonicity)
            );
        }
        out.push(("defect_summary.csv".into(), s));
        for (i, d) in r.defects.iter().enumerate() {
            let mut s = String::from("n,norm,min_eig_monotonicity,identity_residual\n");
            for row in &d.rows {
                let _ = writeln!(s, "{},{},{},{}", row.n, num(row.norm), num(row.min_eig_monotonicity), num(row.identity_residual));
            }
            out.push((format!("defect_lambda_{i}.csv"), s));
        }
    }
    if !r.resolvents.is_empty() {
        let mut s = String::from("lambda,terms_used,tail_norm,converged,lambda_r_identity_norm,crosscheck_discrepancy,crosscheck_tail_bound\n");
        for v in &r.resolvents {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                num(v.lambda),
                v.terms_used,
                num(v.tail_norm),
                v.converged,
                num(v.lambda_r_identity_norm),
                opt(v.crosscheck_discrepancy),
                opt(v.crosscheck_tail_bound)
            );
        }
        out.push(("resolve_summary.csv".into(), s));
    }
    if let Some(c) = &r.certificate {
        let mut s = String::from("theorem,check,pass,value,note\n");
        for ch in &c.checks {
            let _ = writeln!(s, "{},{},{},{},\"{}\"", c.theorem.name(), ch.name, ch.pass, opt(ch.value), ch.note.replace('"', "'"));
        }
        let _ = writeln!(s, "{},verdict,{},{},\"{}\"", c.theorem.name(), snake(&c.verdict) == "certified", opt(c.b_estimate), snake(&c.verdict));
        out.push(("certificate.csv".into(), s));
    }
    if let Some(b) = &r.form_bound {
        let mut s = String::from("lambda,b,eps,vector,lhs,rhs,slack\n");
        for e in &b.entries {
            let _ = writeln!(s, "{},{},{},{},{},{},{}", num(b.lambda), num(b.b), num(e.eps), e.vector, num(e.lhs), num(e.rhs), num(e.slack));
        }
        out.push(("form_bound.csv".into(), s));
    }
    if let Some(e) = &r.evolution {
        let mut s = String::from("t,norm_t_identity\n");
        for (t, n) in e.times.iter().zip(&e.norms) {
            let _ = writeln!(s, "{},{}", num(*t), num(*n));
        }
        out.push(("evolution_norms.csv".into(), s));
        out.push(("trajectory.csv".into(), e.trajectory_csv.clone()));
    }
    if let Some(o) = &r.oracle {
        let mut s = String::from("classical_kind,observable,t,quantum,classical,std_error,tolerance,pass\n");
        for row in &o.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                o.classical_kind,
                row.observable,
                num(o.t),
                num(row.quantum),
                num(row.classical),
                num(row.std_error),
                num(row.tolerance),
                row.pass
            );
        }
        if let Some(ev) = &o.explosion {
            for (k, sum) in &ev.partial_sums {
                let _ = writeln!(s, "{},partial_sum_{k},,{},,,,{}", o.classical_kind, num(*sum), snake(&ev.verdict));
            }
        }
        out.push(("oracle.csv".into(), s));
        if !o.refinement.is_empty() {
            let mut s = String::from("lambda,n_states,defect,n_states_doubled,defect_doubled,persistent,vanishing\n");
            for b in &o.refinement {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    num(b.lambda),
                    b.n_states,
                    num(b.defect),
                    b.n_states_doubled,
                    num(b.defect_doubled),
                    b.persistent,
                    b.vanishing
                );
            }
            out.push(("birth_refinement.csv".into(), s));
        }
    }
    if !r.sweep.is_empty() {
        let mut s = String::from("n_points,h,dim,defect_norm,theta,b_estimate,certificate,dominance_margin,defects,defect_verdicts\n");
        for w in &r.sweep {
            let defects: Vec<String> = w.defects.iter().map(|d| num(*d)).collect();
            let verdicts: Vec<String> = w.defect_verdicts.iter().map(snake).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                w.n_points,
                num(w.h),
                w.dim,
                num(w.defect_norm),
                opt(w.theta),
                opt(w.b_estimate),
                w.certificate.map(|v| snake(&v)).unwrap_or_default(),
                opt(w.dominance_margin),
                defects.join(";"),
                verdicts.join(";")
            );
        }
        out.push(("sweep.csv".into(), s));
        let mut t = String::from("n_coarse,n_fine,quantity,coarse,fine,ratio\n");
        for pair in r.sweep.windows(2) {
            for e in refinement_pairs(&pair[0], &pair[1]) {
                let _ = writeln!(t, "{},{},{},{},{},{}", pair[0].n_points, pair[1].n_points, e.quantity, num(e.a), num(e.b), opt(e.ratio));
            }
        }
        out.push(("sweep_trend.csv".into(), t));
    }
    out
}

/// Writes report.json, the CSV artifacts and resolvent matrices into `dir`;
/// returns the written paths.
pub fn write_artifacts(r: &ScenarioReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, body) in csv_artifacts(r) {
        let p = dir.join(name);
        write_atomic(&p, body.as_bytes())?;
        written.push(p);
    }
    for (i, v) in r.resolvents.iter().enumerate() {
        let p = dir.join(format!("resolvent_lambda_{i}.txt"));
        write_atomic(&p, format_matrix(&format!("R_lambda_{}", num(v.lambda)), &v.matrix).as_bytes())?;
        written.push(p);
    }
    let json = serde_json::to_string_pretty(r).map_err(std::io::Error::other)?;
    let p = dir.join("report.json");
    write_atomic(&p, json.as_bytes())?;
    written.push(p);
    Ok(written)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DiffEntry {
    pub quantity: String,
    pub a: f64,
    pub b: f64,
    /// a / b when b ≠ 0
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportDiff {
    /// numeric quantities that differ between the reports
    pub entries: Vec<DiffEntry>,
    /// categorical results (verdicts, classifications) that differ
    pub verdict_changes: Vec<String>,
}

impl ReportDiff {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.verdict_changes.is_empty()
    }

    pub fn get(&self, quantity: &str) -> Option<&DiffEntry> {
        self.entries.iter().find(|e| e.quantity == quantity)
    }
}

fn entry(q: &str, a: f64, b: f64) -> DiffEntry {
    DiffEntry { quantity: q.to_string(), a, b, ratio: if b != 0.0 { Some(a / b) } else { None } }
}

fn refinement_pairs(a: &crate::scenario::SweepRow, b: &crate::scenario::SweepRow) -> Vec<DiffEntry> {
    let mut v = vec![entry("h", a.h, b.h), entry("defect_norm", a.defect_norm, b.defect_norm)];
    if let (Some(x), Some(y)) = (a.b_estimate, b.b_estimate) {
        v.push(entry("b_estimate", x, y));
    }
    if let (Some(x), Some(y)) = (a.theta, b.theta) {
        v.push(entry("theta", x, y));
    }
    for (i, (x, y)) in a.defects.iter().zip(&b.defects).enumerate() {
        v.push(entry(&format!("defect_{i}"), *x, *y));
    }
    v
}

/// Differences between two reports of the same model kind, e.g. a run at h
/// against one at h/2, or at two values of λ. Identical reports give an
/// empty diff.
pub fn compare_report(a: &ScenarioReport, b: &ScenarioReport) -> Result<ReportDiff, String> {
    let kind = |r: &ScenarioReport| r.model.as_ref().map(|m| m.kind);
    if kind(a) != kind(b) {
        return Err(format!("reports describe different model kinds ({:?} vs {:?})", kind(a), kind(b)));
    }
    let mut entries = Vec::new();
    let mut verdict_changes = Vec::new();
    let mut push = |q: &str, x: f64, y: f64| {
        if x.to_bits() != y.to_bits() {
            entries.push(entry(q, x, y));
        }
    };
    if let (Some(x), Some(y)) = (&a.model, &b.model) {
        push("dim", x.dim as f64, y.dim as f64);
        if let (Some(p), Some(q)) = (x.h, y.h) {
            push("h", p, q);
        }
        if let (Some(p), Some(q)) = (x.theta, y.theta) {
            push("theta", p, q);
        }
    }
    if let (Some(x), Some(y)) = (&a.condition_a, &b.condition_a) {
        push("defect_norm", x.defect_norm, y.defect_norm);
        if x.classification != y.classification {
            verdict_changes.push(format!("classification {} -> {}", snake(&x.classification), snake(&y.classification)));
        }
    }
    for (i, (x, y)) in a.defects.iter().zip(&b.defects).enumerate() {
        push(&format!("lambda_{i}"), x.lambda, y.lambda);
        push(&format!("defect_{i}"), x.defect, y.defect);
        if x.verdict != y.verdict {
            verdict_changes.push(format!("defect verdict {i}: {} -> {}", snake(&x.verdict), snake(&y.verdict)));
        }
    }
    if let (Some(x), Some(y)) = (&a.certificate, &b.certificate) {
        if let (Some(p), Some(q)) = (x.b_estimate, y.b_estimate) {
            push("b_estimate", p, q);
        }
        if let (Some(p), Some(q)) = (x.dominance_margin, y.dominance_margin) {
            push("dominance_margin", p, q);
        }
        if x.verdict != y.verdict {
            verdict_changes.push(format!("certificate {} -> {}", snake(&x.verdict), snake(&y.verdict)));
        }
    }
    if let (Some(x), Some(y)) = (&a.oracle, &b.oracle) {
        for (p, q) in x.rows.iter().zip(&y.rows) {
            push(&format!("oracle_{}_quantum", p.observable), p.quantum, q.quantum);
            push(&format!("oracle_{}_classical", p.observable), p.classical, q.classical);
        }
        if x.agree != y.agree {
            verdict_changes.push(format!("oracle agreement {} -> {}", x.agree, y.agree));
        }
    }
    Ok(ReportDiff { entries, verdict_changes })
}

//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected, and every
//! error carries the line and column (parse errors) or the key path and
//! line (validation errors) it refers to. See `scenarios/` for examples and
//! README.md for the full schema.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use minqds::criteria::Strategy;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub resolvent: ResolventSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub certificate: Option<CertificateSection>,
    #[serde(default)]
    pub evolution: Option<EvolutionSection>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Scalar,
    PureLoss,
    RandomExact,
    RandomSubstochastic,
    ReflectedBm,
    TransportJump,
    HeavyIon,
    Birth,
    File,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Scalar => "scalar",
            ModelKind::PureLoss => "pure_loss",
            ModelKind::RandomExact => "random_exact",
            ModelKind::RandomSubstochastic => "random_substochastic",
            ModelKind::ReflectedBm => "reflected_bm",
            ModelKind::TransportJump => "transport_jump",
            ModelKind::HeavyIon => "heavy_ion",
            ModelKind::Birth => "birth",
            ModelKind::File => "file",
        }
    }

    fn allowed(self) -> &'static [&'static str] {
        match self {
            ModelKind::Scalar | ModelKind::PureLoss => &[],
            ModelKind::RandomExact | ModelKind::RandomSubstochastic => &["dim", "channels", "model_seed"],
            ModelKind::ReflectedBm => &["n_points", "x_max", "g", "alpha"],
            ModelKind::TransportJump => &["n_points", "x_max", "g", "normalize"],
            ModelKind::HeavyIon => &["n_points", "x_max", "alpha", "mass", "w", "potential"],
            ModelKind::Birth => &["rates", "n_states"],
            ModelKind::File => &["path"],
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// √2·e^{−x}
    Sqrt2Exp,
    Zero,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    Zero,
    Tanh,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RateFamily {
    /// λ_k = (k+1)²
    Square,
    /// λ_k = k+1
    Linear,
    /// λ_k = 1
    Constant,
    /// λ_k = (k+1)·log²(k+2)
    LinearLogSquare,
}

impl RateFamily {
    pub fn rates(self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let x = (k + 1) as f64;
                match self {
                    RateFamily::Square => x * x,
                    RateFamily::Linear => x,
                    RateFamily::Constant => 1.0,
                    RateFamily::LinearLogSquare => x * (x + 1.0).ln().powi(2),
                }
            })
            .collect()
    }

    pub fn tail(self) -> minqds::oracle::TailRule {
        use minqds::oracle::TailRule::Polynomial;
        match self {
            RateFamily::Square => Polynomial { p: 2.0, q: 0.0 },
            RateFamily::Linear => Polynomial { p: 1.0, q: 0.0 },
            RateFamily::Constant => Polynomial { p: 0.0, q: 0.0 },
            RateFamily::LinearLogSquare => Polynomial { p: 1.0, q: 2.0 },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub n_points: Option<usize>,
    pub x_max: Option<f64>,
    pub g: Option<Profile>,
    pub alpha: Option<f64>,
    pub normalize: Option<bool>,
    pub mass: Option<f64>,
    /// constant value of W
    pub w: Option<f64>,
    pub potential: Option<Potential>,
    pub rates: Option<RateFamily>,
    pub n_states: Option<usize>,
    pub dim: Option<usize>,
    pub channels: Option<usize>,
    pub model_seed: Option<u64>,
    pub path: Option<String>,
}

impl ModelConfig {
    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        macro_rules! mark {
            ($($f:ident),*) => { $( if self.$f.is_some() { v.push(stringify!($f)); } )* };
        }
        mark!(n_points, x_max, g, alpha, normalize, mass, w, potential, rates, n_states, dim, channels, model_seed, path);
        v
    }
}

/// An entry of the λ list: a number, or the rule "2b+1" (needs a certificate).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum LambdaEntry {
    Value(f64),
    Rule(String),
}

pub const LAMBDA_RULE: &str = "2b+1";

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Norm,
    /// ⟨e₀, ·e₀⟩, the survival defect of a chain started in state 0
    E0,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ResolventSection {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<LambdaEntry>,
    #[serde(default = "default_max_terms")]
    pub max_terms: usize,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_defect_tol")]
    pub defect_tol: f64,
    #[serde(default = "default_probe")]
    pub probe: ProbeKind,
    /// compare the Neumann resolvent with a Laplace quadrature (resolve)
    #[serde(default)]
    pub crosscheck: bool,
}

fn default_lambdas() -> Vec<LambdaEntry> {
    vec![LambdaEntry::Value(1.0)]
}
fn default_max_terms() -> usize {
    2000
}
fn default_tail_tol() -> f64 {
    1e-12
}
fn default_defect_tol() -> f64 {
    1e-6
}
fn default_probe() -> ProbeKind {
    ProbeKind::Norm
}

impl Default for ResolventSection {
    fn default() -> Self {
        ResolventSection {
            lambdas: default_lambdas(),
            max_terms: default_max_terms(),
            tail_tol: default_tail_tol(),
            defect_tol: default_defect_tol(),
            probe: default_probe(),
            crosscheck: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tol")]
    pub condition_a: f64,
    #[serde(default = "default_tol")]
    pub dominance: f64,
}

fn default_tol() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { condition_a: default_tol(), dominance: default_tol() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    pub strategy: Strategy,
    #[serde(default)]
    pub fn_samples: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    pub t_final: f64,
    #[serde(default = "default_depth")]
    pub picard_depth: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_depth() -> usize {
    8
}
fn default_samples() -> usize {
    20
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// e^{−x}
    Exp1,
    /// e^{−2x}
    Exp2,
    /// 1/(1+x)
    Rational,
    /// 1
    One,
}

impl ObservableKind {
    pub fn name(self) -> &'static str {
        match self {
            ObservableKind::Exp1 => "exp1",
            ObservableKind::Exp2 => "exp2",
            ObservableKind::Rational => "rational",
            ObservableKind::One => "one",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            ObservableKind::Exp1 => (-x).exp(),
            ObservableKind::Exp2 => (-2.0 * x).exp(),
            ObservableKind::Rational => 1.0 / (1.0 + x),
            ObservableKind::One => 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_oracle_t")]
    pub t: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableKind>,
    /// center and width of the Gaussian probe state
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// tolerance constant C in 3σ + C·h (transport) and C·h + 1e-6 (reflected BM)
    #[serde(default = "default_h_constant")]
    pub h_constant: f64,
}

fn default_true() -> bool {
    true
}
fn default_oracle_t() -> f64 {
    1.0
}
fn default_paths() -> usize {
    100_000
}
fn default_observables() -> Vec<ObservableKind> {
    vec![ObservableKind::Exp1, ObservableKind::Exp2, ObservableKind::Rational]
}
fn default_x0() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    0.5
}
fn default_h_constant() -> f64 {
    0.2
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n_points: Vec<usize>,
}

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: ")?,
            (Some(l), None) => write!(f, "line {l}: ")?,
            _ => {}
        }
        if let Some(k) = &self.key {
            write!(f, "{k}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

/// First line of `key = ...` inside table `[table]` (or the top level).
fn locate(src: &str, table: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = Some(line.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            continue;
        }
        let in_table = match (table, &current) {
            (None, None) => true,
            (Some(t), Some(c)) => t == c,
            _ => false,
        };
        if in_table && line.split('=').next().map(str::trim) == Some(key) {
            return Some(i + 1);
        }
    }
    None
}

impl ScenarioConfig {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(src, s.start)).map_or((None, None), |(l, c)| (Some(l), Some(c)));
            ConfigError { line, column, key: None, message: e.message().trim().to_string() }
        })?;
        cfg.validate().map_err(|(table, key, message)| ConfigError {
            line: locate(src, table, key),
            column: None,
            key: Some(match table {
                Some(t) => format!("{t}.{key}"),
                None => key.to_string(),
            }),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            column: None,
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&src)
    }

    /// Semantic checks; the error names (table, key, message).
    pub fn validate(&self) -> Result<(), (Option<&'static str>, &'static str, String)> {
        let m = &self.model;
        let err = |k: &'static str, msg: String| Err((Some("model"), k, msg));
        for key in m.present() {
            if !m.kind.allowed().contains(&key) {
                return err(key, format!("not a parameter of model kind {}", m.kind.name()));
            }
        }
        let positive = |k: &'static str, v: Option<f64>| -> Result<(), (Option<&'static str>, &'static str, String)> {
            match v {
                Some(x) if !(x > 0.0 && x.is_finite()) => Err((Some("model"), k, format!("must be a positive number, got {x}"))),
                _ => Ok(()),
            }
        };
        positive("x_max", m.x_max)?;
        positive("alpha", if m.kind == ModelKind::ReflectedBm { m.alpha } else { None })?;
        positive("mass", m.mass)?;
        if let Some(n) = m.n_points {
            if !(8..=1024).contains(&n) {
                return err("n_points", format!("must be in 8..=1024, got {n}"));
            }
        }
        match m.kind {
            ModelKind::RandomExact | ModelKind::RandomSubstochastic => {
                if let Some(d) = m.dim {
                    if !(1..=64).contains(&d) {
                        return err("dim", format!("must be in 1..=64, got {d}"));
                    }
                }
            }
            ModelKind::Birth => {
                if m.rates.is_none() {
                    return err("rates", "required for birth models".into());
                }
                if let Some(n) = m.n_states {
                    if n < 2 {
                        return err("n_states", format!("must be >= 2, got {n}"));
                    }
                }
            }
            ModelKind::File => {
                if m.path.is_none() {
                    return err("path", "required for file models".into());
                }
            }
            _ => {}
        }

        let r = &self.resolvent;
        let rerr = |k: &'static str, msg: String| Err((Some("resolvent"), k, msg));
        if r.lambdas.is_empty() {
            return rerr("lambdas", "needs at least one entry".into());
        }
        for l in &r.lambdas {
            match l {
                LambdaEntry::Value(x) if !(*x > 0.0 && x.is_finite()) => return rerr("lambdas", format!("lambda must be > 0, got {x}")),
                LambdaEntry::Rule(s) if s != LAMBDA_RULE => return rerr("lambdas", format!("unknown rule {s:?}; the only rule is \"{LAMBDA_RULE}\"")),
                LambdaEntry::Rule(_) if self.certificate.is_none() => {
                    return rerr("lambdas", format!("\"{LAMBDA_RULE}\" needs a [certificate] section"))
                }
                _ => {}
            }
        }
        if !(r.tail_tol > 0.0) {
            return rerr("tail_tol", format!("must be > 0, got {}", r.tail_tol));
        }
        if !(r.defect_tol > 0.0) {
            return rerr("defect_tol", format!("must be > 0, got {}", r.defect_tol));
        }
        if r.max_terms == 0 {
            return rerr("max_terms", "must be >= 1".into());
        }
        if !(self.tolerances.condition_a >= 0.0) {
            return Err((Some("tolerances"), "condition_a", "must be >= 0".into()));
        }
        if !(self.tolerances.dominance >= 0.0) {
            return Err((Some("tolerances"), "dominance", "must be >= 0".into()));
        }
        if let Some(c) = &self.certificate {
            if let Some(s) = &c.fn_samples {
                if s.is_empty() || s.contains(&0) {
                    return Err((Some("certificate"), "fn_samples", "needs positive entries".into()));
                }
            }
        }
        if let Some(e) = &self.evolution {
            if !(e.t_final > 0.0 && e.t_final.is_finite()) {
                return Err((Some("evolution"), "t_final", format!("must be > 0, got {}", e.t_final)));
            }
            if e.samples == 0 {
                return Err((Some("evolution"), "samples", "must be >= 1".into()));
            }
        }
        if let Some(o) = &self.oracle {
            if !(o.t >= 0.0) {
                return Err((Some("oracle"), "t", format!("must be >= 0, got {}", o.t)));
            }
            if o.n_paths < 2 {
                return Err((Some("oracle"), "n_paths", "must be >= 2".into()));
            }
            if !(o.sigma > 0.0) || !(o.x0 >= 0.0) {
                return Err((Some("oracle"), "sigma", "probe needs sigma > 0 and x0 >= 0".into()));
            }
        }
        if let Some(s) = &self.sweep {
            if s.n_points.is_empty() {
                return Err((Some("sweep"), "n_points", "needs at least one grid size".into()));
            }
            if !matches!(m.kind, ModelKind::ReflectedBm | ModelKind::TransportJump | ModelKind::HeavyIon | ModelKind::Birth) {
                return Err((Some("sweep"), "n_points", format!("model kind {} has no grid to refine", m.kind.name())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "name = \"s\"\n[model]\nkind = \"scalar\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.resolvent.lambdas, vec![LambdaEntry::Value(1.0)]);
        assert_eq!(c.tolerances.condition_a, 1e-8);
        assert!(c.certificate.is_none());
    }

    #[test]
    fn unknown_key_reports_position() {
        let e = ScenarioConfig::parse("name = \"s\"\n[model]\nkind = \"scalar\"\nbogus = 3\n").unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.message.contains("bogus"), "{e}");
    }

    #[test]
    fn misplaced_parameter_names_key_and_line() {
        let e = ScenarioConfig::parse("name = \"s\"\n[model]\nkind = \"scalar\"\nalpha = 1.0\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("model.alpha"));
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn lambda_rule_needs_certificate() {
        let src = "name = \"s\"\n[model]\nkind = \"scalar\"\n[resolvent]\nlambdas = [\"2b+1\"]\n";
        let e = ScenarioConfig::parse(src).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("resolvent.lambdas"));
        assert_eq!(e.line, Some(5));
        let ok = format!("{src}[certificate]\nstrategy = \"thm_4_3\"\n");
        assert!(ScenarioConfig::parse(&ok).is_ok());
    }

    #[test]
    fn bad_value_type_reports_column() {
        let e = ScenarioConfig::parse("name = \"s\"\n[model]\nkind = \"scalar\"\n[resolvent]\nmax_terms = \"many\"\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.column.is_some());
    }

    #[test]
    fn rate_families() {
        assert_eq!(RateFamily::Square.rates(3), vec![1.0, 4.0, 9.0]);
        assert_eq!(RateFamily::Linear.rates(2), vec![1.0, 2.0]);
    }
}

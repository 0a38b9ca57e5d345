//! Run configuration, report assembly and rendering for the command-line tool.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::identity_suite::{etas_for, run_suite, CheckReport, EtaMode, IdentityId, Method, SuiteConfig, SuiteError, Tolerances};
use crate::integrator::{closed_form_f3_integral, closed_form_i, volume_cpn, ExactValue, IntegratorError};
use crate::lie_eigen::gamma;
use crate::obstruction::{
    cubic_constant, final_coefficient, fit_cubic_constant, koiso_obstruction, koiso_remark_crosscheck, DeformationSpec,
    ObstructionResult,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DEFAULT_SAMPLES: u64 = 100_000;

/// Relative tolerance of the `tr(η³)` proportionality fit.
pub const FIT_REL_TOL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ReportError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> ReportError {
    ReportError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            _ => Err(format!("unknown format '{s}' (expected json or markdown)")),
        }
    }
}

/// Optional settings from one source (config file or flags). Later layers win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigLayer {
    pub n: Option<Vec<usize>>,
    pub n_max: Option<usize>,
    pub checks: Option<Vec<IdentityId>>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub partitions: Option<u32>,
    pub eta: Option<EtaMode>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
    pub pointwise_rel: Option<f64>,
    pub mc_sigma: Option<f64>,
    pub mc_rel: Option<f64>,
    pub points: Option<usize>,
}

pub fn parse_n_list(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.parse().map_err(|_| format!("bad dimension range '{part}'"))?;
            let b: usize = b.trim_start_matches('=').parse().map_err(|_| format!("bad dimension range '{part}'"))?;
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad dimension '{part}'"))?);
        }
    }
    if out.is_empty() {
        return Err("empty dimension list".into());
    }
    Ok(out)
}

pub fn parse_checks(s: &str) -> Result<Vec<IdentityId>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all" {
            out.extend(IdentityId::ALL);
        } else {
            out.push(part.parse()?);
        }
    }
    if out.is_empty() {
        return Err("empty check list".into());
    }
    out.sort();
    out.dedup();
    Ok(out)
}

impl ConfigLayer {
    /// `key = value` lines; `#` starts a comment.
    pub fn parse_file(text: &str) -> Result<ConfigLayer, ReportError> {
        let mut layer = ConfigLayer::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| config_err(format!("line {}: expected 'key = value'", i + 1)))?;
            let (key, value) = (key.trim().replace('-', "_"), value.trim().trim_matches('"'));
            let bad = |e: String| config_err(format!("line {}: {key}: {e}", i + 1));
            fn num<T: FromStr>(v: &str) -> Result<T, String> {
                v.parse().map_err(|_| format!("cannot parse '{v}'"))
            }
            match key.as_str() {
                "n" | "n_list" => layer.n = Some(parse_n_list(value).map_err(bad)?),
                "n_max" => layer.n_max = Some(num(value).map_err(bad)?),
                "checks" => layer.checks = Some(parse_checks(value).map_err(bad)?),
                "samples" => layer.samples = Some(num(value).map_err(bad)?),
                "seed" => layer.seed = Some(num(value).map_err(bad)?),
                "partitions" => layer.partitions = Some(num(value).map_err(bad)?),
                "eta" | "eta_mode" => layer.eta = Some(value.parse().map_err(bad)?),
                "format" | "output_format" => layer.format = Some(value.parse().map_err(bad)?),
                "out" | "output_path" => layer.out = Some(PathBuf::from(value)),
                "pointwise_rel" => layer.pointwise_rel = Some(num(value).map_err(bad)?),
                "mc_sigma" => layer.mc_sigma = Some(num(value).map_err(bad)?),
                "mc_rel" => layer.mc_rel = Some(num(value).map_err(bad)?),
                "points" => layer.points = Some(num(value).map_err(bad)?),
                _ => return Err(config_err(format!("line {}: unknown key '{key}'", i + 1))),
            }
        }
        Ok(layer)
    }

    fn overlay(mut self, top: ConfigLayer) -> ConfigLayer {
        macro_rules! take {
            ($($f:ident),*) => { $( if top.$f.is_some() { self.$f = top.$f; } )* };
        }
        take!(n, n_max, checks, samples, seed, partitions, eta, format, out, pointwise_rel, mc_sigma, mc_rel, points);
        self
    }
}

fn eta_string<S: serde::Serializer>(eta: &EtaMode, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(eta)
}

fn tags<S: serde::Serializer>(ids: &[IdentityId], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(ids.iter().map(|id| id.tag()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n_list: Vec<usize>,
    #[serde(serialize_with = "tags")]
    pub checks: Vec<IdentityId>,
    pub samples: u64,
    pub seed: u64,
    pub partitions: u32,
    pub tolerances: Tolerances,
    #[serde(rename = "eta_mode", serialize_with = "eta_string")]
    pub eta: EtaMode,
    pub points: usize,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_list: vec![2],
            checks: IdentityId::ALL.to_vec(),
            samples: DEFAULT_SAMPLES,
            seed: 42,
            partitions: crate::integrator::DEFAULT_PARTITIONS,
            tolerances: Tolerances::default(),
            eta: EtaMode::Gamma,
            points: 100,
            output_format: OutputFormat::Json,
            output_path: None,
        }
    }
}

impl RunConfig {
    /// Defaults, then each layer in order.
    pub fn resolve(layers: impl IntoIterator<Item = ConfigLayer>) -> Result<RunConfig, ReportError> {
        let merged = layers.into_iter().fold(ConfigLayer::default(), ConfigLayer::overlay);
        let mut cfg = RunConfig::default();
        match (merged.n, merged.n_max) {
            (Some(n), _) => cfg.n_list = n,
            (None, Some(m)) => cfg.n_list = (1..=m).collect(),
            (None, None) => {}
        }
        if let Some(c) = merged.checks {
            cfg.checks = c;
        }
        macro_rules! set {
            ($($f:ident => $($dst:ident).+),*) => { $( if let Some(v) = merged.$f { cfg.$($dst).+ = v; } )* };
        }
        set!(samples => samples, seed => seed, partitions => partitions, eta => eta, format => output_format,
             pointwise_rel => tolerances.pointwise_rel, mc_sigma => tolerances.mc_sigma,
             mc_rel => tolerances.mc_rel, points => points);
        cfg.output_path = merged.out;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.n_list.is_empty() {
            return Err(config_err("n list is empty"));
        }
        if self.n_list.contains(&0) {
            return Err(config_err("dimensions must be >= 1"));
        }
        if self.samples == 0 {
            return Err(config_err("samples must be >= 1"));
        }
        if self.partitions == 0 {
            return Err(config_err("partitions must be >= 1"));
        }
        if self.points == 0 {
            return Err(config_err("points must be >= 1"));
        }
        let t = &self.tolerances;
        if !(t.pointwise_rel > 0.0 && t.mc_sigma > 0.0 && t.mc_rel > 0.0) {
            return Err(config_err("tolerances must be positive"));
        }
        Ok(())
    }

    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            samples: self.samples,
            seed: self.seed,
            partitions: self.partitions,
            tolerances: self.tolerances,
            eta: self.eta,
            points: self.points,
            ..SuiteConfig::default()
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_list.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralRow {
    pub n: usize,
    /// `I_n^r` for `r = 0..3`.
    pub standard: Vec<ExactValue>,
    pub volume: ExactValue,
    pub f3_gamma: ExactValue,
}

pub fn cmd_integrals(n_max: usize) -> Result<Vec<IntegralRow>, ReportError> {
    if n_max == 0 {
        return Err(config_err("n-max must be >= 1"));
    }
    (1..=n_max)
        .map(|n| {
            Ok(IntegralRow {
                n,
                standard: (0..4).map(|r| closed_form_i(n, r)).collect::<Result<_, _>>()?,
                volume: volume_cpn(n)?,
                f3_gamma: closed_form_f3_integral(n)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemarkCheck {
    pub n: usize,
    pub ours: ExactValue,
    pub koiso: ExactValue,
    pub pass: bool,
}

/// Least-squares fit of the Monte Carlo totals at one `n` against `tr(η³)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProportionalityFit {
    pub n: usize,
    pub count: usize,
    pub constant: f64,
    pub sigma: f64,
    pub expected: f64,
    pub rel_err: f64,
    pub pass: bool,
}

pub fn proportionality_fit(n: usize, results: &[ObstructionResult]) -> Option<ProportionalityFit> {
    let (constant, sigma) = fit_cubic_constant(results)?;
    let expected = final_coefficient(n) as f64 * cubic_constant(n);
    let rel_err = if expected != 0.0 { (constant - expected).abs() / expected.abs() } else { constant.abs() };
    let pass = if expected != 0.0 { rel_err <= FIT_REL_TOL } else { constant.abs() <= 3.0 * sigma };
    Some(ProportionalityFit { n, count: results.len(), constant, sigma, expected, rel_err, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub version: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub integrals: Vec<IntegralRow>,
    pub checks: Vec<CheckReport>,
    pub obstructions: Vec<ObstructionResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub remarks: Vec<RemarkCheck>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<ProportionalityFit>,
    pub summary: Summary,
    pub wall_time: f64,
}

impl RunReport {
    fn new(config: &RunConfig) -> Self {
        RunReport {
            config: config.clone(),
            version: VERSION.to_string(),
            integrals: Vec::new(),
            checks: Vec::new(),
            obstructions: Vec::new(),
            remarks: Vec::new(),
            fits: Vec::new(),
            summary: Summary { total: 0, passed: 0, failed: 0 },
            wall_time: 0.0,
        }
    }

    fn finalize(mut self, start: Instant) -> Self {
        let verdicts: Vec<bool> = self
            .checks
            .iter()
            .map(|c| c.pass)
            .chain(self.obstructions.iter().map(|o| o.pass))
            .chain(self.remarks.iter().map(|r| r.pass))
            .chain(self.fits.iter().map(|f| f.pass))
            .collect();
        let passed = verdicts.iter().filter(|&&p| p).count();
        self.summary = Summary { total: verdicts.len(), passed, failed: verdicts.len() - passed };
        self.wall_time = start.elapsed().as_secs_f64();
        self
    }

    pub fn exit_code(&self) -> i32 {
        if self.summary.failed == 0 {
            0
        } else {
            1
        }
    }
}

pub fn report_integrals(cfg: &RunConfig, n_max: usize) -> Result<RunReport, ReportError> {
    let start = Instant::now();
    let mut report = RunReport::new(cfg);
    report.integrals = cmd_integrals(n_max)?;
    Ok(report.finalize(start))
}

pub fn cmd_check(cfg: &RunConfig) -> Result<RunReport, ReportError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = RunReport::new(cfg);
    report.checks = run_suite(&cfg.n_list, &cfg.checks, &cfg.suite())?;
    Ok(report.finalize(start))
}

fn obstructions_into(cfg: &RunConfig, report: &mut RunReport) -> Result<(), ReportError> {
    let suite = cfg.suite();
    for &n in &cfg.n_list {
        let mut mc_random = Vec::new();
        for eta in etas_for(n, cfg.eta, cfg.seed) {
            let is_gamma = eta == gamma(n);
            let spec = DeformationSpec::new(eta);
            if is_gamma {
                report.obstructions.push(koiso_obstruction(&spec, Method::Closed, &suite)?);
            }
            let mc = koiso_obstruction(&spec, Method::Mc, &suite)?;
            if !is_gamma {
                mc_random.push(mc.clone());
            }
            report.obstructions.push(mc);
        }
        let (ours, koiso, pass) = koiso_remark_crosscheck(n);
        report.remarks.push(RemarkCheck { n, ours, koiso, pass });
        if mc_random.len() >= 2 {
            report.fits.extend(proportionality_fit(n, &mc_random));
        }
    }
    Ok(())
}

pub fn cmd_obstruction(cfg: &RunConfig) -> Result<RunReport, ReportError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = RunReport::new(cfg);
    obstructions_into(cfg, &mut report)?;
    Ok(report.finalize(start))
}

pub fn cmd_all(cfg: &RunConfig, n_max: usize) -> Result<RunReport, ReportError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = RunReport::new(cfg);
    report.integrals = cmd_integrals(n_max)?;
    report.checks = run_suite(&cfg.n_list, &cfg.checks, &cfg.suite())?;
    obstructions_into(cfg, &mut report)?;
    Ok(report.finalize(start))
}

pub fn render_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn sigma_cell(s: Option<f64>) -> String {
    s.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

pub fn render_markdown(report: &RunReport) -> String {
    let mut out = String::new();
    let c = &report.config;
    let _ = writeln!(out, "# cpn-rigidity report (v{})\n", report.version);
    let _ = writeln!(
        out,
        "n = {:?}, samples = {}, seed = {}, partitions = {}, eta = {}\n",
        c.n_list, c.samples, c.seed, c.partitions, c.eta
    );
    if !report.integrals.is_empty() {
        out.push_str("## Standard integrals\n\n| n | I^0 | I^1 | I^2 | I^3 | Vol | ∫f_γ³ |\n|---|---|---|---|---|---|---|\n");
        for row in &report.integrals {
            let cells: Vec<String> = row.standard.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "| {} | {} | {} | {} |", row.n, cells.join(" | "), row.volume, row.f3_gamma);
        }
        out.push('\n');
    }
    if !report.checks.is_empty() {
        out.push_str("## Identities\n\n| id | n | method | η | lhs | rhs | abs err | rel err | σ | result |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &report.checks {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {:.3e} | {:.3e} | {} | {} |",
                r.id,
                r.n,
                r.method,
                r.eta,
                r.lhs,
                r.rhs,
                r.abs_err,
                r.rel_err,
                sigma_cell(r.sigma),
                verdict(r.pass)
            );
        }
        out.push('\n');
    }
    if !report.obstructions.is_empty() {
        out.push_str("## Obstruction\n\n| n | η | tr η³ | method | cubic | outer | crossed | total | expected | σ | result |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        for o in &report.obstructions {
            let expected = o.closed_total.as_ref().map_or_else(|| format!("{:.6e}", o.expected_total), |e| e.to_string());
            let mut result = verdict(o.pass).to_string();
            if let Some(note) = &o.note {
                let _ = write!(result, " ({note})");
            }
            let _ = writeln!(
                out,
                "| {} | {} | {:.6} | {} | {} | {} | {} | {} | {} | {} | {} |",
                o.n,
                o.eta,
                o.tr_eta3,
                o.method,
                o.term_cubic,
                o.term_outer,
                o.term_crossed,
                o.total,
                expected,
                sigma_cell(o.sigma),
                result
            );
        }
        out.push('\n');
    }
    if !report.remarks.is_empty() {
        out.push_str("## ½𝓘 coefficient against Koiso's constant\n\n| n | ours | Koiso | result |\n|---|---|---|---|\n");
        for r in &report.remarks {
            let _ = writeln!(out, "| {} | {} | {} | {} |", r.n, r.ours.coeff_string(), r.koiso.coeff_string(), verdict(r.pass));
        }
        out.push('\n');
    }
    if !report.fits.is_empty() {
        out.push_str("## total ∝ tr(η³)\n\n| n | η count | fitted | expected | rel err | result |\n|---|---|---|---|---|---|\n");
        for f in &report.fits {
            let _ = writeln!(
                out,
                "| {} | {} | {:.6e} ± {:.1e} | {:.6e} | {:.3e} | {} |",
                f.n,
                f.count,
                f.constant,
                f.sigma,
                f.expected,
                f.rel_err,
                verdict(f.pass)
            );
        }
        out.push('\n');
    }
    let s = &report.summary;
    let _ = writeln!(out, "**{} passed, {} failed of {}** in {:.2} s", s.passed, s.failed, s.total, report.wall_time);
    out
}

pub fn render(report: &RunReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => render_json(report),
        OutputFormat::Markdown => render_markdown(report),
    }
}

/// Writes the rendered report to `config.output_path` or returns it for stdout.
pub fn emit(report: &RunReport) -> Result<Option<String>, ReportError> {
    let text = render(report, report.config.output_format);
    match &report.config.output_path {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_lists() {
        assert_eq!(parse_n_list("1,3").unwrap(), vec![1, 3]);
        assert_eq!(parse_n_list("1..3").unwrap(), vec![1, 2, 3]);
        assert!(parse_n_list("x").is_err());
        assert!(parse_n_list("").is_err());
    }

    #[test]
    fn checks_all_expands() {
        assert_eq!(parse_checks("all").unwrap().len(), 10);
        assert_eq!(parse_checks("f3_closed,dhess_1").unwrap(), vec![IdentityId::Dhess1, IdentityId::F3Closed]);
        assert!(parse_checks("nope").is_err());
    }

    #[test]
    fn file_layers_and_precedence() {
        let file = ConfigLayer::parse_file("# run\nn = 2,3\nsamples = 500\neta = random:2\nmc_rel = 0.05\n").unwrap();
        let flags = ConfigLayer { samples: Some(7), ..ConfigLayer::default() };
        let cfg = RunConfig::resolve([file, flags]).unwrap();
        assert_eq!(cfg.n_list, vec![2, 3]);
        assert_eq!(cfg.samples, 7);
        assert_eq!(cfg.eta, EtaMode::Random(2));
        assert_eq!(cfg.tolerances.mc_rel, 0.05);
        assert!(ConfigLayer::parse_file("bogus = 1").is_err());
        assert!(ConfigLayer::parse_file("samples 3").is_err());
    }

    #[test]
    fn validation() {
        let bad = |layer: ConfigLayer| RunConfig::resolve([layer]).unwrap_err().exit_code();
        assert_eq!(bad(ConfigLayer { samples: Some(0), ..Default::default() }), 2);
        assert_eq!(bad(ConfigLayer { partitions: Some(0), ..Default::default() }), 2);
        assert_eq!(bad(ConfigLayer { n: Some(vec![0]), ..Default::default() }), 2);
        assert_eq!(bad(ConfigLayer { mc_sigma: Some(-1.0), ..Default::default() }), 2);
        let cfg = RunConfig::resolve([ConfigLayer { n_max: Some(3), ..Default::default() }]).unwrap();
        assert_eq!(cfg.n_list, vec![1, 2, 3]);
    }

    #[test]
    fn integrals_table() {
        let rows = cmd_integrals(2).unwrap();
        let strs: Vec<String> = rows[0].standard.iter().map(|v| v.to_string()).collect();
        assert_eq!(strs, ["1/4·π", "1/12·π", "1/12·π", "1/4·π"]);
        assert_eq!(rows[1].f3_gamma, ExactValue::from_ratio(-1, 10, 2));
        assert_eq!(cmd_integrals(0).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn obstruction_report_at_n1() {
        let cfg = RunConfig { n_list: vec![1], samples: 2000, ..RunConfig::default() };
        let report = cmd_obstruction(&cfg).unwrap();
        assert_eq!(report.exit_code(), 0);
        assert_eq!(report.obstructions[0].note.as_deref(), Some("unobstructed at second order (n=1)"));
        assert!(render_markdown(&report).contains("unobstructed at second order (n=1)"));
        let json: serde_json::Value = serde_json::from_str(&render_json(&report)).unwrap();
        assert_eq!(json["obstructions"][0]["total"]["coeff"], "0/1");
        assert_eq!(json["summary"]["failed"], 0);
    }
}

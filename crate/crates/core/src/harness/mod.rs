//! Experiment orchestration: TOML configs, replica-parallel runs, long-format
//! CSV with a JSON sidecar, and the enumeration oracle.
//!
//! Replica `r` always uses disorder stream `(seed, r)`, so results do not
//! depend on the worker count. Output files carry no wall-clock data and are
//! byte-identical across runs of the same config.

pub mod oracle;
pub mod stats;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::oracle::variance_oracle;
use crate::disorder::{calibrate, CriticalCoupling, DisorderSpec};
use crate::error::{out_of_range, Error, Result};
use crate::lattice::Truncation;
use crate::polymer::{FieldOptions, PolymerField};
use crate::renewal::{build_totals, discrete_variance_mass};
use crate::semimartingale::{decompose_field, density_on_zgrid, Mollifier, PeakMeasure, QvRenormalizer, ZGrid};
use crate::testfn::TestFunction;
use crate::walk::{ReturnProbabilities, StepDistribution};

pub use oracle::{brute_force_oracle, OracleReport, PatternEnv, TinyInstance, MAX_SITES};
pub use stats::{ols_slope, paired_greater, Summary, Welford};

pub const TOOL_NAME: &str = "shflab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    /// Per replica and step `k`: `Z_k`, `M_k`, `⟨M⟩_k` and the identity residual
    /// of the step ending at `k`.
    #[default]
    Simulate,
    /// Per replica and `ε`: renormalized QV against the exact `⟨M⟩_t`.
    QvScan,
    /// Per replica, `λ` and `ε`: peak-set statistics over `region × window`.
    Peaks,
    /// Per replica `Z_t`, plus the exact and continuum variances.
    Variance,
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::Simulate => "simulate",
            Operation::QvScan => "qv_scan",
            Operation::Peaks => "peaks",
            Operation::Variance => "variance",
        }
    }

    /// CSV columns after `replica`; the first [`Self::key_columns`] are parameters.
    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            Operation::Simulate => &["k", "z", "martingale", "qv", "residual"],
            Operation::QvScan => &["eps", "qv_renorm", "qv_exact", "abs_diff"],
            Operation::Peaks => &["lambda", "eps", "occupation", "area", "band_area"],
            Operation::Variance => &["zt"],
        }
    }

    pub fn key_columns(&self) -> usize {
        match self {
            Operation::Variance => 0,
            Operation::Simulate | Operation::QvScan => 1,
            Operation::Peaks => 2,
        }
    }
}

fn default_walk() -> String {
    "lazy:0.25".into()
}
fn default_psi() -> String {
    "const:1".into()
}
fn one() -> u64 {
    1
}
fn default_truncation() -> Truncation {
    Truncation::Relative(1e-14)
}
fn default_mollifier() -> String {
    "heat".into()
}

/// A run description. `threads` and `out_dir` are excluded from the digest
/// and from the serialized form, since they do not affect results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_walk")]
    pub walk: String,
    #[serde(rename = "N")]
    pub n_scale: u64,
    #[serde(default)]
    pub theta: f64,
    pub t: f64,
    pub phi: String,
    #[serde(default = "default_psi")]
    pub psi: String,
    #[serde(default = "one")]
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    /// `heat` or `bump:<radius>`.
    #[serde(default = "default_mollifier")]
    pub mollifier: String,
    /// Peak region `[x0, y0, x1, y1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<[f64; 4]>,
    /// Peak time window `[s, t]`; defaults to `[0, t]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub operation: Operation,
    #[serde(default = "default_truncation")]
    pub truncation: Truncation,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(operation: Operation, n_scale: u64, t: f64, phi: &str) -> Self {
        Self {
            walk: default_walk(),
            n_scale,
            theta: 0.0,
            t,
            phi: phi.into(),
            psi: default_psi(),
            replicas: 1,
            seed: 0,
            eps: Vec::new(),
            lambda: Vec::new(),
            mollifier: default_mollifier(),
            region: None,
            window: None,
            operation,
            truncation: default_truncation(),
            out_dir: None,
            threads: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Canonical JSON: fixed field order, shortest round-trip floats.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn steps(&self) -> usize {
        (self.n_scale as f64 * self.t).floor() as usize
    }

    /// Checks every field and resolves the specs.
    pub fn resolve(&self) -> Result<Resolved> {
        if self.replicas < 1 {
            return Err(out_of_range("replicas", self.replicas, ">= 1"));
        }
        if self.n_scale < 2 {
            return Err(out_of_range("N", self.n_scale, ">= 2"));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(out_of_range("t", self.t, "finite and > 0"));
        }
        if !self.theta.is_finite() {
            return Err(out_of_range("theta", self.theta, "finite"));
        }
        if self.threads == Some(0) {
            return Err(out_of_range("threads", 0, ">= 1"));
        }
        let walk = StepDistribution::from_spec(&self.walk)?;
        let phi = TestFunction::parse(&self.phi)?;
        let psi = TestFunction::parse(&self.psi)?;
        let mollifier = parse_mollifier(&self.mollifier)?;
        for &e in &self.eps {
            if !(e > 0.0 && e < 0.5) {
                return Err(out_of_range("eps", e, "(0, 1/2)"));
            }
        }
        for &l in &self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(out_of_range("lambda", l, "finite and > 0"));
            }
        }
        match self.operation {
            Operation::QvScan if self.eps.is_empty() => {
                return Err(Error::Config("qv_scan needs a nonempty eps list".into()))
            }
            Operation::Peaks => {
                if self.eps.is_empty() || self.lambda.is_empty() {
                    return Err(Error::Config("peaks needs nonempty eps and lambda lists".into()));
                }
                match self.region {
                    Some([x0, y0, x1, y1]) if x0 < x1 && y0 < y1 => {}
                    _ => return Err(Error::Config("peaks needs a region [x0, y0, x1, y1] with x0 < x1, y0 < y1".into())),
                }
            }
            Operation::Variance if psi.is_constant().is_none() => {
                return Err(Error::UnsupportedTestFunction("variance runs need a constant psi".into()))
            }
            _ => {}
        }
        let r_n = ReturnProbabilities::spectral(&walk, self.n_scale as usize).collision_mass(self.n_scale as usize)?;
        let coupling = calibrate(self.n_scale, self.theta, r_n)?;
        Ok(Resolved { walk, phi, psi, mollifier, coupling, steps: self.steps() })
    }
}

/// `heat` or `bump:<radius>`.
pub fn parse_mollifier(spec: &str) -> Result<Mollifier> {
    let spec = spec.trim();
    if spec == "heat" {
        return Ok(Mollifier::Heat);
    }
    if let Some(r) = spec.strip_prefix("bump:") {
        let radius: f64 = r.parse().map_err(|_| Error::Config(format!("bad mollifier {spec:?}")))?;
        if radius > 0.0 {
            return Ok(Mollifier::Bump { radius });
        }
    }
    Err(Error::Config(format!("bad mollifier {spec:?}")))
}

/// Parsed objects of a validated config.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub walk: StepDistribution,
    pub phi: TestFunction,
    pub psi: TestFunction,
    pub mollifier: Mollifier,
    pub coupling: CriticalCoupling,
    pub steps: usize,
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub replica: u64,
    pub values: Vec<f64>,
}

/// Aggregate of one value column within one parameter cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub key: Vec<f64>,
    pub column: String,
    pub summary: Summary,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub digest: String,
    pub coupling: CriticalCoupling,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    /// Operation-specific summary (exact and continuum variances).
    pub extra: Option<serde_json::Value>,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn columns(&self) -> &'static [&'static str] {
        self.config.operation.columns()
    }

    /// Values of `column` in row order, optionally restricted to a key cell.
    pub fn column(&self, name: &str, key: Option<&[f64]>) -> Vec<f64> {
        let cols = self.columns();
        let k = self.config.operation.key_columns();
        let Some(i) = cols.iter().position(|c| *c == name) else { return Vec::new() };
        self.rows
            .iter()
            .filter(|r| key.map_or(true, |key| r.values[..k] == *key))
            .map(|r| r.values[i])
            .collect()
    }

    pub fn aggregate(&self, name: &str, key: &[f64]) -> Option<&Summary> {
        self.aggregates.iter().find(|a| a.column == name && a.key == key).map(|a| &a.summary)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("replica");
        for c in self.columns() {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}", r.replica);
            for v in &r.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "operation": self.config.operation.name(),
            "config": self.config,
            "config_digest": self.digest,
            "coupling": self.coupling,
            "columns": std::iter::once("replica").chain(self.columns().iter().copied()).collect::<Vec<_>>(),
            "aggregates": self.aggregates,
            "summary": self.extra,
        })
    }

    /// Writes `<operation>.csv` and `<operation>.json` into `dir`, each via a
    /// temporary file and a rename.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let name = self.config.operation.name();
        let csv = dir.join(format!("{name}.csv"));
        let json = dir.join(format!("{name}.json"));
        write_atomic(&csv, self.csv().as_bytes())?;
        let mut meta = serde_json::to_string_pretty(&self.metadata())?;
        meta.push('\n');
        write_atomic(&json, meta.as_bytes())?;
        Ok((csv, json))
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = path.file_name().and_then(|f| f.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{file}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn field_options(config: &ExperimentConfig) -> FieldOptions {
    FieldOptions { window: None, truncation: config.truncation }
}

fn new_field(config: &ExperimentConfig, res: &Resolved, replica: u64) -> Result<PolymerField<DisorderSpec>> {
    let env = DisorderSpec::new(config.seed, replica, res.coupling.beta);
    PolymerField::new(&res.phi, config.n_scale, &res.walk, res.coupling, env, &field_options(config))
}

/// Rows of one replica.
pub fn run_replica(config: &ExperimentConfig, res: &Resolved, replica: u64) -> Result<Vec<Vec<f64>>> {
    let mut field = new_field(config, res, replica)?;
    let psis = std::slice::from_ref(&res.psi);
    match config.operation {
        Operation::Simulate => {
            let tr = decompose_field(&mut field, psis, res.steps, None)?.remove(0);
            let m = tr.martingale();
            Ok((0..=tr.steps)
                .map(|k| {
                    let res = if k == 0 { 0.0 } else { tr.residual[k - 1] };
                    vec![k as f64, tr.z[k], m[k], tr.qv[k], res]
                })
                .collect())
        }
        Operation::Variance => {
            for _ in 0..res.steps {
                field.step()?;
            }
            Ok(vec![vec![field.pair(&res.psi)]])
        }
        Operation::QvScan => {
            let c = res.walk.cov_scale();
            let mut ren = QvRenormalizer::new(&config.eps, &res.psi, config.n_scale, c, 1.0)?;
            let mut obs = |f: &PolymerField<DisorderSpec>| ren.observe(f.wbar());
            let tr = decompose_field(&mut field, psis, res.steps, Some(&mut obs))?.remove(0);
            let exact = tr.qv_final();
            Ok(ren.values().into_iter().map(|(e, v)| vec![e, v, exact, (v - exact).abs()]).collect())
        }
        Operation::Peaks => {
            let [x0, y0, x1, y1] = config.region.expect("validated");
            let [s, t] = config.window.unwrap_or([0.0, config.t]);
            let nf = config.n_scale as f64;
            let grids: Vec<ZGrid> = config.eps.iter().map(|e| ZGrid::cells([x0, y0], [x1, y1], e.sqrt() / 4.0)).collect();
            let mut acc = vec![PeakMeasure::default(); config.eps.len() * config.lambda.len()];
            for k in 1..=res.steps {
                field.step()?;
                let u = k as f64 / nf;
                if u < s || u > t {
                    continue;
                }
                for (i, (&e, zg)) in config.eps.iter().zip(&grids).enumerate() {
                    let d = density_on_zgrid(field.wbar(), config.n_scale, e, &res.mollifier, zg)?;
                    for (j, &l) in config.lambda.iter().enumerate() {
                        acc[j * config.eps.len() + i].add_slice(&d, l, e, 1.0 / nf);
                    }
                }
            }
            let mut rows = Vec::with_capacity(acc.len());
            for (j, &l) in config.lambda.iter().enumerate() {
                for (i, &e) in config.eps.iter().enumerate() {
                    let p = acc[j * config.eps.len() + i];
                    rows.push(vec![l, e, p.occupation, p.area, p.band_area]);
                }
            }
            Ok(rows)
        }
    }
}

fn aggregates(op: Operation, rows: &[Row]) -> Vec<Aggregate> {
    let k = op.key_columns();
    let mut keys: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        if !keys.iter().any(|key| key[..] == r.values[..k]) {
            keys.push(r.values[..k].to_vec());
        }
    }
    let mut out = Vec::new();
    for key in keys {
        let cell: Vec<&Row> = rows.iter().filter(|r| r.values[..k] == key[..]).collect();
        for (i, name) in op.columns().iter().enumerate().skip(k) {
            let xs: Vec<f64> = cell.iter().map(|r| r.values[i]).collect();
            out.push(Aggregate { key: key.clone(), column: (*name).into(), summary: Summary::stable(&xs) });
        }
    }
    out
}

fn variance_summary(config: &ExperimentConfig, res: &Resolved, rows: &[Row]) -> Result<serde_json::Value> {
    let n = res.steps.max(1);
    let q = ReturnProbabilities::spectral(&res.walk, n);
    let table = build_totals(&res.coupling, &q, n)?;
    let exact = discrete_variance_mass(&res.phi, &res.psi, config.n_scale, config.t, &table, &res.walk, &field_options(config))?;
    let k = res.psi.is_constant().expect("validated");
    let oracle = variance_oracle(&res.phi, config.t, config.theta, res.walk.cov_scale()).ok().map(|v| k * k * v);
    let zs: Vec<f64> = rows.iter().map(|r| r.values[0]).collect();
    let s = Summary::stable(&zs);
    Ok(serde_json::json!({
        "exact_dp": exact,
        "mc_mean": s.mean,
        "mc_var": s.var,
        "se": s.se,
        "mc_var_se": s.var_se,
        "oracle_continuum": oracle,
    }))
}

/// Runs every replica, aggregates, and writes outputs when `out_dir` is set.
pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    let started = Instant::now();
    let res = config.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let per: Vec<Result<Vec<Vec<f64>>>> =
        pool.install(|| (0..config.replicas).into_par_iter().map(|r| run_replica(config, &res, r)).collect());
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (r, out) in per.into_iter().enumerate() {
        match out {
            Ok(vals) => rows.extend(vals.into_iter().map(|values| Row { replica: r as u64, values })),
            Err(e) => failed.push((r as u64, e.to_string())),
        }
    }
    if !failed.is_empty() {
        return Err(Error::ReplicaFailures(failed));
    }
    let aggregates = aggregates(config.operation, &rows);
    let extra = match config.operation {
        Operation::Variance => Some(variance_summary(config, &res, &rows)?),
        _ => None,
    };
    let result = RunResult {
        config: config.clone(),
        digest: config.digest(),
        coupling: res.coupling,
        rows,
        aggregates,
        extra,
        wall_time: started.elapsed(),
    };
    if let Some(dir) = &config.out_dir {
        result.write(dir)?;
    }
    Ok(result)
}

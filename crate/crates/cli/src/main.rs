//! `shflab` command-line front end.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::{parse_grid, FileConfig};
use shflab::analytics::oracle::{first_moment_oracle, variance_oracle};
use shflab::analytics::special::{f_s, g_theta, FsMarch, GEnvelope, MARCH_STEP};
use shflab::disorder::{calibrate, critical_sigma2, NoDisorder};
use shflab::harness::{paired_greater, run, write_atomic, ExperimentConfig, Operation, RunResult};
use shflab::polymer::{FieldOptions, PolymerField};
use shflab::renewal::{compare_to_g, RenewalTable};
use shflab::testfn::TestFunction;
use shflab::walk::{build_kernel_table, llt_deviation, ReturnProbabilities, StepDistribution};

#[derive(Parser)]
#[command(name = "shflab", version, about = "Critical 2d directed polymer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical coupling for a walk at scale N, as one JSON object.
    Calibrate(CalibrateArgs),
    /// Return probabilities, collision mass and local-limit deviations.
    Kernel(KernelArgs),
    /// Per-step semimartingale series of Z_k(phi, psi).
    Simulate(RunArgs),
    /// Renewal function U_N(n) against its G_theta prediction.
    Renewal(RenewalArgs),
    /// Monte Carlo, exact and continuum variance of Z_t(phi, 1).
    Variance(RunArgs),
    /// Renormalized quadratic variation against the exact bracket.
    QvScan(RunArgs),
    /// Peak-set statistics of the mollified density.
    Peaks(RunArgs),
    /// Tabulation of f_1, G_theta and its envelope.
    Specialfn(SpecialfnArgs),
    /// Continuum first moment and variance for a centred Gaussian start.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct Common {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit with status 2 if the command's consistency checks fail.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "N")]
    n: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// `default`, `lazy:<rho>` or a walk TOML file.
    #[arg(long)]
    walk: Option<String>,
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    walk: Option<String>,
    #[arg(long)]
    nmax: Option<usize>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenewalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "N")]
    n: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long)]
    walk: Option<String>,
    /// Largest n tabulated; at least N.
    #[arg(long)]
    nmax: Option<usize>,
    /// Bound on the maximal relative error over n/N in [0.1, 1] for `--check`.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "N")]
    n: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    walk: Option<String>,
    /// Initial test function, e.g. `bump:0,0,0.5`.
    #[arg(long)]
    phi: Option<String>,
    /// Pairing test function, e.g. `const:1`.
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long = "eps-list", value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long = "lambda-list", value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// `heat` or `bump:<radius>`.
    #[arg(long)]
    mollifier: Option<String>,
    /// `x0,y0,x1,y1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    region: Option<Vec<f64>>,
    /// `s,t`: the time window of the peak statistics.
    #[arg(long, value_delimiter = ',')]
    window: Option<Vec<f64>>,
    /// Output directory (a JSON file for `variance`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpecialfnArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// `a,b,c` or `lo:hi:n` (log-spaced).
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    /// Variance of the centred Gaussian start `gauss:0,0,a`.
    #[arg(long)]
    a: Option<f64>,
    /// Covariance scale of the limiting heat kernel.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Named consistency checks of one command.
#[derive(Default)]
struct Checks(Vec<(String, bool)>);

impl Checks {
    fn add(&mut self, name: impl Into<String>, ok: bool) {
        self.0.push((name.into(), ok));
    }

    fn report(&self) -> bool {
        for (name, ok) in &self.0 {
            eprintln!("[{}] {name}", if *ok { "PASS" } else { "FAIL" });
        }
        self.0.iter().all(|c| c.1)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn cmd_calibrate(a: CalibrateArgs, checks: &mut Checks) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.only(&["N", "theta", "walk"])?;
    let n: u64 = cfg.require(a.n, "N")?;
    let theta = cfg.or(a.theta, "theta", 0.0)?;
    let walk = StepDistribution::from_spec(&cfg.or(a.walk, "walk", "lazy:0.25".to_string())?)?;
    let r_n = ReturnProbabilities::spectral(&walk, n as usize).collision_mass(n as usize)?;
    let c = calibrate(n, theta, r_n)?;
    checks.add("0 < sigma2 < 1", c.sigma2 > 0.0 && c.sigma2 < 1.0);
    checks.add("tanh(beta_N)^2 = sigma2", (c.beta.tanh().powi(2) - c.sigma2).abs() <= 1e-12 * c.sigma2);
    println!("{}", serde_json::to_string(&c)?);
    Ok(())
}

fn cmd_kernel(a: KernelArgs, checks: &mut Checks) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.only(&["walk", "nmax"])?;
    let walk = StepDistribution::from_spec(&cfg.or(a.walk, "walk", "default".to_string())?)?;
    let nmax: usize = cfg.or(a.nmax, "nmax", 64)?;
    if nmax < 1 {
        bail!("nmax must be >= 1");
    }
    let table = build_kernel_table(&walk, nmax)?;
    let ret = ReturnProbabilities::spectral(&walk, nmax);
    let mut csv = String::from("n,q_n0,R_n,llt_deviation\n");
    let (mut mass_err, mut square_err) = (0.0f64, 0.0f64);
    let mut aperiodic = true;
    for n in 1..=nmax {
        let slice = table.slice(n).context("kernel slice")?;
        let q0 = slice.get([0, 0]);
        mass_err = mass_err.max((slice.sum() - 1.0).abs());
        // Σ_x q_n(x)² against the origin of slice 2n and the spectral route.
        let sq = table.return_probability(n).context("kernel slice")?;
        square_err = square_err.max((sq - ret.get(n)).abs());
        if let Some(q2) = table.q(2 * n, [0, 0]) {
            square_err = square_err.max((sq - q2).abs());
        }
        aperiodic &= n < 2 || q0 > 0.0;
        csv.push_str(&format!("{n},{q0},{},{}\n", ret.collision_mass(n)?, llt_deviation(&table, n)?));
    }
    checks.add(format!("slice masses equal 1 (worst {mass_err:.1e})"), mass_err <= 1e-12);
    checks.add(format!("sum of squares equals q_2n(0) (worst {square_err:.1e})"), square_err <= 1e-12);
    checks.add("q_n(0) > 0 for n >= 2", aperiodic);
    emit(a.out.as_deref(), &csv)
}

fn cmd_renewal(a: RenewalArgs, checks: &mut Checks) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.only(&["N", "theta", "walk", "nmax", "tol"])?;
    let n: u64 = cfg.require(a.n, "N")?;
    let theta = cfg.or(a.theta, "theta", 0.0)?;
    let walk = StepDistribution::from_spec(&cfg.or(a.walk, "walk", "lazy:0.25".to_string())?)?;
    let nmax: usize = cfg.or(a.nmax, "nmax", n as usize)?;
    let tol = cfg.or(a.tol, "tol", 0.10)?;
    if nmax < n as usize {
        bail!("nmax = {nmax} must be at least N = {n}");
    }
    let q = ReturnProbabilities::spectral(&walk, nmax);
    // Only σ² enters the recursion, so walks with R_N < 1 are allowed here.
    let sigma2 = critical_sigma2(n, theta, q.collision_mass(n as usize)?);
    let table = RenewalTable::totals(sigma2, &q, nmax)?;
    let cmp = compare_to_g(&table, n, theta)?;
    let mut csv = String::from("n,U_N,G_prediction,rel_err\n");
    for r in &cmp.rows {
        csv.push_str(&format!("{},{},{},{}\n", r.n, r.u, r.prediction, r.rel_err));
    }
    checks.add("U_N(n) > 0", cmp.rows.iter().all(|r| r.u > 0.0));
    checks.add(format!("max rel err over n/N in [0.1,1] = {:.4} < {tol}", cmp.max_rel_err), cmp.max_rel_err < tol);
    emit(a.out.as_deref(), &csv)
}

const RUN_KEYS: &[&str] = &[
    "walk", "N", "theta", "t", "phi", "psi", "replicas", "seed", "eps", "lambda", "mollifier", "region", "window",
    "truncation", "threads",
];

fn experiment(a: &RunArgs, op: Operation) -> Result<ExperimentConfig> {
    let mut table = match &a.common.config {
        Some(p) => std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))?
            .parse::<toml::Table>()
            .with_context(|| format!("parsing {}", p.display()))?,
        None => toml::Table::new(),
    };
    for k in table.keys() {
        if !RUN_KEYS.contains(&k.as_str()) {
            bail!("unknown config key {k:?}; expected one of {RUN_KEYS:?}");
        }
    }
    let mut set = |k: &str, v: toml::Value| {
        table.insert(k.into(), v);
    };
    let list = |v: &[f64]| toml::Value::Array(v.iter().map(|x| toml::Value::Float(*x)).collect());
    if let Some(v) = a.n {
        set("N", toml::Value::Integer(v as i64));
    }
    if let Some(v) = a.theta {
        set("theta", toml::Value::Float(v));
    }
    if let Some(v) = a.t {
        set("t", toml::Value::Float(v));
    }
    for (k, v) in [("walk", &a.walk), ("phi", &a.phi), ("psi", &a.psi), ("mollifier", &a.mollifier)] {
        if let Some(v) = v {
            set(k, toml::Value::String(v.clone()));
        }
    }
    if let Some(v) = a.replicas {
        set("replicas", toml::Value::Integer(v as i64));
    }
    if let Some(v) = a.seed {
        set("seed", toml::Value::Integer(v as i64));
    }
    if let Some(v) = a.threads {
        set("threads", toml::Value::Integer(v as i64));
    }
    for (k, v) in [("eps", &a.eps), ("lambda", &a.lambda), ("region", &a.region), ("window", &a.window)] {
        if let Some(v) = v {
            set(k, list(v));
        }
    }
    table.insert("operation".into(), toml::Value::String(op.name().into()));
    let c: ExperimentConfig = toml::Value::Table(table).try_into().context("invalid run configuration")?;
    Ok(c)
}

fn run_summary(r: &RunResult, files: Option<(PathBuf, PathBuf)>) -> Value {
    json!({
        "operation": r.config.operation.name(),
        "config_digest": r.digest,
        "coupling": r.coupling,
        "rows": r.rows.len(),
        "files": files.map(|(c, j)| [c, j]),
    })
}

fn cmd_run(a: RunArgs, op: Operation, checks: &mut Checks) -> Result<()> {
    let mut c = experiment(&a, op)?;
    if op != Operation::Variance {
        c.out_dir = a.out.clone();
    }
    let r = run(&c)?;
    let files = c.out_dir.as_ref().map(|d| {
        let name = op.name();
        (d.join(format!("{name}.csv")), d.join(format!("{name}.json")))
    });
    match op {
        Operation::Simulate => {
            let worst = r.column("residual", None).into_iter().fold(0.0, |m: f64, x| m.max(x.abs()));
            checks.add(format!("identity residual {worst:.1e} <= 1e-10"), worst <= 1e-10);
            let last = [c.steps() as f64];
            if let Some(s) = r.aggregate("martingale", &last) {
                if s.n > 1 {
                    checks.add(format!("mean M_t = {:.3e} within 3 SE ({:.3e})", s.mean, s.se), s.mean_within(0.0, 3.0));
                }
            }
            print!("{}", pretty(&run_summary(&r, files)));
        }
        Operation::Variance => {
            let res = c.resolve()?;
            let f = PolymerField::new(
                &res.phi,
                c.n_scale,
                &res.walk,
                res.coupling,
                NoDisorder,
                &FieldOptions { window: None, truncation: c.truncation },
            )?;
            let z0 = f.pair(&res.psi);
            let extra = r.extra.clone().context("variance summary")?;
            let get = |k: &str| extra[k].as_f64().unwrap_or(f64::NAN);
            if c.replicas > 3 {
                let (mean, se, var, dp, var_se) = (get("mc_mean"), get("se"), get("mc_var"), get("exact_dp"), get("mc_var_se"));
                checks.add(format!("mc_mean {mean:.4} within 3 SE of Z_0 = {z0:.4}"), (mean - z0).abs() <= 3.0 * se);
                checks.add(format!("mc_var {var:.4} within 3 SE of exact_dp {dp:.4}"), (var - dp).abs() <= 3.0 * var_se);
            }
            let mut out = extra;
            out["z0"] = json!(z0);
            out["tool"] = json!(shflab::harness::TOOL_NAME);
            out["version"] = json!(shflab::harness::TOOL_VERSION);
            out["config"] = serde_json::to_value(&c)?;
            out["config_digest"] = json!(r.digest);
            out["coupling"] = serde_json::to_value(r.coupling)?;
            emit(a.out.as_deref(), &pretty(&out))?;
        }
        Operation::QvScan => {
            let mut eps = c.eps.clone();
            eps.sort_by(|x, y| y.total_cmp(x));
            if c.replicas > 1 {
                for w in eps.windows(2) {
                    let (ok, s) = paired_greater(&r.column("abs_diff", Some(&[w[0]])), &r.column("abs_diff", Some(&[w[1]])), 3.0);
                    checks.add(format!("abs_diff decreases from eps {} to {} ({:.1} SE)", w[0], w[1], s.mean / s.se), ok);
                }
            }
            print!("{}", pretty(&run_summary(&r, files)));
        }
        Operation::Peaks => {
            let mut eps = c.eps.clone();
            eps.sort_by(|x, y| y.total_cmp(x));
            if c.replicas > 1 {
                for &l in &c.lambda {
                    for w in eps.windows(2) {
                        let (up, _) = paired_greater(
                            &r.column("occupation", Some(&[l, w[1]])),
                            &r.column("occupation", Some(&[l, w[0]])),
                            3.0,
                        );
                        checks.add(format!("lambda {l}: occupation does not grow from eps {} to {}", w[0], w[1]), !up);
                    }
                }
            }
            print!("{}", pretty(&run_summary(&r, files)));
        }
    }
    Ok(())
}

fn cmd_specialfn(a: SpecialfnArgs, checks: &mut Checks) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.only(&["theta", "t_grid"])?;
    let theta = cfg.or(a.theta, "theta", 0.0)?;
    let grid = parse_grid(&cfg.or(a.t_grid, "t_grid", "1e-6:2:49".to_string())?)?;
    if grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        bail!("t grid values must be finite and > 0");
    }
    let t_max = grid.iter().copied().fold(1.0, f64::max);
    let env = GEnvelope::fit(theta, t_max)?;
    let march = FsMarch::new(1.0, t_max)?;
    let mut csv = String::from("t,f_1,G_theta,G_hat,asymptotic_ratio\n");
    let mut positive = true;
    let mut below = true;
    for &t in &grid {
        let g = g_theta(theta, t)?;
        let l = (1.0 / t).ln();
        let f1 = march.eval(t)?;
        positive &= f1 > 0.0 && g > 0.0;
        below &= g <= env.eval(t);
        csv.push_str(&format!("{t},{f1},{g},{},{}\n", env.eval(t), t * l * l * g));
    }
    checks.add("f_1 and G_theta positive on the grid", positive);
    checks.add("G_theta below its envelope", below);
    let at_one = f_s(1.0, 1.0)?;
    let jump = (march.eval(1.0 + MARCH_STEP)? - at_one).abs();
    checks.add(format!("f_1 continuous at t = 1 (one-step change {jump:.1e})"), jump <= 4.0 * MARCH_STEP * at_one);
    emit(a.out.as_deref(), &csv)
}

fn cmd_oracle(a: OracleArgs, checks: &mut Checks) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.only(&["theta", "t", "a", "c"])?;
    let theta = cfg.or(a.theta, "theta", 0.0)?;
    let t: f64 = cfg.require(a.t, "t")?;
    let var: f64 = cfg.require(a.a, "a")?;
    let c = cfg.or(a.c, "c", 1.0)?;
    if !(var > 0.0 && t > 0.0 && c > 0.0) {
        bail!("t, a and c must be > 0");
    }
    let phi = TestFunction::gaussian([0.0, 0.0], var);
    let one = TestFunction::constant(1.0);
    let mass = first_moment_oracle(&phi, &one, t, c)?;
    let self_pairing = first_moment_oracle(&phi, &phi, t, c)?;
    let variance = variance_oracle(&phi, t, theta, c)?;
    checks.add("first moment against 1 equals the mass of phi", (mass - 1.0).abs() <= 1e-12);
    checks.add("variance is finite and positive", variance.is_finite() && variance > 0.0);
    let out = json!({
        "theta": theta,
        "t": t,
        "a": var,
        "c": c,
        "phi": phi.to_string(),
        "first_moment_psi_one": mass,
        "first_moment_psi_phi": self_pairing,
        "variance_psi_one": variance,
        "tool": shflab::harness::TOOL_NAME,
        "version": shflab::harness::TOOL_VERSION,
    });
    emit(a.out.as_deref(), &pretty(&out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut checks = Checks::default();
    let check = match &cli.command {
        Command::Calibrate(a) => a.common.check,
        Command::Kernel(a) => a.common.check,
        Command::Renewal(a) => a.common.check,
        Command::Simulate(a) | Command::Variance(a) | Command::QvScan(a) | Command::Peaks(a) => a.common.check,
        Command::Specialfn(a) => a.common.check,
        Command::Oracle(a) => a.common.check,
    };
    let result = match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a, &mut checks),
        Command::Kernel(a) => cmd_kernel(a, &mut checks),
        Command::Simulate(a) => cmd_run(a, Operation::Simulate, &mut checks),
        Command::Renewal(a) => cmd_renewal(a, &mut checks),
        Command::Variance(a) => cmd_run(a, Operation::Variance, &mut checks),
        Command::QvScan(a) => cmd_run(a, Operation::QvScan, &mut checks),
        Command::Peaks(a) => cmd_run(a, Operation::Peaks, &mut checks),
        Command::Specialfn(a) => cmd_specialfn(a, &mut checks),
        Command::Oracle(a) => cmd_oracle(a, &mut checks),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    if check && !checks.report() {
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

//! Scenario runner: configuration parsing, experiment dispatch and result
//! emission.
//!
//! Configuration is flat `key = value` text with dotted keys. Command-line
//! flags override it: the named flags below, any `--dotted.key value`, and
//! bare `key=value` arguments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::busemann::{busemann_scenario, linear_grid, verify_laplacian_comparison};
use crate::congruence::raychaudhuri_scenario;
use crate::connection::berwald_audit;
use crate::curvature::{require_admissible, NEff};
use crate::error::{Error, Result};
use crate::legendre::legendre_suite;
use crate::model::{
    audit_model, build_model, build_weight, model_summaries, parse_real, SpacetimeModel,
};
use crate::report::{write_atomic, CheckRecord, ScenarioReport, Table};
use crate::sampling;
use crate::splitting::splitting_certificate;

pub const EXPERIMENTS: [&str; 7] = [
    "audit",
    "berwald",
    "raychaudhuri",
    "laplacian-comparison",
    "busemann",
    "splitting",
    "legendre-roundtrip",
];

/// Keys understood besides `model.<param>` and `tol.<check>`.
const KEYS: [&str; 16] = [
    "model.name",
    "model.dim",
    "weight.name",
    "weight.a",
    "experiment",
    "N",
    "eps",
    "seed",
    "samples",
    "directions",
    "ray.t0",
    "grid.t_min",
    "grid.t_max",
    "grid.points",
    "out.dir",
    "threads",
];

#[derive(Parser, Debug)]
#[command(
    name = "lfslab",
    version,
    about = "Numerical checks of weighted Lorentz-Finsler comparison geometry"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one experiment and write report.txt, report.json and CSVs.
    Run(RunArgs),
    /// List the built-in models.
    List,
    /// Print a model's Lagrangian, cone and known facts.
    Describe {
        name: String,
        #[arg(long, default_value_t = 4)]
        dim: usize,
    },
}

#[derive(clap::Args, Debug, Default)]
pub struct RunArgs {
    /// Flat dotted key-value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub experiment: Option<String>,
    #[arg(long = "N", allow_hyphen_values = true)]
    pub n_eff: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Further `key=value` overrides.
    #[arg(allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

impl Error {
    /// Process exit status for a failed run.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Parameter(_)
            | Error::Scope(_)
            | Error::ModelValidity { .. } => 2,
            _ => 3,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got '{raw}'", i + 1))
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Rewrites `--dotted.key value` / `--dotted.key=value` into `key=value`
/// positionals so clap only sees the fixed flags.
pub fn normalize_args(args: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(a) = it.next() {
        match a.strip_prefix("--") {
            Some(rest) if rest.contains('.') => {
                if rest.contains('=') {
                    out.push(rest.to_string());
                } else if let Some(v) = it.next() {
                    out.push(format!("{rest}={v}"));
                } else {
                    out.push(rest.to_string());
                }
            }
            _ => out.push(a),
        }
    }
    out
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub raw: BTreeMap<String, String>,
    pub model: String,
    pub dim: usize,
    pub model_params: BTreeMap<String, String>,
    pub experiment: String,
    pub n_eff: String,
    pub epsilon: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub tolerances: BTreeMap<String, f64>,
}

impl ScenarioConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let mut raw = match &args.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                raw.insert(k.to_string(), v);
            }
        };
        set("model.name", args.model.clone());
        set("model.dim", args.dim.map(|d| d.to_string()));
        set("experiment", args.experiment.clone());
        set("N", args.n_eff.clone());
        set("eps", args.eps.clone());
        set("seed", args.seed.map(|s| s.to_string()));
        set(
            "out.dir",
            args.out.as_ref().map(|p| p.display().to_string()),
        );
        for o in &args.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| {
                Error::Config(format!("override '{o}' is not of the form key=value"))
            })?;
            raw.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(raw)
    }

    pub fn from_map(raw: BTreeMap<String, String>) -> Result<Self> {
        let mut model_params = BTreeMap::new();
        let mut tolerances = BTreeMap::new();
        for (k, v) in &raw {
            if let Some(t) = k.strip_prefix("tol.") {
                let x = parse_real(v)
                    .ok_or_else(|| Error::Config(format!("{k}: cannot parse '{v}'")))?;
                if !(x > 0.0) {
                    return Err(Error::Config(format!("{k} must be > 0, got {v}")));
                }
                tolerances.insert(t.to_string(), x);
            } else if let Some(p) = k.strip_prefix("model.") {
                if p != "name" && p != "dim" {
                    model_params.insert(p.to_string(), v.clone());
                }
            } else if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown config key '{k}'")));
            }
        }
        let experiment = raw
            .get("experiment")
            .cloned()
            .ok_or_else(|| Error::Config("missing key 'experiment'".into()))?;
        if !EXPERIMENTS.contains(&experiment.as_str()) {
            return Err(Error::Config(format!(
                "unknown experiment '{experiment}' (known: {})",
                EXPERIMENTS.join(", ")
            )));
        }
        let dim = match raw.get("model.dim") {
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("model.dim: cannot parse '{s}'")))?,
            None => 4,
        };
        let epsilon = match raw.get("eps") {
            Some(s) => {
                parse_real(s).ok_or_else(|| Error::Config(format!("eps: cannot parse '{s}'")))?
            }
            None => 0.0,
        };
        let seed = match raw.get("seed") {
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("seed: cannot parse '{s}'")))?,
            None => 1,
        };
        Ok(ScenarioConfig {
            model: raw
                .get("model.name")
                .cloned()
                .unwrap_or_else(|| "minkowski".into()),
            dim,
            model_params,
            experiment,
            n_eff: raw.get("N").cloned().unwrap_or_else(|| "inf".into()),
            epsilon,
            seed,
            out_dir: PathBuf::from(
                raw.get("out.dir")
                    .cloned()
                    .unwrap_or_else(|| "lfslab-out".into()),
            ),
            tolerances,
            raw,
        })
    }

    fn real(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw.get(key) {
            Some(s) => {
                parse_real(s).ok_or_else(|| Error::Config(format!("{key}: cannot parse '{s}'")))
            }
            None => Ok(default),
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw.get(key) {
            Some(s) => s.parse().ok().filter(|&k| k > 0).ok_or_else(|| {
                Error::Config(format!("{key}: expected a positive integer, got '{s}'"))
            }),
            None => Ok(default),
        }
    }

    pub fn build_model(&self) -> Result<SpacetimeModel> {
        let mut m = build_model(&self.model, self.dim, &self.model_params)?;
        if let Some(w) = self.raw.get("weight.name") {
            m = m.with_weight(build_weight(w, self.real("weight.a", 0.0)?)?);
        } else if self.raw.contains_key("weight.a") {
            return Err(Error::Config("weight.a given without weight.name".into()));
        }
        Ok(m)
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ScenarioReport,
    pub tables: Vec<(String, Table)>,
    pub extra: Vec<(String, String)>,
}

/// Executes the configured experiment; no files are written.
pub fn execute(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let started = Instant::now();
    let m = cfg.build_model()?;
    let n = m.n();
    let seed = cfg.seed;
    let mut tables = Vec::new();
    let mut extra = Vec::new();
    let needs_n = matches!(
        cfg.experiment.as_str(),
        "raychaudhuri" | "laplacian-comparison"
    );
    let n_eff = if needs_n {
        let ne = NEff::parse(&cfg.n_eff, n)?;
        require_admissible(ne.value(n), cfg.epsilon, n)?;
        Some(ne)
    } else {
        None
    };
    let mut report = match cfg.experiment.as_str() {
        "audit" => audit_model(&m, cfg.count("samples", 10_000)?, seed),
        "berwald" => {
            let mut r = sampling::rng(seed);
            let xs: Vec<Vec<f64>> = (0..cfg.count("samples", 16)?)
                .map(|_| sampling::box_point(&mut r, m.dim, m.audit_box))
                .collect();
            berwald_audit(&m, &xs, cfg.count("directions", 8)?, seed)
        }
        "raychaudhuri" => {
            let (rep, t) = raychaudhuri_scenario(
                &m,
                n_eff.unwrap(),
                cfg.epsilon,
                cfg.real("grid.t_max", 5.0)?,
                cfg.count("grid.points", 50)?,
            )?;
            tables.push(("raychaudhuri.csv".to_string(), t));
            rep
        }
        "laplacian-comparison" => {
            let z = vec![0.0; m.dim];
            let v = m.orientation(&z);
            let grid = linear_grid(
                cfg.real("grid.t_min", 0.5)?,
                cfg.real("grid.t_max", 5.0)?,
                cfg.count("grid.points", 10)?,
            );
            if grid.iter().any(|&t| !(t > 0.0)) {
                return Err(Error::Config("grid.t_min must be > 0".into()));
            }
            let (rep, t) =
                verify_laplacian_comparison(&m, &z, &v, n_eff.unwrap(), cfg.epsilon, &grid)?;
            tables.push(("laplacian_comparison.csv".to_string(), t));
            rep
        }
        "busemann" => {
            let (rep, t) = busemann_scenario(
                &m,
                cfg.count("samples", 16)?,
                seed,
                cfg.real("ray.t0", 1e3)?,
            )?;
            tables.push(("busemann.csv".to_string(), t));
            rep
        }
        "splitting" => {
            let (cert, t) = splitting_certificate(&m, cfg.count("samples", 8)?, seed)?;
            tables.push(("splitting.csv".to_string(), t));
            extra.push(("certificate.json".to_string(), cert.to_json()));
            let mut rep = cert.report();
            rep.config.insert("seed".into(), seed.to_string());
            rep
        }
        "legendre-roundtrip" => legendre_suite(&m, cfg.count("samples", 24)?, seed),
        other => return Err(Error::Config(format!("unknown experiment '{other}'"))),
    };
    apply_tolerances(&mut report, &cfg.tolerances)?;
    for (k, v) in &cfg.raw {
        report
            .config
            .entry(format!("input.{k}"))
            .or_insert_with(|| v.clone());
    }
    report.wall_clock_s = started.elapsed().as_secs_f64();
    Ok(RunOutput {
        report,
        tables,
        extra,
    })
}

/// Re-judges checks named by `tol.<check>` against the overriding tolerance.
pub fn apply_tolerances(report: &mut ScenarioReport, tols: &BTreeMap<String, f64>) -> Result<()> {
    for (name, &tol) in tols {
        let c = report
            .checks
            .iter_mut()
            .find(|c| &c.name == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "tol.{name} does not name a check of experiment '{}'",
                    report.scenario
                ))
            })?;
        let mut fresh = CheckRecord::new(c.name.clone(), c.value, tol, c.relation);
        fresh.note = c.note.take();
        *c = fresh;
    }
    Ok(())
}

/// Writes report.txt, report.json and the data files into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> std::io::Result<()> {
        let p = dir.join(name);
        write_atomic(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("report.txt", &out.report.to_text())?;
    put("report.json", &out.report.to_json())?;
    for (name, t) in &out.tables {
        put(name, &t.to_csv())?;
    }
    for (name, body) in &out.extra {
        put(name, body)?;
    }
    Ok(written)
}

fn configure_threads(cfg: Option<&ScenarioConfig>) {
    let from_cfg = cfg
        .and_then(|c| c.raw.get("threads"))
        .and_then(|s| s.parse::<usize>().ok());
    let from_env = std::env::var("LFSLAB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok());
    if let Some(n) = from_env.or(from_cfg).filter(|&n| n > 0) {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// Entry point shared by the binary and the tests; returns the exit status.
pub fn main_with_args(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.command {
        Command::List => {
            let mut text = String::new();
            for (name, summary) in model_summaries() {
                text.push_str(&format!("{name:<20} {summary}\n"));
            }
            emit(&text);
            0
        }
        Command::Describe { name, dim } => match build_model(&name, dim, &BTreeMap::new()) {
            Ok(m) => {
                emit(&m.describe());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Run(args) => {
            let cfg = match ScenarioConfig::from_args(&args) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return e.exit_code();
                }
            };
            configure_threads(Some(&cfg));
            match execute(&cfg) {
                Ok(out) => {
                    if let Err(e) = write_outputs(&cfg.out_dir, &out) {
                        eprintln!(
                            "error: cannot write outputs to {}: {e}",
                            cfg.out_dir.display()
                        );
                        return 3;
                    }
                    emit(&out.report.to_text());
                    if out.report.passed() {
                        0
                    } else {
                        for c in out.report.failed_checks() {
                            eprintln!(
                                "failed: {} (value {:e}, tolerance {:e})",
                                c.name, c.value, c.tolerance
                            );
                        }
                        1
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pairs: &[(&str, &str)]) -> Result<ScenarioConfig> {
        ScenarioConfig::from_map(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    #[test]
    fn config_text_and_overrides() {
        let m = parse_config_text(
            "# comment\nmodel.name = flrw\n\nmodel.H = 0.5  # rate\nexperiment=audit\n",
        )
        .unwrap();
        assert_eq!(m["model.name"], "flrw");
        assert_eq!(m["model.H"], "0.5");
        assert!(parse_config_text("nonsense").is_err());
        let a = normalize_args(
            [
                "lfslab",
                "run",
                "--ray.t0",
                "10",
                "--grid.points=5",
                "--N",
                "inf",
            ]
            .map(String::from),
        );
        assert_eq!(
            a,
            ["lfslab", "run", "ray.t0=10", "grid.points=5", "--N", "inf"]
        );
    }

    #[test]
    fn validation() {
        assert!(cfg(&[("experiment", "audit")]).is_ok());
        let e = cfg(&[("experiment", "nope")]).unwrap_err();
        assert!(e.to_string().contains("nope") && e.exit_code() == 2);
        assert!(cfg(&[("experiment", "audit"), ("colour", "red")])
            .unwrap_err()
            .to_string()
            .contains("colour"));
        assert!(cfg(&[("experiment", "audit"), ("tol.x", "-1")]).is_err());
        let c = cfg(&[("experiment", "audit"), ("model.name", "bogus")]).unwrap();
        assert!(c.build_model().unwrap_err().to_string().contains("bogus"));
    }

    #[test]
    fn inadmissible_pair_is_a_parameter_error() {
        let c = cfg(&[("experiment", "raychaudhuri"), ("N", "2"), ("eps", "1.5")]).unwrap();
        assert_eq!(execute(&c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn tolerance_override_rejudges() {
        let c = cfg(&[
            ("experiment", "audit"),
            ("samples", "50"),
            ("tol.homogeneity", "1e-300"),
        ])
        .unwrap();
        let out = execute(&c).unwrap();
        let r = out.report.check("homogeneity").unwrap();
        assert_eq!(r.tolerance, 1e-300);
        assert_eq!(r.passed, r.value <= 1e-300);
        let c = cfg(&[
            ("experiment", "audit"),
            ("samples", "50"),
            ("tol.euler", "1e-3"),
        ])
        .unwrap();
        assert!(execute(&c).unwrap_err().to_string().contains("tol.euler"));
    }
}

//! `membed`: scenario runner for Markovian embeddings.
//!
//! Exit codes: 0 success, 2 invalid config or unusable output directory,
//! 3 numerical failure (details in `failure.json`).

mod config;
mod output;
mod scenario;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use markovian_embed::embeddings::{presets, ExtendedGenerator};
use markovian_embed::oracles::{compare, dephasing_trajectory, single_mode_exact};
use markovian_embed::propagator::{evolve_monitored, stability_scan, Termination, Trajectory};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::FormatName;
use crate::scenario::{EmbeddingSpec, OracleSpec, Scenario, Source};

pub const OUTPUT_DIR_ENV: &str = "MEMBED_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "membed-out";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid config: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "membed", version, about = "Run Markovian-embedding scenarios from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Overrides `MEMBED_OUTPUT_DIR` and `outputs.dir`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve every embedding and write series plus a manifest.
    Run(ConfigArgs),
    /// Run, then write pairwise deviations to `report.json`.
    Compare(ConfigArgs),
    /// Sweep the truncation of every embedding and write `stability_report.json`.
    Stability(ConfigArgs),
    /// List the preset registry.
    Presets {
        #[arg(long)]
        json: bool,
    },
    /// Print the JSON schema of scenario configs.
    Schema,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Run,
    Compare,
    Stability,
}

impl Mode {
    fn id(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Compare => "compare",
            Mode::Stability => "stability",
        }
    }
}

fn output_dir(flag: Option<&Path>, sc: &Scenario) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUTPUT_DIR_ENV).filter(|p| !p.is_empty()) {
        return PathBuf::from(p);
    }
    PathBuf::from(sc.config.outputs.dir.as_deref().unwrap_or(DEFAULT_OUTPUT_DIR))
}

fn prepare(args: &ConfigArgs, mode: Mode) -> Result<(Scenario, PathBuf), CliError> {
    let cfg = scenario::load(&args.config)?;
    if cfg.outputs.formats.is_empty() {
        return Err(CliError::Config("outputs.formats is empty".into()));
    }
    let sc = scenario::resolve(cfg)?;
    match mode {
        Mode::Compare => {
            let n = sc.embeddings.len() + usize::from(sc.oracle.is_some());
            if n < 2 {
                return Err(CliError::Config("compare needs two embeddings or one embedding plus an oracle".into()));
            }
        }
        Mode::Stability => {
            scenario::validate_sweep(&sc)?;
        }
        Mode::Run => {}
    }
    let dir = output_dir(args.output_dir.as_deref(), &sc);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok((sc, dir))
}

fn c(z: Option<num_complex::Complex64>) -> Value {
    z.map_or(Value::Null, |z| json!([z.re, z.im]))
}

fn embedding_manifest(spec: &EmbeddingSpec, gen: &ExtendedGenerator) -> Value {
    let p = &gen.params;
    let preset = match &spec.source {
        Source::Preset(info) => serde_json::to_value(info).expect("preset serializes"),
        Source::Variant(_) => Value::Null,
    };
    json!({
        "name": spec.name,
        "source": spec.source_label(),
        "preset": preset,
        "variant": gen.variant,
        "frame": gen.frame_tag,
        "n_f": spec.n_f,
        "mode_truncations": p.n_f,
        "delta": c(p.delta),
        "lambda": c(p.lambda),
        "n_ref": p.n_ref,
        "basis": p.basis,
        "extra": p.extra.iter().map(|(k, v)| (k.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
        "conventions": gen.conventions,
        "injection": gen.injection,
        "extraction": gen.extraction,
        "flat_dim": gen.flat_dim(),
    })
}

fn base_manifest(sc: &Scenario, mode: Mode, config_path: &Path) -> serde_json::Map<String, Value> {
    let o = &sc.opts;
    let (method, dt) = match o.method {
        markovian_embed::propagator::Method::Dopri5 => ("dopri5", None),
        markovian_embed::propagator::Method::Rk4 { dt } => ("rk4", Some(dt)),
    };
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(mode.id()));
    m.insert("config".into(), json!(config_path.display().to_string()));
    m.insert(
        "versions".into(),
        json!({ "membed": env!("CARGO_PKG_VERSION"), "markovian_embed": markovian_embed::VERSION }),
    );
    m.insert("grid".into(), json!({ "t_max": sc.config.grid.t_max, "n_points": sc.t_grid.len() }));
    m.insert("integrator".into(), json!({ "method": method, "tol": o.tol, "dt": dt, "max_steps": o.max_steps }));
    m.insert(
        "bath".into(),
        json!({
            "regime": sc.model.regime(),
            "params": sc.model.provenance.as_ref().map(|p| p.params),
            "zero_temperature": sc.model.provenance.as_ref().is_some_and(|p| p.params.beta.is_infinite()),
            "pairs": sc.model.pairs,
        }),
    );
    m.insert("dim_s".into(), json!(sc.system.dim()));
    m.insert("observables".into(), json!(sc.observables.iter().map(|(n, _)| n).collect::<Vec<_>>()));
    m.insert("oracle".into(), sc.oracle.as_ref().map_or(Value::Null, oracle_manifest));
    m
}

fn oracle_manifest(o: &OracleSpec) -> Value {
    match o {
        OracleSpec::SingleMode { zeta, g, n_beta, n_f } => {
            json!({ "name": o.name(), "kind": "single-mode-exact", "zeta": zeta, "g": g, "n_beta": n_beta, "n_f": n_f })
        }
        OracleSpec::Dephasing => json!({ "name": o.name(), "kind": "dephasing" }),
    }
}

fn termination(t: &Termination) -> Value {
    serde_json::to_value(t).expect("termination serializes")
}

struct Run {
    spec: EmbeddingSpec,
    gen: ExtendedGenerator,
    result: Result<Trajectory, String>,
}

fn evolve_all(sc: &Scenario) -> Vec<Run> {
    sc.embeddings
        .par_iter()
        .map(|spec| {
            let gen = spec.build(&sc.system, &sc.model, spec.n_f).expect("validated during resolution");
            let result = match evolve_monitored(&gen, &sc.rho0, &sc.t_grid, &sc.opts) {
                Ok(t) => match t.termination {
                    Termination::NonFinite { time } => Err(format!("non-finite extended state at t = {time}")),
                    _ => Ok(t),
                },
                Err(e) => Err(e.to_string()),
            };
            Run { spec: spec.clone(), gen, result }
        })
        .collect()
}

fn oracle_trajectory(sc: &Scenario, o: &OracleSpec) -> markovian_embed::Result<Trajectory> {
    match *o {
        OracleSpec::SingleMode { zeta, g, n_beta, n_f } => {
            single_mode_exact(&sc.system, zeta, g, n_beta, n_f, &sc.rho0, &sc.t_grid)
        }
        OracleSpec::Dephasing => dephasing_trajectory(&sc.system, &sc.model, &sc.rho0, &sc.t_grid),
    }
}

fn write_series(sc: &Scenario, dir: &Path, name: &str, traj: &Trajectory) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    for f in &sc.config.outputs.formats {
        let (file, body) = match f {
            FormatName::Csv => (format!("{name}.csv"), output::trajectory_csv(traj, &sc.observables)),
            FormatName::Json => (format!("{name}.json"), output::trajectory_json(traj, &sc.observables)),
        };
        let body = body.map_err(|e| CliError::Numerical(format!("{name}: {e}")))?;
        output::write_atomic(dir, &file, body.as_bytes())?;
        files.push(file);
    }
    Ok(files)
}

fn run_scenario(sc: &Scenario, dir: &Path, mode: Mode, config_path: &Path) -> Result<(), CliError> {
    let runs = evolve_all(sc);
    let oracle = sc.oracle.as_ref().map(|o| (o, oracle_trajectory(sc, o)));
    let mut manifest = base_manifest(sc, mode, config_path);
    let mut failures = Vec::new();
    let mut entries = Vec::new();
    let mut named: Vec<(String, Trajectory)> = Vec::new();
    for run in runs {
        let mut entry = embedding_manifest(&run.spec, &run.gen);
        match run.result {
            Ok(traj) => {
                let files = write_series(sc, dir, &run.spec.name, &traj)?;
                entry["files"] = json!(files);
                entry["termination"] = termination(&traj.termination);
                entry["steps"] = json!({ "accepted": traj.stats.accepted, "rejected": traj.stats.rejected });
                println!("{}: {} points -> {}", run.spec.name, traj.len(), files.join(", "));
                named.push((run.spec.name.clone(), traj));
            }
            Err(msg) => {
                entry["error"] = json!(msg);
                failures.push(json!({ "name": run.spec.name, "error": msg }));
            }
        }
        entries.push(entry);
    }
    manifest.insert("embeddings".into(), Value::Array(entries));
    if let Some((o, res)) = oracle {
        match res {
            Ok(traj) => {
                let files = write_series(sc, dir, o.name(), &traj)?;
                manifest["oracle"]["files"] = json!(files);
                named.push((o.name().to_string(), traj));
            }
            Err(e) => failures.push(json!({ "name": o.name(), "error": e.to_string() })),
        }
    }
    let wants_report = mode == Mode::Compare || sc.config.compare.is_some();
    if failures.is_empty() && wants_report && named.len() >= 2 {
        let threshold = sc.config.compare.as_ref().and_then(|c| c.threshold);
        let mut meta = BTreeMap::new();
        meta.insert("command".to_string(), mode.id().to_string());
        meta.insert("membed_version".to_string(), env!("CARGO_PKG_VERSION").to_string());
        let report = compare(&named, &sc.observables, threshold, meta).map_err(|e| CliError::Numerical(e.to_string()))?;
        output::write_json(dir, "report.json", &report)?;
        manifest.insert("report".into(), json!("report.json"));
        let verdict = match report.all_pass() {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "no threshold",
        };
        println!("max deviation {:.3e} ({verdict}) -> report.json", report.max_deviation());
    }
    output::write_json(dir, "manifest.json", &Value::Object(manifest))?;
    if !failures.is_empty() {
        output::write_json(dir, "failure.json", &json!({ "command": mode.id(), "failures": failures }))?;
        return Err(CliError::Numerical(format!("{} run(s) failed, see failure.json", failures.len())));
    }
    Ok(())
}

fn run_stability(sc: &Scenario, dir: &Path, config_path: &Path) -> Result<(), CliError> {
    let (n_f_list, threshold, obs_idx) = scenario::validate_sweep(sc)?;
    let (obs_name, obs) = &sc.observables[obs_idx];
    let scans: Vec<_> = sc
        .embeddings
        .par_iter()
        .map(|spec| {
            let rep = stability_scan(
                |n| spec.build(&sc.system, &sc.model, n),
                n_f_list,
                &sc.rho0,
                &sc.t_grid,
                obs,
                &sc.opts,
                threshold,
            );
            (spec, rep)
        })
        .collect();
    let mut manifest = base_manifest(sc, Mode::Stability, config_path);
    let mut frames = Vec::new();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (spec, rep) in scans {
        let gen = spec.build(&sc.system, &sc.model, spec.n_f).expect("validated during resolution");
        entries.push(embedding_manifest(spec, &gen));
        match rep {
            Ok(r) => {
                for row in &r.rows {
                    let div = row.first_divergence_time.map_or("none".to_string(), |t| format!("t = {t}"));
                    println!("{} n_f = {}: max trace_dev {:.3e}, divergence {div}", spec.name, row.n_f, row.max_trace_dev);
                }
                frames.push(json!({ "name": spec.name, "source": spec.source_label(), "rows": r.rows }));
            }
            Err(e) => failures.push(json!({ "name": spec.name, "error": e.to_string() })),
        }
    }
    manifest.insert("embeddings".into(), Value::Array(entries));
    manifest.insert("stability".into(), json!({ "n_f": n_f_list, "divergence_threshold": threshold, "observable": obs_name }));
    if failures.is_empty() {
        output::write_json(
            dir,
            "stability_report.json",
            &json!({ "divergence_threshold": threshold, "observable": obs_name, "frames": frames }),
        )?;
        manifest.insert("report".into(), json!("stability_report.json"));
    }
    output::write_json(dir, "manifest.json", &Value::Object(manifest))?;
    if !failures.is_empty() {
        output::write_json(dir, "failure.json", &json!({ "command": "stability", "failures": failures }))?;
        return Err(CliError::Numerical(format!("{} sweep(s) failed, see failure.json", failures.len())));
    }
    Ok(())
}

fn list_presets(as_json: bool) {
    if as_json {
        println!("{}", serde_json::to_string_pretty(presets()).expect("presets serialize"));
        return;
    }
    for p in presets() {
        let regime = p.regime.map_or("any".to_string(), |r| format!("{r:?}"));
        println!("{:<24} {:<18} {:<26} {}", p.id, format!("{:?}", p.variant), regime, p.description);
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => {
            let (sc, dir) = prepare(&a, Mode::Run)?;
            run_scenario(&sc, &dir, Mode::Run, &a.config)
        }
        Command::Compare(a) => {
            let (sc, dir) = prepare(&a, Mode::Compare)?;
            run_scenario(&sc, &dir, Mode::Compare, &a.config)
        }
        Command::Stability(a) => {
            let (sc, dir) = prepare(&a, Mode::Stability)?;
            run_stability(&sc, &dir, &a.config)
        }
        Command::Presets { json } => {
            list_presets(json);
            Ok(())
        }
        Command::Schema => {
            print!("{}", config::schema_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("membed: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

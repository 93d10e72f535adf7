//! Command-line front end.
//!
//! Subcommands: `iterate`, `twisted-iterate`, `flow`, `ric`, `ric-inv`,
//! `ric-inv-general`, `index`, `energy`, `mto`, `mto-improved`, `path`,
//! `orbit`. Options may come from `--config <file>` (lines of
//! `key = value`); command-line flags override file values; unknown keys
//! are rejected with exit code 4. Every command's output is a pure
//! function of the configuration, the seed, and the input files.
//!
//! Exit codes: 0 success, 2 solver failure, 3 positivity violation,
//! 4 bad input or I/O failure.

use crate::dynamics::{
    continuity_path_solve, flow_richardson, flow_run, inverse_ricci_orbit, nadel_forward_run,
    ricci_iteration_run, FlowConfig, IterationConfig, PathFamily, Verdict,
};
use crate::energy::{functional_report, improved_mto_audit, mto_audit};
use crate::error::{KimError, Result};
use crate::grid::{
    dilation_pullback_potential, random_potential, BackgroundGeometry, BackgroundKind, F0Spec,
    Potential, Symmetry,
};
use crate::metric::{
    ricci_forward, ricci_forward_renormalized, ricci_index, ricci_inverse_fano,
    ricci_inverse_general, MetricState, TwistedFieldSpec,
};
use crate::report::{trace_csv, trace_json, Json};
use crate::solver::SolverConfig;
use crate::statefile::{load_potential, load_state, persist_potential, persist_state};
use std::path::{Path, PathBuf};
use std::sync::Arc;

const COMMANDS: &[&str] = &[
    "iterate",
    "twisted-iterate",
    "flow",
    "ric",
    "ric-inv",
    "ric-inv-general",
    "index",
    "energy",
    "mto",
    "mto-improved",
    "path",
    "orbit",
];

/// Keys that take a value; booleans are listed separately.
const VALUE_KEYS: &[&str] = &[
    "bg",
    "N",
    "V",
    "f0-seed",
    "f0-band",
    "f0-amp",
    "seed",
    "band",
    "amp",
    "lambda",
    "input",
    "alpha",
    "beta",
    "output",
    "out-csv",
    "out-json",
    "tau",
    "steps",
    "h",
    "horizon",
    "twist",
    "terms",
    "cap",
    "samples",
    "length",
    "param",
    "kind",
    "record-stride",
    "residual-tol",
    "max-newton",
    "min-damping",
    "positivity-guard",
    "linear-tol",
];

const BOOL_KEYS: &[&str] = &[
    "even",
    "renormalize",
    "nonstandard-branch",
    "richardson",
    "print-config",
];

/// Fully resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: String,
    pub bg: String,
    pub n: usize,
    pub volume: Option<f64>,
    pub even: bool,
    pub f0_seed: u64,
    pub f0_band: u32,
    pub f0_amp: f64,
    pub seed: u64,
    pub seed_set: bool,
    pub band: u32,
    pub amp: f64,
    pub lambda: Option<f64>,
    pub input: Option<PathBuf>,
    pub alpha: Option<PathBuf>,
    pub beta: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
    pub tau: f64,
    pub steps: usize,
    pub h: f64,
    pub horizon: f64,
    pub twist: Option<f64>,
    pub terms: usize,
    pub terms_set: bool,
    pub cap: u32,
    pub samples: usize,
    pub length: usize,
    pub param: Option<f64>,
    pub kind: Option<String>,
    pub record_stride: usize,
    pub renormalize: bool,
    pub nonstandard_branch: bool,
    pub richardson: bool,
    pub print_config: bool,
    pub solver: SolverConfig,
}

fn bad(msg: impl Into<String>) -> KimError {
    KimError::BadInput(msg.into())
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| bad(format!("cannot parse value {value:?} for key {key}")))
}

/// Parse a config file: `key = value` lines, `#` comments.
fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("{}:{}: expected key = value", path.display(), ln + 1)))?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Parse argv into a resolved configuration. The first argument is the
/// command; `--config` files contribute entries that flags override.
pub fn parse_config(args: &[String]) -> Result<RunConfig> {
    let command = args
        .first()
        .ok_or_else(|| bad(format!("missing command; expected one of {COMMANDS:?}")))?
        .clone();
    if !COMMANDS.contains(&command.as_str()) {
        return Err(bad(format!("unknown command {command:?}; expected one of {COMMANDS:?}")));
    }
    // Collect flag entries; pull out --config first so files lose to flags.
    let mut flag_entries: Vec<(String, String)> = Vec::new();
    let mut file_entries: Vec<(String, String)> = Vec::new();
    let mut i = 1usize;
    while i < args.len() {
        let token = &args[i];
        let key = token
            .strip_prefix("--")
            .ok_or_else(|| bad(format!("unexpected argument {token:?}")))?
            .to_string();
        if key == "config" {
            let path = args
                .get(i + 1)
                .ok_or_else(|| bad("missing value for key config"))?;
            file_entries.extend(parse_config_file(Path::new(path))?);
            i += 2;
        } else if BOOL_KEYS.contains(&key.as_str()) {
            flag_entries.push((key, "true".to_string()));
            i += 1;
        } else if VALUE_KEYS.contains(&key.as_str()) {
            let value = args
                .get(i + 1)
                .ok_or_else(|| bad(format!("missing value for key {key}")))?;
            flag_entries.push((key, value.clone()));
            i += 2;
        } else {
            return Err(bad(format!("unknown key {key}")));
        }
    }

    let mut cfg = RunConfig {
        command,
        bg: "sphere".into(),
        n: 64,
        volume: None,
        even: false,
        f0_seed: 0,
        f0_band: 4,
        f0_amp: 0.3,
        seed: 0,
        seed_set: false,
        band: 8,
        amp: 0.2,
        lambda: None,
        input: None,
        alpha: None,
        beta: None,
        output: None,
        out_csv: None,
        out_json: None,
        tau: 1.0,
        steps: 100,
        h: 1e-3,
        horizon: 1.0,
        twist: None,
        terms: 8,
        terms_set: false,
        cap: 50,
        samples: 100,
        length: 10,
        param: None,
        kind: None,
        record_stride: 1,
        renormalize: false,
        nonstandard_branch: false,
        richardson: false,
        print_config: false,
        solver: SolverConfig::default(),
    };
    for (key, value) in file_entries.into_iter().chain(flag_entries) {
        apply_entry(&mut cfg, &key, &value)?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn apply_entry(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "bg" => {
            if !["sphere", "torus", "synthetic"].contains(&value) {
                return Err(bad(format!("unknown background {value:?}")));
            }
            cfg.bg = value.to_string();
        }
        "N" => cfg.n = parse_value(key, value)?,
        "V" => cfg.volume = Some(parse_value(key, value)?),
        "even" => cfg.even = parse_value(key, value)?,
        "f0-seed" => cfg.f0_seed = parse_value(key, value)?,
        "f0-band" => cfg.f0_band = parse_value(key, value)?,
        "f0-amp" => cfg.f0_amp = parse_value(key, value)?,
        "seed" => {
            cfg.seed = parse_value(key, value)?;
            cfg.seed_set = true;
        }
        "band" => {
            cfg.band = parse_value(key, value)?;
            cfg.seed_set = true;
        }
        "amp" => {
            cfg.amp = parse_value(key, value)?;
            cfg.seed_set = true;
        }
        "lambda" => cfg.lambda = Some(parse_value(key, value)?),
        "input" => cfg.input = Some(PathBuf::from(value)),
        "alpha" => cfg.alpha = Some(PathBuf::from(value)),
        "beta" => cfg.beta = Some(PathBuf::from(value)),
        "output" => cfg.output = Some(PathBuf::from(value)),
        "out-csv" => cfg.out_csv = Some(PathBuf::from(value)),
        "out-json" => cfg.out_json = Some(PathBuf::from(value)),
        "tau" => cfg.tau = parse_value(key, value)?,
        "steps" => cfg.steps = parse_value(key, value)?,
        "h" => cfg.h = parse_value(key, value)?,
        "horizon" => cfg.horizon = parse_value(key, value)?,
        "twist" => cfg.twist = Some(parse_value(key, value)?),
        "terms" => {
            cfg.terms = parse_value(key, value)?;
            cfg.terms_set = true;
        }
        "cap" => cfg.cap = parse_value(key, value)?,
        "samples" => cfg.samples = parse_value(key, value)?,
        "length" => cfg.length = parse_value(key, value)?,
        "param" => cfg.param = Some(parse_value(key, value)?),
        "kind" => cfg.kind = Some(value.to_string()),
        "record-stride" => cfg.record_stride = parse_value(key, value)?,
        "renormalize" => cfg.renormalize = parse_value(key, value)?,
        "nonstandard-branch" => cfg.nonstandard_branch = parse_value(key, value)?,
        "richardson" => cfg.richardson = parse_value(key, value)?,
        "print-config" => cfg.print_config = parse_value(key, value)?,
        "residual-tol" => cfg.solver.residual_tol = parse_value(key, value)?,
        "max-newton" => cfg.solver.max_newton = parse_value(key, value)?,
        "min-damping" => cfg.solver.min_damping = parse_value(key, value)?,
        "positivity-guard" => cfg.solver.positivity_guard = parse_value(key, value)?,
        "linear-tol" => cfg.solver.linear_tol = parse_value(key, value)?,
        other => return Err(bad(format!("unknown key {other}"))),
    }
    Ok(())
}

fn validate(cfg: &RunConfig) -> Result<()> {
    if !(cfg.tau > 0.0) {
        return Err(bad(format!("tau {} must be positive", cfg.tau)));
    }
    if !(cfg.h > 0.0) || !(cfg.horizon > 0.0) {
        return Err(bad("h and horizon must be positive".to_string()));
    }
    if let Some(v) = cfg.volume {
        if !(v > 0.0) {
            return Err(bad(format!("V {v} must be positive")));
        }
    }
    if let Some(l) = cfg.lambda {
        if !(l > 0.0) {
            return Err(bad(format!("lambda {l} must be positive")));
        }
    }
    if cfg.amp < 0.0 || cfg.f0_amp < 0.0 {
        return Err(bad("amplitudes must be nonnegative".to_string()));
    }
    if cfg.command == "path" && cfg.kind.is_none() {
        return Err(bad("path requires --kind".to_string()));
    }
    if cfg.command == "twisted-iterate" && cfg.twist.is_none() {
        return Err(bad("twisted-iterate requires --twist".to_string()));
    }
    if cfg.command == "energy" && (cfg.alpha.is_none() || cfg.beta.is_none()) {
        return Err(bad("energy requires --alpha and --beta".to_string()));
    }
    Ok(())
}

fn resolved_volume(cfg: &RunConfig) -> f64 {
    cfg.volume.unwrap_or(match cfg.bg.as_str() {
        "sphere" => 2.0,
        _ => 1.0,
    })
}

/// Echo the fully resolved configuration, deterministically ordered.
pub fn print_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let opt_path = |p: &Option<PathBuf>| {
        p.as_ref().map(|v| v.display().to_string()).unwrap_or_else(|| "-".into())
    };
    let opt_f = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
    out.push_str(&format!("command = {}\n", cfg.command));
    out.push_str(&format!("bg = {}\n", cfg.bg));
    out.push_str(&format!("N = {}\n", cfg.n));
    out.push_str(&format!("V = {}\n", resolved_volume(cfg)));
    out.push_str(&format!("even = {}\n", cfg.even));
    out.push_str(&format!("f0-seed = {}\n", cfg.f0_seed));
    out.push_str(&format!("f0-band = {}\n", cfg.f0_band));
    out.push_str(&format!("f0-amp = {}\n", cfg.f0_amp));
    out.push_str(&format!("seed = {}\n", cfg.seed));
    out.push_str(&format!("band = {}\n", cfg.band));
    out.push_str(&format!("amp = {}\n", cfg.amp));
    out.push_str(&format!("lambda = {}\n", opt_f(&cfg.lambda)));
    out.push_str(&format!("input = {}\n", opt_path(&cfg.input)));
    out.push_str(&format!("alpha = {}\n", opt_path(&cfg.alpha)));
    out.push_str(&format!("beta = {}\n", opt_path(&cfg.beta)));
    out.push_str(&format!("output = {}\n", opt_path(&cfg.output)));
    out.push_str(&format!("out-csv = {}\n", opt_path(&cfg.out_csv)));
    out.push_str(&format!("out-json = {}\n", opt_path(&cfg.out_json)));
    out.push_str(&format!("tau = {}\n", cfg.tau));
    out.push_str(&format!("steps = {}\n", cfg.steps));
    out.push_str(&format!("h = {}\n", cfg.h));
    out.push_str(&format!("horizon = {}\n", cfg.horizon));
    out.push_str(&format!("twist = {}\n", opt_f(&cfg.twist)));
    out.push_str(&format!("terms = {}\n", cfg.terms));
    out.push_str(&format!("cap = {}\n", cfg.cap));
    out.push_str(&format!("samples = {}\n", cfg.samples));
    out.push_str(&format!("length = {}\n", cfg.length));
    out.push_str(&format!("param = {}\n", opt_f(&cfg.param)));
    out.push_str(&format!(
        "kind = {}\n",
        cfg.kind.clone().unwrap_or_else(|| "-".into())
    ));
    out.push_str(&format!("record-stride = {}\n", cfg.record_stride));
    out.push_str(&format!("renormalize = {}\n", cfg.renormalize));
    out.push_str(&format!("nonstandard-branch = {}\n", cfg.nonstandard_branch));
    out.push_str(&format!("richardson = {}\n", cfg.richardson));
    out.push_str(&format!("residual-tol = {:e}\n", cfg.solver.residual_tol));
    out.push_str(&format!("max-newton = {}\n", cfg.solver.max_newton));
    out.push_str(&format!("min-damping = {:e}\n", cfg.solver.min_damping));
    out.push_str(&format!("positivity-guard = {:e}\n", cfg.solver.positivity_guard));
    out.push_str(&format!("linear-tol = {:e}\n", cfg.solver.linear_tol));
    out
}

fn build_bg(cfg: &RunConfig) -> Result<Arc<BackgroundGeometry>> {
    let kind = match cfg.bg.as_str() {
        "sphere" => BackgroundKind::SphereSymmetric,
        "torus" => BackgroundKind::Torus,
        "synthetic" => BackgroundKind::SyntheticNegative,
        other => return Err(bad(format!("unknown background {other}"))),
    };
    let sym = if cfg.even { Symmetry::EvenInS } else { Symmetry::None };
    let f0;
    let f0_ref = if kind == BackgroundKind::SyntheticNegative {
        f0 = F0Spec::seeded(cfg.f0_seed, cfg.f0_band, cfg.f0_amp);
        Some(&f0)
    } else {
        None
    };
    BackgroundGeometry::build(kind, cfg.n, resolved_volume(cfg), f0_ref, sym)
}

/// Resolve the starting potential: explicit input file, else a Möbius
/// dilation, else seeded data, else the background itself.
fn resolve_potential(cfg: &RunConfig, bg: &Arc<BackgroundGeometry>) -> Result<Potential> {
    if let Some(path) = &cfg.input {
        return load_potential(path, bg);
    }
    if let Some(lambda) = cfg.lambda {
        return dilation_pullback_potential(bg, lambda);
    }
    if cfg.seed_set {
        return random_potential(bg, cfg.seed, cfg.band, cfg.amp);
    }
    Ok(Potential::zero(bg.clone()))
}

fn resolve_state(cfg: &RunConfig, bg: &Arc<BackgroundGeometry>) -> Result<MetricState> {
    MetricState::new(resolve_potential(cfg, bg)?)
}

fn write_if(path: &Option<PathBuf>, content: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, content)?;
    }
    Ok(())
}

fn created_by(cfg: &RunConfig) -> String {
    format!("kim {}", cfg.command)
}

/// Worker-count cap from `KIM_THREADS` (default: hardware parallelism).
fn thread_count(jobs: usize) -> usize {
    let hw = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1);
    let cap = std::env::var("KIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1)
        .unwrap_or(hw);
    cap.min(jobs).max(1)
}

/// Deterministic fan-out: results are merged in index order regardless of
/// the worker count.
fn parallel_map<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = thread_count(count);
    if workers <= 1 {
        return (0..count).map(&f).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = Vec::with_capacity(count);
    slots.resize_with(count, || None);
    let slots = std::sync::Mutex::new(slots);
    std::thread::scope(|scope| {
        for w in 0..workers {
            let f = &f;
            let slots = &slots;
            scope.spawn(move || {
                let mut local: Vec<(usize, Result<T>)> = Vec::new();
                let mut i = w;
                while i < count {
                    local.push((i, f(i)));
                    i += workers;
                }
                let mut guard = slots.lock().expect("worker panicked holding results");
                for (i, r) in local {
                    guard[i] = Some(r);
                }
            });
        }
    });
    slots
        .into_inner()
        .expect("results poisoned")
        .into_iter()
        .map(|r| r.expect("all indices filled"))
        .collect()
}

/// Amplitude ladder for batch audits: cycles through multiples of the base
/// amplitude so samples span well inside and well outside the Kähler cone.
fn audit_amplitude(base: f64, index: usize) -> f64 {
    const LADDER: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
    base * LADDER[index % LADDER.len()]
}

/// Run a parsed configuration; returns the process exit code.
pub fn run(cfg: &RunConfig) -> Result<i32> {
    if cfg.print_config {
        print!("{}", print_config(cfg));
        return Ok(0);
    }
    let bg = build_bg(cfg)?;
    match cfg.command.as_str() {
        "iterate" | "twisted-iterate" => {
            let start = resolve_state(cfg, &bg)?;
            let mut icfg = IterationConfig::new(cfg.tau, cfg.steps);
            icfg.solver = cfg.solver;
            icfg.nonstandard_branch = cfg.nonstandard_branch;
            let trace = if cfg.command == "twisted-iterate" {
                icfg.twist = Some(TwistedFieldSpec::new(cfg.twist.expect("validated"))?);
                crate::dynamics::twisted_iteration_run(&start, &icfg)?
            } else {
                ricci_iteration_run(&start, &icfg)?
            };
            write_if(&cfg.out_csv, &trace_csv(&trace))?;
            let mobius = if bg.is_anticanonical_sphere() {
                Some(crate::dynamics::mobius_orbit_distance(&trace.final_state)?)
            } else {
                None
            };
            let json = trace_json(&trace, &cfg.command, bg.mu(), mobius).render();
            write_if(&cfg.out_json, &(json.clone() + "\n"))?;
            if let Some(path) = &cfg.output {
                persist_state(&trace.final_state, path, &created_by(cfg))?;
            }
            println!("{json}");
            Ok(if trace.verdict == Verdict::SolverFailure { 2 } else { 0 })
        }
        "flow" => {
            let start = resolve_state(cfg, &bg)?;
            let mut fcfg = FlowConfig::new(cfg.h, cfg.horizon);
            fcfg.record_stride = cfg.record_stride;
            let (trace, order) = if cfg.richardson {
                let (t, o) = flow_richardson(&start, &fcfg)?;
                (t, Some(o))
            } else {
                (flow_run(&start, &fcfg)?, None)
            };
            write_if(&cfg.out_csv, &trace_csv(&trace))?;
            let mobius = if bg.is_anticanonical_sphere() {
                Some(crate::dynamics::mobius_orbit_distance(&trace.final_state)?)
            } else {
                None
            };
            let mut json = trace_json(&trace, "flow", bg.mu(), mobius);
            json.push(
                "richardson_order",
                order.map(Json::Num).unwrap_or(Json::Null),
            );
            let rendered = json.render();
            write_if(&cfg.out_json, &(rendered.clone() + "\n"))?;
            if let Some(path) = &cfg.output {
                persist_state(&trace.final_state, path, &created_by(cfg))?;
            }
            println!("{rendered}");
            Ok(0)
        }
        "ric" => {
            let state = resolve_state(cfg, &bg)?;
            let data = state.ricci_data();
            let mut json = Json::obj();
            json.push("command", Json::Str("ric".into()));
            json.push("kahler", Json::Bool(data.min_ricci_ratio > 0.0));
            json.push("min_ricci_ratio", Json::Num(data.min_ricci_ratio));
            let smin = data.scalar_ratio.iter().cloned().fold(f64::INFINITY, f64::min);
            let smax = data.scalar_ratio.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            json.push("scalar_min", Json::Num(smin));
            json.push("scalar_max", Json::Num(smax));
            let fsup = data.ricci_potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            json.push("sup_ricci_potential", Json::Num(fsup));
            let mut renormalized = false;
            if let Some(path) = &cfg.output {
                let fwd = if bg.is_anticanonical_sphere() {
                    ricci_forward(&state)?
                } else if cfg.renormalize {
                    renormalized = true;
                    ricci_forward_renormalized(&state)?
                } else {
                    return Err(bad(
                        "writing the Ricci representative off the anticanonical sphere \
                         needs --renormalize (not the geometric operator)",
                    ));
                };
                persist_potential(&fwd.potential, path, &created_by(cfg))?;
            }
            json.push("renormalized", Json::Bool(renormalized));
            println!("{}", json.render());
            Ok(0)
        }
        "ric-inv" => {
            let psi = resolve_potential(cfg, &bg)?;
            let state = ricci_inverse_fano(&bg, &psi)?;
            if let Some(path) = &cfg.output {
                persist_state(&state, path, &created_by(cfg))?;
            }
            let mut json = Json::obj();
            json.push("command", Json::Str("ric-inv".into()));
            json.push("min_density", Json::Num(state.min_density()));
            json.push("min_ricci_ratio", Json::Num(state.min_ricci_ratio()));
            println!("{}", json.render());
            Ok(0)
        }
        "ric-inv-general" => {
            let state = resolve_state(cfg, &bg)?;
            let out = ricci_inverse_general(&state)?;
            if let Some(path) = &cfg.output {
                persist_state(&out, path, &created_by(cfg))?;
            }
            let mut json = Json::obj();
            json.push("command", Json::Str("ric-inv-general".into()));
            json.push("min_density", Json::Num(out.min_density()));
            json.push(
                "sup_potential_change",
                Json::Num(out.potential().sup_distance(state.potential())),
            );
            println!("{}", json.render());
            Ok(0)
        }
        "index" => {
            let state = resolve_state(cfg, &bg)?;
            let idx = ricci_index(&state, cfg.cap)?;
            let mut json = Json::obj();
            json.push("command", Json::Str("index".into()));
            json.push("index", Json::Str(idx.to_string()));
            json.push("cap", Json::Int(cfg.cap as i64));
            write_if(&cfg.out_json, &(json.render() + "\n"))?;
            println!("{idx}");
            Ok(0)
        }
        "energy" => {
            let a = load_state(cfg.alpha.as_ref().expect("validated"), &bg)?;
            let b = load_state(cfg.beta.as_ref().expect("validated"), &bg)?;
            let twist = match cfg.twist {
                Some(t) => Some(TwistedFieldSpec::new(t)?),
                None => None,
            };
            let report = functional_report(&a, &b, twist.as_ref())?;
            let mut json = Json::obj();
            json.push("command", Json::Str("energy".into()));
            json.push("I", Json::Num(report.i));
            json.push("J", Json::Num(report.j));
            json.push("I0", Json::Num(report.i0));
            json.push("I1", Json::Num(report.i1));
            json.push("I_minus_J", Json::Num(report.i_minus_j));
            json.push("E0", Json::Num(report.e0));
            json.push("E1", report.e1.map(Json::Num).unwrap_or(Json::Null));
            json.push("F_mu", Json::Num(report.f_mu));
            json.push(
                "E0_twisted",
                report.e0_twisted.map(Json::Num).unwrap_or(Json::Null),
            );
            // Pullbacks by the inverse Ricci operator, when available.
            if bg.is_anticanonical_sphere() && cfg.terms_set && cfg.terms > 0 {
                let mut pulled = Vec::new();
                for l in 1..=cfg.terms.min(8) as u32 {
                    for k in 0..=1u32 {
                        let v = crate::energy::pullback_functional(&a, b.potential(), k, l)?;
                        let mut item = Json::obj();
                        item.push("k", Json::Int(k as i64));
                        item.push("l", Json::Int(l as i64));
                        item.push("value", Json::Num(v));
                        pulled.push(item);
                    }
                }
                json.push("E_kl", Json::Arr(pulled));
            }
            let rendered = json.render();
            write_if(&cfg.out_json, &(rendered.clone() + "\n"))?;
            println!("{rendered}");
            Ok(0)
        }
        "mto" => {
            let audits = parallel_map(cfg.samples, |i| {
                let phi = random_potential(
                    &bg,
                    cfg.seed.wrapping_add(i as u64),
                    cfg.band,
                    audit_amplitude(cfg.amp, i),
                )?;
                mto_audit(&bg, &phi)
            })?;
            let mut min_margin = f64::INFINITY;
            let mut max_margin = f64::NEG_INFINITY;
            let mut sum = 0.0;
            let mut failures = 0i64;
            for a in &audits {
                min_margin = min_margin.min(a.margin);
                max_margin = max_margin.max(a.margin);
                sum += a.margin;
                if a.margin < -1e-9 {
                    failures += 1;
                }
            }
            let mut mobius = Vec::new();
            for lambda in [0.5, 1.0, 2.0] {
                let p = dilation_pullback_potential(&bg, lambda)?;
                let a = mto_audit(&bg, &p)?;
                let mut item = Json::obj();
                item.push("lambda", Json::Num(lambda));
                item.push("margin", Json::Num(a.margin));
                mobius.push(item);
            }
            let mut json = Json::obj();
            json.push("command", Json::Str("mto".into()));
            json.push("samples", Json::Int(cfg.samples as i64));
            json.push("min_margin", Json::Num(min_margin));
            json.push("max_margin", Json::Num(max_margin));
            json.push("mean_margin", Json::Num(sum / cfg.samples.max(1) as f64));
            json.push("failures", Json::Int(failures));
            json.push("mobius", Json::Arr(mobius));
            let rendered = json.render();
            write_if(&cfg.out_json, &(rendered.clone() + "\n"))?;
            println!("{rendered}");
            Ok(0)
        }
        "mto-improved" => {
            let audits = parallel_map(cfg.samples, |i| {
                let phi = random_potential(
                    &bg,
                    cfg.seed.wrapping_add(i as u64),
                    cfg.band,
                    audit_amplitude(cfg.amp, i),
                )?;
                improved_mto_audit(&bg, &phi, cfg.terms)
            })?;
            let mut min_strength = f64::INFINITY;
            let mut min_j = f64::INFINITY;
            let mut max_excess = f64::NEG_INFINITY;
            let mut failures = 0i64;
            for a in &audits {
                min_strength = min_strength.min(a.strengthened_margin);
                for t in &a.j_terms {
                    min_j = min_j.min(*t);
                }
                max_excess = max_excess.max(a.strengthened_margin - a.margin);
                if a.strengthened_margin < -1e-9 {
                    failures += 1;
                }
            }
            let mut json = Json::obj();
            json.push("command", Json::Str("mto-improved".into()));
            json.push("samples", Json::Int(cfg.samples as i64));
            json.push("terms", Json::Int(cfg.terms as i64));
            json.push("min_strengthened_margin", Json::Num(min_strength));
            json.push("min_j_term", Json::Num(min_j));
            json.push("max_margin_excess", Json::Num(max_excess));
            json.push("failures", Json::Int(failures));
            let rendered = json.render();
            write_if(&cfg.out_json, &(rendered.clone() + "\n"))?;
            println!("{rendered}");
            Ok(0)
        }
        "path" => {
            let family = PathFamily::parse(cfg.kind.as_deref().expect("validated"))
                .ok_or_else(|| bad(format!("unknown path kind {:?}", cfg.kind)))?;
            let param = cfg
                .param
                .ok_or_else(|| bad("path requires --param".to_string()))?;
            let twist = match cfg.twist {
                Some(t) => Some(TwistedFieldSpec::new(t)?),
                None => None,
            };
            let (state, sol) =
                continuity_path_solve(&bg, family, param, twist.as_ref(), None, &cfg.solver)?;
            if let Some(path) = &cfg.output {
                persist_state(&state, path, &created_by(cfg))?;
            }
            let mut json = Json::obj();
            json.push("command", Json::Str("path".into()));
            json.push("kind", Json::Str(family.as_str().into()));
            json.push("param", Json::Num(param));
            json.push("newton_iters", Json::Int(sol.newton_iters as i64));
            json.push("residual", Json::Num(sol.final_residual));
            json.push(
                "normalization_constant",
                Json::Num(sol.normalization_constant),
            );
            json.push("min_density", Json::Num(state.min_density()));
            json.push(
                "nonstandard_branch",
                Json::Bool(sol.nonstandard_branch),
            );
            let rendered = json.render();
            write_if(&cfg.out_json, &(rendered.clone() + "\n"))?;
            println!("{rendered}");
            Ok(0)
        }
        "orbit" => {
            let start = resolve_potential(cfg, &bg)?;
            let orbit = inverse_ricci_orbit(&start, cfg.length)?;
            if let Some(path) = &cfg.output {
                if let Some(last) = orbit.last() {
                    persist_state(last, path, &created_by(cfg))?;
                }
            }
            let devs: Vec<Json> = orbit
                .iter()
                .map(|m| Json::Num(m.sup_density_deviation()))
                .collect();
            let ricci: Vec<Json> = orbit.iter().map(|m| Json::Num(m.min_ricci_ratio())).collect();
            // Ricci index of the first orbit state (it is always Kähler).
            let idx = orbit
                .first()
                .map(|m| nadel_forward_run(m, cfg.cap))
                .transpose()?
                .map(|r| r.index.to_string());
            let mut json = Json::obj();
            json.push("command", Json::Str("orbit".into()));
            json.push("length", Json::Int(cfg.length as i64));
            json.push("density_deviation", Json::Arr(devs));
            json.push("min_ricci_ratio", Json::Arr(ricci));
            json.push(
                "first_state_index",
                idx.map(Json::Str).unwrap_or(Json::Null),
            );
            let rendered = json.render();
            write_if(&cfg.out_json, &(rendered.clone() + "\n"))?;
            println!("{rendered}");
            Ok(0)
        }
        other => Err(bad(format!("unknown command {other}"))),
    }
}

/// Parse and run; the binary maps errors to exit codes.
pub fn run_cli(args: &[String]) -> Result<i32> {
    let cfg = parse_config(args)?;
    run(&cfg)
}

//! Command-line front end: symbol-file I/O, JSON reports and the
//! subcommands behind the `symtail` binary.
//!
//! Reports are JSON objects with the fields `tool`, `version`, `command`,
//! `timestamp`, `seed`, `config` and `results`. Every number under
//! `results` is wrapped as `{"value": x, "unit": "..."}`. Apart from
//! `timestamp`, a report is a pure function of the inputs, flags and seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::batch::SymbolBatch;
use crate::channel::{awgn_capacity, mutual_information, ChannelConfig};
use crate::dist::TailModel;
use crate::error::{Error, Result};
use crate::estimate::{fit_nu, kl_kde_vs_model, nll, qq_data, standardize, KdeEstimate, KdeMode, NU_MAX_DEFAULT};
use crate::maxent::{check_perturbations, solve_maxent, PayloadParams, DEFAULT_GRID_POINTS, DEFAULT_HALF_WIDTH};
use crate::toyjscc::{
    entropy_variability_with, lambda_sweep, CodecConfig, EpochMetrics, Regime, SourceSpec, TrainState,
    FINAL_FIT_SAMPLES,
};

pub const TOOL: &str = "symtail";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const QQ_POINTS: usize = 99;

#[derive(Debug, Parser)]
#[command(name = "symtail", version, about = "Heavy-tail analysis of learned channel symbols")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the tail index of a symbol file and compare baselines.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = NU_MAX_DEFAULT)]
        nu_max: f64,
        /// QQ sidecar CSV (default: <input>.qq.csv).
        #[arg(long)]
        qq: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// KL divergence from the KDE of a symbol file to a tail model.
    Kl {
        #[arg(long)]
        input: PathBuf,
        /// gaussian, cauchy or student_t:<nu>
        #[arg(long, default_value = "gaussian")]
        target: String,
        #[arg(long, default_value = "identical")]
        mode: KdeMode,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Maximum-entropy law under a payload budget.
    Maxent {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        sigma2: f64,
        /// Payload budget C, bits per symbol.
        #[arg(long = "payload")]
        payload_bits: f64,
        #[arg(long, default_value_t = DEFAULT_HALF_WIDTH)]
        half_width: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        #[arg(long, default_value_t = 20)]
        perturbations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Density sidecar CSV.
        #[arg(long, default_value = "maxent_density.csv")]
        density: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Mutual information of a tail-model input over AWGN.
    Mi {
        #[arg(long, default_value = "gaussian")]
        model: String,
        #[arg(long = "snr-db", value_delimiter = ',', default_values_t = vec![0.0, 10.0, 20.0])]
        snr_db: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the toy codec from a JSON plan.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "train_out")]
        out_dir: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Draw samples from a tail model into a symbol file.
    Sample {
        #[arg(long)]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

// ---- symbol files ----

/// Read a `dim_0,...,dim_{M-1}` CSV. Errors carry the 1-based line number.
pub fn read_symbol_file(path: &Path) -> Result<SymbolBatch> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Parse { line: 1, msg: "empty file: missing header".into() });
    }
    for (i, name) in header.iter().enumerate() {
        if name.trim() != format!("dim_{i}") {
            return Err(Error::Parse { line: 1, msg: format!("header column {i} is `{name}`, expected `dim_{i}`") });
        }
    }
    let cols = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("`{field}` is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, msg: format!("non-finite value `{field}`") });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }
    SymbolBatch::new(values, rows, cols, format!("file:{}", path.display()))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse { line, msg: format!("{kind:?}") },
    }
}

/// Write `rows × cols` values with shortest round-trip formatting.
pub fn write_symbol_file(path: &Path, values: &[f64], cols: usize) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..cols).map(|i| format!("dim_{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in values.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

fn write_batch(path: &Path, batch: &SymbolBatch) -> Result<()> {
    write_symbol_file(path, batch.values(), batch.cols())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Per-epoch metrics as CSV with columns epoch,mse,kl,nu_hat,nll.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,mse,kl,nu_hat,nll\n");
    for m in history {
        out.push_str(&format!("{},{},{},{},{}\n", m.epoch, m.mse, m.kl, m.nu_hat, m.nll));
    }
    out
}

// ---- reports ----

fn qty(value: f64, unit: &str) -> Value {
    json!({ "value": value, "unit": unit })
}

fn qty_list(values: impl IntoIterator<Item = f64>, unit: &str) -> Value {
    json!({ "values": values.into_iter().collect::<Vec<_>>(), "unit": unit })
}

fn history_json(history: &[EpochMetrics]) -> Value {
    json!({
        "epoch": qty_list(history.iter().map(|m| m.epoch as f64), "count"),
        "mse": qty_list(history.iter().map(|m| m.mse), "squared_error_per_sample"),
        "kl": qty_list(history.iter().map(|m| m.kl), "nats_per_dimension"),
        "nu_hat": qty_list(history.iter().map(|m| m.nu_hat), "degrees_of_freedom"),
        "nll": qty_list(history.iter().map(|m| m.nll), "nats"),
    })
}

fn report(command: &str, seed: Value, config: Value, results: Value) -> Value {
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "timestamp": qty(ts as f64, "unix_seconds"),
        "seed": seed,
        "config": config,
        "results": results,
    })
}

/// The report with its `timestamp` removed, for reproducibility checks.
pub fn without_timestamp(report: &Value) -> Value {
    let mut r = report.clone();
    if let Some(obj) = r.as_object_mut() {
        obj.remove("timestamp");
    }
    r
}

fn emit(report: &Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("reports are plain JSON") + "\n";
    match path {
        Some(p) => write_file(p, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

// ---- training plans ----

/// Contents of a `train --config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainPlan {
    /// One run.
    Single {
        #[serde(default)]
        codec: CodecConfig,
        #[serde(default)]
        regime: Regime,
    },
    /// Every λ crossed with every seed.
    LambdaSweep {
        #[serde(default)]
        codec: CodecConfig,
        #[serde(default)]
        regime: Regime,
        lambdas: Vec<f64>,
        seeds: Vec<u64>,
    },
    /// Uniform against variable-entropy sources, matched seeds, λ = 0.
    EntropyVariability {
        #[serde(default)]
        codec: CodecConfig,
        seeds: Vec<u64>,
        #[serde(default = "default_g_lo")]
        g_lo: f64,
        #[serde(default = "default_g_hi")]
        g_hi: f64,
    },
}

fn default_g_lo() -> f64 {
    0.25
}

fn default_g_hi() -> f64 {
    4.0
}

fn config_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>, prefix: &str) -> Error {
    let path = e.path().to_string();
    let msg = e.into_inner().to_string();
    // unknown and missing fields are reported one level up by serde
    let name = ["unknown field `", "missing field `"]
        .iter()
        .find_map(|p| msg.split(p).nth(1).and_then(|r| r.split('`').next()));
    let mut parts: Vec<&str> = [prefix, path.as_str()].into_iter().filter(|s| !s.is_empty() && *s != ".").collect();
    if msg.contains("unknown variant `") {
        // the tag value is not a field; name the tag itself
        let tag = if prefix == "regime" { "kind" } else { "experiment" };
        if parts.last() != Some(&tag) {
            parts.push(tag);
        }
    } else if let Some(name) = name.filter(|n| parts.last() != Some(n) && !path.ends_with(&format!(".{n}"))) {
        parts.push(name);
    }
    Error::Config { field: parts.join(".").replace(".[", "["), msg }
}

fn check_numbers(obj: &Value, prefix: &str, keys: &[&str]) -> Result<()> {
    for key in keys {
        if let Some(v) = obj.get(key).filter(|v| !v.is_number()) {
            let field = if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") };
            return Err(Error::Config { field, msg: format!("expected a number, found {v}") });
        }
    }
    Ok(())
}

/// Parse a plan; errors name the offending field by its JSON path.
pub fn parse_plan(text: &str) -> Result<TrainPlan> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let value: serde_json::Value = serde_path_to_error::deserialize(de).map_err(|e| config_error(e, ""))?;
    let plan: TrainPlan = match serde_path_to_error::deserialize(&value) {
        Ok(plan) => plan,
        Err(e) => {
            // the tagged enum buffers its body and loses nested paths, so
            // re-check the nested sections on their own to name the field
            if let Some(c) = value.get("codec") {
                serde_path_to_error::deserialize::<_, CodecConfig>(c).map_err(|e| config_error(e, "codec"))?;
            }
            if let Some(r) = value.get("regime") {
                check_numbers(r, "regime", &["g_lo", "g_hi"])?;
                serde_path_to_error::deserialize::<_, Regime>(r).map_err(|e| config_error(e, "regime"))?;
            }
            check_numbers(&value, "", &["g_lo", "g_hi"])?;
            for (key, unsigned) in [("lambdas", false), ("seeds", true)] {
                if let Some(v) = value.get(key) {
                    let res = if unsigned {
                        serde_path_to_error::deserialize::<_, Vec<u64>>(v).map(|_| ())
                    } else {
                        serde_path_to_error::deserialize::<_, Vec<f64>>(v).map(|_| ())
                    };
                    res.map_err(|e| config_error(e, key))?;
                }
            }
            return Err(config_error(e, ""));
        }
    };
    let codec = match &plan {
        TrainPlan::Single { codec, .. } | TrainPlan::LambdaSweep { codec, .. } => codec,
        TrainPlan::EntropyVariability { codec, .. } => codec,
    };
    codec.validate().map_err(|e| match e {
        Error::Config { field, msg } => Error::Config { field: format!("codec.{field}"), msg },
        other => other,
    })?;
    match &plan {
        TrainPlan::LambdaSweep { lambdas, seeds, .. } => {
            if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(Error::Config { field: "lambdas".into(), msg: "need one or more finite λ >= 0".into() });
            }
            if seeds.is_empty() {
                return Err(Error::Config { field: "seeds".into(), msg: "need at least one seed".into() });
            }
        }
        TrainPlan::EntropyVariability { seeds, g_lo, g_hi, .. } => {
            if seeds.len() < 5 {
                return Err(Error::Config { field: "seeds".into(), msg: "need at least 5 seeds".into() });
            }
            if !(*g_lo > 0.0 && g_lo <= g_hi && g_hi.is_finite()) {
                return Err(Error::Config { field: "g_lo".into(), msg: "need 0 < g_lo <= g_hi".into() });
            }
        }
        TrainPlan::Single { .. } => {}
    }
    Ok(plan)
}

fn source_for(codec: &CodecConfig, regime: Regime) -> Result<SourceSpec> {
    let s = SourceSpec { dim: codec.d, regime };
    s.validate().map_err(|e| Error::Config { field: "regime".into(), msg: e.to_string() })?;
    Ok(s)
}

fn lambda_tag(l: f64) -> String {
    format!("{l:e}")
}

fn run_train(config: &Path, out_dir: &Path) -> Result<Value> {
    let text = fs::read_to_string(config)?;
    let plan = parse_plan(&text)?;
    fs::create_dir_all(out_dir)?;
    let plan_json = serde_json::to_value(&plan).expect("plan serializes");
    match plan {
        TrainPlan::Single { codec, regime } => {
            let source = source_for(&codec, regime)?;
            let mut state = TrainState::new(&codec, &source)?;
            let outcome = state.run();
            let metrics_path = out_dir.join("metrics.csv");
            write_file(&metrics_path, &metrics_csv(state.history()))?;
            outcome?;
            let symbols = state.symbol_dump(FINAL_FIT_SAMPLES)?;
            let symbols_path = out_dir.join("symbols.csv");
            write_batch(&symbols_path, &symbols)?;
            let fit = fit_nu(&symbols, codec.nu_max)?;
            let results = json!({
                "final_nu_hat": qty(fit.nu_hat, "degrees_of_freedom"),
                "final_nll": qty(fit.nll_nats, "nats"),
                "hit_upper_bound": fit.hit_upper_bound,
                "history": history_json(state.history()),
                "files": { "metrics": "metrics.csv", "symbols": "symbols.csv" },
            });
            Ok(report("train", json!(codec.seed), plan_json, results))
        }
        TrainPlan::LambdaSweep { codec, regime, lambdas, seeds } => {
            let source = source_for(&codec, regime)?;
            let runs = lambda_sweep(&codec, &source, &lambdas, &seeds)?;
            let mut out = Vec::new();
            let mut diverged = None;
            for run in &runs {
                let stem = format!("lambda={}_seed={}", lambda_tag(run.lambda), run.seed);
                let metrics = format!("metrics_{stem}.csv");
                write_file(&out_dir.join(&metrics), &metrics_csv(&run.history))?;
                let symbols = match &run.symbols {
                    Some(b) => {
                        let name = format!("symbols_{stem}.csv");
                        write_batch(&out_dir.join(&name), b)?;
                        Value::String(name)
                    }
                    None => Value::Null,
                };
                if let (None, Some(epoch)) = (diverged, run.diverged_at) {
                    diverged = Some(epoch);
                }
                out.push(json!({
                    "lambda": qty(run.lambda, "dimensionless"),
                    "seed": run.seed,
                    "diverged_at_epoch": run.diverged_at,
                    "history": history_json(&run.history),
                    "files": { "metrics": metrics, "symbols": symbols },
                }));
            }
            if let Some(epoch) = diverged {
                return Err(Error::Divergence { epoch });
            }
            Ok(report("train", json!(seeds), plan_json, json!({ "runs": out })))
        }
        TrainPlan::EntropyVariability { codec, seeds, g_lo, g_hi } => {
            let rep = entropy_variability_with(&codec, &seeds, g_lo, g_hi)?;
            let mut pairs = Vec::new();
            for p in &rep.pairs {
                let mut arm_json = serde_json::Map::new();
                for (name, arm) in [("uniform", &p.uniform), ("variable", &p.variable)] {
                    let metrics = format!("metrics_seed={}_{name}.csv", p.seed);
                    write_file(&out_dir.join(&metrics), &metrics_csv(&arm.history))?;
                    let symbols = format!("symbols_seed={}_{name}.csv", p.seed);
                    if let Some(b) = &arm.symbols {
                        write_batch(&out_dir.join(&symbols), b)?;
                    }
                    arm_json.insert(
                        name.into(),
                        json!({
                            "nu_hat": qty(arm.nu_hat, "degrees_of_freedom"),
                            "hit_upper_bound": arm.hit_upper_bound,
                            "final_mse": qty(arm.final_mse, "squared_error_per_sample"),
                            "files": { "metrics": metrics, "symbols": symbols },
                        }),
                    );
                }
                arm_json.insert("seed".into(), json!(p.seed));
                pairs.push(Value::Object(arm_json));
            }
            let results = json!({
                "pairs": pairs,
                "fraction_variable_lower": qty(rep.fraction_variable_lower, "fraction"),
                "median_gap": qty(rep.median_gap, "degrees_of_freedom"),
                "seed_spread": qty(rep.seed_spread, "degrees_of_freedom"),
            });
            Ok(report("train", json!(seeds), plan_json, results))
        }
    }
}

// ---- other commands ----

fn run_fit(input: &Path, nu_max: f64, qq: Option<&Path>) -> Result<(Value, PathBuf)> {
    let batch = read_symbol_file(input)?;
    let fit = fit_nu(&batch, nu_max)?;
    let (ys, _) = standardize(&batch)?;
    let std_batch = SymbolBatch::new(ys, batch.rows(), batch.cols(), "standardized")?;
    let fitted = TailModel::student_t(fit.nu_hat)?;
    let baselines = [("fitted", fitted), ("gaussian", TailModel::Gaussian), ("cauchy", TailModel::Cauchy)];
    let mut nlls = serde_json::Map::new();
    let mut best = ("", f64::INFINITY);
    for (name, model) in baselines {
        let v = nll(&std_batch, &model);
        if v < best.1 {
            best = (name, v);
        }
        nlls.insert(name.into(), json!({ "model": model.label(), "nll": qty(v, "nats") }));
    }
    let qq_path = qq.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = input.as_os_str().to_owned();
        p.push(".qq.csv");
        PathBuf::from(p)
    });
    let points = qq_data(&std_batch, &fitted, QQ_POINTS)?;
    let mut csv = String::from("level,empirical_q,model_q\n");
    for p in &points {
        csv.push_str(&format!("{},{},{}\n", p.level, p.empirical_q, p.model_q));
    }
    write_file(&qq_path, &csv)?;
    let results = json!({
        "samples": qty(batch.rows() as f64, "count"),
        "dimensions": qty(batch.cols() as f64, "count"),
        "nu_hat": qty(fit.nu_hat, "degrees_of_freedom"),
        "hit_upper_bound": fit.hit_upper_bound,
        "nu_max": qty(nu_max, "degrees_of_freedom"),
        "nll": Value::Object(nlls),
        "lowest_nll_baseline": best.0,
        "standardization": fit.standardization.iter()
            .map(|&(m, s)| json!({ "mean": qty(m, "symbol_units"), "std": qty(s, "symbol_units") }))
            .collect::<Vec<_>>(),
        "qq_file": qq_path.file_name().map(|f| f.to_string_lossy().into_owned()),
    });
    let config = json!({ "input": input.file_name().map(|f| f.to_string_lossy().into_owned()), "nu_max": nu_max });
    Ok((report("fit", Value::Null, config, results), qq_path))
}

fn run_kl(input: &Path, target: &str, mode: KdeMode) -> Result<Value> {
    let model = TailModel::parse(target)?;
    let batch = read_symbol_file(input)?;
    let est = KdeEstimate::build(&batch, mode)?;
    let kl = kl_kde_vs_model(&est, &model)?;
    let results = json!({
        "kl": qty(kl.nats, "nats_per_dimension"),
        "truncation_error": qty(kl.error_estimate, "nats_per_dimension"),
        "bandwidths": qty_list(est.bandwidths(), "symbol_units"),
    });
    let config = json!({
        "input": input.file_name().map(|f| f.to_string_lossy().into_owned()),
        "target": model.label(),
        "mode": mode,
    });
    Ok(report("kl", Value::Null, config, results))
}

#[allow(clippy::too_many_arguments)]
fn run_maxent(
    alpha: f64,
    sigma2: f64,
    c_bits: f64,
    half_width: f64,
    points: usize,
    perturbations: usize,
    seed: u64,
    density: &Path,
) -> Result<Value> {
    let params = PayloadParams::new(alpha, sigma2)?;
    let sol = solve_maxent(&params, c_bits, half_width, points)?;
    let check = check_perturbations(&sol, &params, perturbations.max(20), seed);
    let mut csv = String::from("y,mass,density\n");
    for (i, y) in sol.grid.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", y, sol.density[i], sol.pdf_at(i)));
    }
    write_file(density, &csv)?;
    let results = json!({
        "lambda": qty(sol.lambda, "dimensionless"),
        "nu_equivalent": qty(2.0 * sol.lambda - 1.0, "degrees_of_freedom"),
        "payload": qty(sol.payload_bits, "bits"),
        "entropy": qty(sol.entropy_nats, "nats"),
        "variance": qty(sol.variance(), "symbol_units_squared"),
        "tail_mass": qty(sol.tail_mass, "probability"),
        "stationarity_residual": qty(sol.stationarity_residual(&params), "nats"),
        "perturbations": qty(check.perturbations as f64, "count"),
        "violations": qty(check.violations as f64, "count"),
        "max_violation": qty(check.max_violation, "nats"),
        "min_margin": qty(check.min_margin, "nats"),
        "max_payload_mismatch": qty(check.max_payload_mismatch_bits, "bits"),
        "density_file": density.file_name().map(|f| f.to_string_lossy().into_owned()),
    });
    let config = json!({
        "alpha": alpha, "sigma2": sigma2, "payload_bits": c_bits,
        "half_width": half_width, "points": points, "perturbations": perturbations.max(20),
    });
    Ok(report("maxent", json!(seed), config, results))
}

fn run_mi(model: &str, snrs: &[f64], n: usize, seed: u64) -> Result<Value> {
    let model = TailModel::parse(model)?;
    let mut rows = Vec::new();
    for &snr in snrs {
        let ch = ChannelConfig::from_snr_db(snr)?;
        let est = mutual_information(&model, &ch, n, seed)?;
        rows.push(json!({
            "snr": qty(snr, "dB"),
            "mi": qty(est.bits, "bits"),
            "std_error": qty(est.std_error_bits, "bits"),
            "awgn_capacity": qty(awgn_capacity(&ch), "bits"),
        }));
    }
    let config = json!({ "model": model.label(), "snr_db": snrs, "n": n });
    Ok(report("mi", json!(seed), config, json!({ "sweep": rows })))
}

fn run_sample(model: &str, n: usize, seed: u64, output: &Path) -> Result<Value> {
    let model = TailModel::parse(model)?;
    if n == 0 {
        write_symbol_file(output, &[], 1)?;
    } else {
        write_batch(output, &model.sample(n, seed)?)?;
    }
    let config = json!({ "model": model.label(), "n": n });
    let results = json!({
        "written": qty(n as f64, "count"),
        "output": output.file_name().map(|f| f.to_string_lossy().into_owned()),
    });
    Ok(report("sample", json!(seed), config, results))
}

/// Run one parsed invocation.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit { input, nu_max, qq, report } => {
            let (r, _) = run_fit(input, *nu_max, qq.as_deref())?;
            emit(&r, report.as_deref())
        }
        Command::Kl { input, target, mode, report } => emit(&run_kl(input, target, *mode)?, report.as_deref()),
        Command::Maxent { alpha, sigma2, payload_bits, half_width, points, perturbations, seed, density, report } => {
            let r = run_maxent(*alpha, *sigma2, *payload_bits, *half_width, *points, *perturbations, *seed, density)?;
            emit(&r, report.as_deref())
        }
        Command::Mi { model, snr_db, n, seed, report } => emit(&run_mi(model, snr_db, *n, *seed)?, report.as_deref()),
        Command::Train { config, out_dir, report } => emit(&run_train(config, out_dir)?, report.as_deref()),
        Command::Sample { model, n, seed, output, report } => {
            emit(&run_sample(model, *n, *seed, output)?, report.as_deref())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let vals = vec![0.1, -1.0 / 3.0, 1e-300, 2.5e17, std::f64::consts::PI, -0.0];
        write_symbol_file(&path, &vals, 2).unwrap();
        let back = read_symbol_file(&path).unwrap();
        assert_eq!((back.rows(), back.cols()), (3, 2));
        for (a, b) in vals.iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn parse_errors_carry_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "dim_0,dim_1\n1,2\n3,x\n").unwrap();
        match read_symbol_file(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "dim_0,dim_1\n1,2\n3\n").unwrap();
        assert!(matches!(read_symbol_file(&p), Err(Error::Parse { line: 3, .. })));
        fs::write(&p, "").unwrap();
        assert!(matches!(read_symbol_file(&p), Err(Error::Parse { line: 1, .. })));
        fs::write(&p, "dim_0\n").unwrap();
        assert!(matches!(read_symbol_file(&p), Err(Error::Parse { .. })));
        fs::write(&p, "dim_0\ninf\n").unwrap();
        assert!(matches!(read_symbol_file(&p), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_symbol_file(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn plan_errors_name_fields() {
        let field = |text: &str| match parse_plan(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field(r#"{"experiment":"single","codec":{"lamda":1}}"#), "codec.lamda");
        assert_eq!(field(r#"{"experiment":"single","codec":{"lambda":"x"}}"#), "codec.lambda");
        assert_eq!(field(r#"{"experiment":"single","codec":{"k":20}}"#), "codec.k");
        assert_eq!(field(r#"{"experiment":"lambda_sweep","lambdas":[0]}"#), "seeds");
        assert_eq!(field(r#"{"experiment":"entropy_variability","seeds":[1,2]}"#), "seeds");
        assert_eq!(field(r#"{"experiment":"bogus"}"#), "experiment");
        assert_eq!(field(r#"{"experiment":"lambda_sweep","lambdas":[0,"x"],"seeds":[1]}"#), "lambdas[1]");
        assert_eq!(field(r#"{"experiment":"single","regime":{"kind":"odd"}}"#), "regime.kind");
        assert_eq!(field(r#"{"experiment":"single","regime":{"kind":"variable_entropy","g_lo":"a","g_hi":1}}"#), "regime.g_lo");
        assert!(parse_plan(r#"{"experiment":"single"}"#).is_ok());
    }
}

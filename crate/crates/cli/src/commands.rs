//! The four commands: simulate, estimate, analyze and the EEG-shaped reproduction.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use frodest_core::analysis::analyze;
use frodest_core::io::{read_trajectory_csv, write_estimation_csv, write_trajectory_csv, EstimationRow, Table};
use frodest_core::simulator::{synth_eeg_scenario, EEG_SAMPLES};
use frodest_core::{
    batch_wls_oracle, build_v_approximation, expand_model, me_run, simulate_exact, EstimatorConfig, ExpandedModel,
    FodnModel, Trajectory,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Experiment;
use crate::error::CliError;

/// Environment variable capping the worker threads of `repro-eeg`.
pub const THREADS_ENV: &str = "FRODEST_THREADS";

/// Estimator weights of the EEG reproduction: `Q = 0.01·I`, `R = 0.01·I`, `P0 = I`, zero prior.
pub const EEG_WEIGHTS: (f64, f64, f64) = (0.01, 0.01, 1.0);

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record of one command run, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// Hash over the resolved configuration (paths excluded) and every input file.
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub results: Value,
}

impl Manifest {
    fn new(command: &str, seed: u64, config: Value, inputs: BTreeMap<String, String>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&config).expect("json value"));
        for (name, digest) in &inputs {
            hasher.update(name.as_bytes());
            hasher.update(digest.as_bytes());
        }
        Manifest {
            command: command.into(),
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_hash: hex::encode(hasher.finalize()),
            inputs,
            outputs: Vec::new(),
            results: Value::Null,
        }
    }

    fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_output(dir, "manifest.json", text.as_bytes())
    }
}

fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn experiment_manifest(command: &str, exp: &Experiment, extra_inputs: &[(&str, &[u8])]) -> Manifest {
    let mut config = serde_json::to_value(&exp.config).expect("config serializes");
    config["model_path"] = Value::Null;
    config["outputs"] = Value::Null;
    let mut inputs = BTreeMap::new();
    inputs.insert("model".to_string(), sha256_hex(&exp.model_bytes));
    for (name, bytes) in extra_inputs {
        inputs.insert(name.to_string(), sha256_hex(bytes));
    }
    Manifest::new(command, exp.config.seed, config, inputs)
}

fn simulate_trajectory(exp: &Experiment) -> Result<Trajectory, CliError> {
    let (x0, w, v) = exp.initial_state_and_noise();
    Ok(simulate_exact(&exp.model, &exp.inputs(), &w, &v, &x0, exp.config.horizon)?)
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub trajectory: PathBuf,
    pub manifest: PathBuf,
}

/// Exact simulation of the configured scenario, written as `trajectory.csv`.
pub fn cmd_simulate(exp: &Experiment) -> Result<SimulateOutcome, CliError> {
    let traj = simulate_trajectory(exp)?;
    let mut csv = Vec::new();
    write_trajectory_csv(&mut csv, &traj, exp.model.dims())?;
    let out = &exp.config.outputs;
    let trajectory = write_output(out, "trajectory.csv", &csv)?;
    let mut manifest = experiment_manifest("simulate", exp, &[]);
    manifest.outputs = vec!["trajectory.csv".into()];
    manifest.results = json!({ "steps": traj.horizon() });
    let manifest = manifest.write(out)?;
    Ok(SimulateOutcome { trajectory, manifest })
}

#[derive(Debug, Clone, Default)]
pub struct EstimateOptions {
    /// Measured trajectory; simulated from the configuration when absent.
    pub trajectory: Option<PathBuf>,
    /// Also solve the batch problem and report the terminal discrepancy.
    pub oracle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleDiscrepancy {
    pub absolute: f64,
    /// `‖x̂[N] - x̄[N]‖ / (1 + ‖x̄[N]‖)`
    pub relative: f64,
}

#[derive(Debug, Clone)]
pub struct EstimateOutcome {
    pub estimation: PathBuf,
    pub manifest: PathBuf,
    pub rows: Vec<EstimationRow>,
    pub oracle: Option<OracleDiscrepancy>,
}

fn load_measured(exp: &Experiment, path: &Path) -> Result<(Trajectory, Vec<u8>), CliError> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Config(format!("cannot read trajectory {}: {e}", path.display())))?;
    let parsed = read_trajectory_csv(bytes.as_slice())
        .map_err(|e| CliError::Config(format!("trajectory {}: {e}", path.display())))?;
    let (got, want) = (parsed.dims, exp.model.dims());
    let checks = [("x", got.n, want.n), ("u", got.m, want.m), ("w", got.p, want.p), ("z", got.q, want.q)];
    for (col, found, expected) in checks {
        // state and disturbance columns are optional in measured data
        let optional = matches!(col, "x" | "w") && found == 0;
        if found != expected && !optional {
            return Err(CliError::Config(format!(
                "trajectory {} has {found} {col}_* columns, the model needs {expected}",
                path.display()
            )));
        }
    }
    if want.m > 0 && parsed.trajectory.inputs.is_empty() {
        return Err(CliError::Config(format!("trajectory {} has empty u_* columns", path.display())));
    }
    Ok((parsed.trajectory, bytes))
}

/// Runs the recursive estimator on measured or simulated data, written as `estimation.csv`.
pub fn cmd_estimate(exp: &Experiment, opts: &EstimateOptions) -> Result<EstimateOutcome, CliError> {
    let (traj, traj_bytes) = match &opts.trajectory {
        Some(path) => {
            let (t, b) = load_measured(exp, path)?;
            (t, Some(b))
        }
        None => (simulate_trajectory(exp)?, None),
    };
    let v = exp.config.v;
    let expanded = expand_model(&exp.model, v)?;
    let vapprox = build_v_approximation(&expanded, &exp.model, v)?;
    let config = exp.estimator_config(&vapprox)?;
    let run = me_run(&vapprox, &config, &traj.inputs, &traj.outputs)?;
    let layout = vapprox.layout();

    let mut rows = Vec::with_capacity(run.len());
    for st in &run {
        let k = st.k;
        let (y, y_hat) = match k {
            0 => (None, None),
            _ => (traj.output(k).cloned(), Some(vapprox.c_at(k)? * &st.x_hat)),
        };
        rows.push(EstimationRow {
            k,
            x_hat: st.x_hat.clone(),
            y,
            y_hat,
            err_norm: traj.lifted_state(layout, k).map(|x| (&st.x_hat - x).norm()),
            trace_p: st.p.trace(),
        });
    }

    let oracle = if opts.oracle {
        let n_steps = traj.horizon();
        let batch = batch_wls_oracle(&vapprox, &config, &traj.inputs, &traj.outputs, n_steps)?;
        let absolute = (&run[n_steps].x_hat - &batch.x_terminal).norm();
        Some(OracleDiscrepancy {
            absolute,
            relative: absolute / (1.0 + batch.x_terminal.norm()),
        })
    } else {
        None
    };

    let mut csv = Vec::new();
    write_estimation_csv(&mut csv, &rows, vapprox.dim(), vapprox.output_dim())?;
    let out = &exp.config.outputs;
    let estimation = write_output(out, "estimation.csv", &csv)?;
    let extra: Vec<(&str, &[u8])> = traj_bytes.as_deref().map(|b| ("trajectory", b)).into_iter().collect();
    let mut manifest = experiment_manifest("estimate", exp, &extra);
    manifest.outputs = vec!["estimation.csv".into()];
    manifest.results = json!({
        "steps": traj.horizon(),
        "lifted_dim": vapprox.dim(),
        "final_trace_P": rows.last().map(|r| r.trace_p),
        "oracle_discrepancy": oracle,
    });
    let manifest = manifest.write(out)?;
    Ok(EstimateOutcome { estimation, manifest, rows, oracle })
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub report: PathBuf,
    pub manifest: PathBuf,
    pub document: Value,
}

/// Assumption check plus covariance and stability constants, written as `analysis.json`.
///
/// Failed assumptions are part of the report, not an error.
pub fn cmd_analyze(exp: &Experiment) -> Result<AnalyzeOutcome, CliError> {
    let v = exp.config.v;
    let expanded = expand_model(&exp.model, v)?;
    let vapprox = build_v_approximation(&expanded, &exp.model, v)?;
    let config = exp.estimator_config(&vapprox)?;
    let report = analyze(&vapprox, &config, exp.config.window_cap, None)?;
    let mut document = report.to_json();
    document["v"] = json!(v);
    document["lifted_dim"] = json!(vapprox.dim());
    let mut text = serde_json::to_string_pretty(&document).expect("report serializes");
    text.push('\n');
    let out = &exp.config.outputs;
    let report_path = write_output(out, "analysis.json", text.as_bytes())?;
    let mut manifest = experiment_manifest("analyze", exp, &[]);
    manifest.outputs = vec!["analysis.json".into()];
    manifest.results = json!({ "all_satisfied": report.assumptions.satisfied.all() });
    let manifest = manifest.write(out)?;
    Ok(AnalyzeOutcome { report: report_path, manifest, document })
}

/// Estimator run on the EEG-shaped scenario for one memory depth.
#[derive(Debug, Clone)]
pub struct EegRun {
    pub v: usize,
    /// `k, y_1..y_q, yhat_1..yhat_q` for `k = 1..=N`.
    pub output: Table,
    /// `k, meas_err_1..meas_err_q, est_err_1..est_err_n` for `k = 1..=N`.
    pub error: Table,
    /// `max_{k ≥ 1} ‖x̂[k] - x[k]‖` over the network state.
    pub sup_error: f64,
    pub rms_error: f64,
}

fn headers(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |i| format!("{prefix}_{i}"))
}

pub fn eeg_run(model: &FodnModel, traj: &Trajectory, expanded: &ExpandedModel, v: usize) -> Result<EegRun, CliError> {
    let vapprox = build_v_approximation(expanded, model, v)?;
    let (q_w, r_w, p_w) = EEG_WEIGHTS;
    let config = EstimatorConfig::isotropic(&vapprox, q_w, r_w, p_w)?;
    let run = me_run(&vapprox, &config, &traj.inputs, &traj.outputs)?;
    let dims = model.dims();

    let mut output = Table {
        headers: std::iter::once("k".to_string()).chain(headers("y", dims.q)).chain(headers("yhat", dims.q)).collect(),
        rows: Vec::new(),
    };
    let mut error = Table {
        headers: std::iter::once("k".to_string())
            .chain(headers("meas_err", dims.q))
            .chain(headers("est_err", dims.n))
            .collect(),
        rows: Vec::new(),
    };
    let (mut sup, mut sq) = (0.0f64, 0.0);
    for st in &run[1..] {
        let k = st.k;
        let y = traj.output(k).expect("one output per step");
        let y_hat = vapprox.c_at(k)? * &st.x_hat;
        let est_err = vapprox.leading_state(&st.x_hat) - &traj.states[k];
        sup = sup.max(est_err.norm());
        sq += est_err.norm_squared();
        let kf = Some(k as f64);
        output.rows.push(std::iter::once(kf).chain(y.iter().chain(y_hat.iter()).map(|v| Some(*v))).collect());
        let meas_err = y - &y_hat;
        error.rows.push(std::iter::once(kf).chain(meas_err.iter().chain(est_err.iter()).map(|v| Some(*v))).collect());
    }
    let steps = (run.len() - 1).max(1) as f64;
    Ok(EegRun { v, output, error, sup_error: sup, rms_error: (sq / steps).sqrt() })
}

/// Worker pool sized by [`THREADS_ENV`], or rayon's default when unset.
pub fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(text) = std::env::var(THREADS_ENV) {
        let n: usize = text
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {text:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone)]
pub struct ReproOutcome {
    pub runs: Vec<EegRun>,
    pub files: Vec<PathBuf>,
}

/// Synthetic EEG scenario estimated once per memory depth in `v_list`.
///
/// Writes `output_v{v}.csv` and `error_v{v}.csv` per depth, plus the shared
/// `trajectory.csv`, `summary.json` and `manifest.json`.
pub fn cmd_repro_eeg(seed: u64, v_list: &[usize], out: &Path) -> Result<ReproOutcome, CliError> {
    if v_list.is_empty() {
        return Err(CliError::Config("v list must not be empty".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &v in v_list {
        if !(1..=EEG_SAMPLES).contains(&v) {
            return Err(CliError::Config(format!("memory depth {v} is outside 1..={EEG_SAMPLES}")));
        }
        if !seen.insert(v) {
            return Err(CliError::Config(format!("memory depth {v} is listed twice")));
        }
    }
    let (model, traj) = synth_eeg_scenario(seed)?;
    let max_v = *v_list.iter().max().expect("non-empty");
    let expanded = expand_model(&model, max_v)?;
    let pool = worker_pool()?;
    let runs = pool.install(|| {
        v_list
            .par_iter()
            .map(|&v| eeg_run(&model, &traj, &expanded, v))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut files = Vec::new();
    let mut names = Vec::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> Result<(), CliError> {
        files.push(write_output(out, &name, &bytes)?);
        names.push(name);
        Ok(())
    };
    let mut csv = Vec::new();
    write_trajectory_csv(&mut csv, &traj, model.dims())?;
    emit("trajectory.csv".into(), csv)?;
    for run in &runs {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        run.output.write(&mut a)?;
        run.error.write(&mut b)?;
        emit(format!("output_v{}.csv", run.v), a)?;
        emit(format!("error_v{}.csv", run.v), b)?;
    }
    let summary = json!({
        "seed": seed,
        "samples": EEG_SAMPLES,
        "weights": { "Q": EEG_WEIGHTS.0, "R": EEG_WEIGHTS.1, "P0": EEG_WEIGHTS.2 },
        "runs": runs.iter().map(|r| json!({ "v": r.v, "sup_error": r.sup_error, "rms_error": r.rms_error })).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    emit("summary.json".into(), text.into_bytes())?;

    let mut manifest = Manifest::new("repro-eeg", seed, json!({ "v_list": v_list }), BTreeMap::new());
    manifest.outputs = names;
    manifest.results = summary["runs"].clone();
    files.push(manifest.write(out)?);
    Ok(ReproOutcome { runs, files })
}

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` are reported as FAIL but do not fail the
//! target, provided they still fail; anything else that fails exits non-zero.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::{
    direct_simulation, lift_truth, random_model, random_model_with_orders, random_stable_instance, relative_gap, rng, spd_inverse,
    uniform_matrix, uniform_vector,
};
use frodest::{cmd_analyze, cmd_estimate, cmd_repro_eeg, cmd_simulate, EstimateOptions, Experiment, Overrides};
use frodest_core::analysis::{covariance_bounds, iss_constants};
use frodest_core::model::Dims;
use frodest_core::simulator::gen_bounded_noise;
use frodest_core::{
    batch_wls_oracle, build_v_approximation, expand_model, gl_coefficients, me_run, residual_r, simulate_exact,
    simulate_vapprox, EstimatorConfig, NoiseBounds, Schedule, VApprox,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const ORACLE_TOL: f64 = 1e-8;
const ORACLE_INSTANCES: u64 = 120;
const ORACLE_BUDGET_S: f64 = 10.0;
const LIFT_TOL: f64 = 1e-10;
const LIFT_MODELS: u64 = 60;
const INFO_TOL: f64 = 1e-9;
const STABLE_SYSTEMS: u64 = 20;
const STABLE_HORIZON: usize = 200;
const ISS_NOISE_SEEDS: u64 = 5;
const EEG_SEEDS: u64 = 10;
const EEG_BUDGET_S: f64 = 30.0;
const EEG_SAMPLES: usize = 150;
const EEG_CHANNELS: usize = 4;

/// The exact factorial bound does not hold for non-integer orders.
const KNOWN_UNATTAINABLE: &[u32] = &[3];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn spd(r: &mut ChaCha8Rng, side: usize) -> DMatrix<f64> {
    let l = uniform_matrix(r, side, side, 0.4);
    &l * l.transpose() + DMatrix::identity(side, side) * 0.5
}

struct FilterInstance {
    vapprox: VApprox,
    config: EstimatorConfig,
    inputs: Vec<DVector<f64>>,
    measurements: Vec<DVector<f64>>,
}

fn filter_instance(seed: u64, max_m: usize) -> FilterInstance {
    let mut r = rng(seed);
    let n = r.random_range(1..=3);
    let dims = Dims { n, m: r.random_range(0..=max_m), p: r.random_range(0..=2), q: r.random_range(1..=n) };
    let v = r.random_range(1..=3);
    let n_steps = r.random_range(1..=10);
    let model = random_model(&mut r, dims);
    let expanded = expand_model(&model, n_steps.max(v)).unwrap();
    let vapprox = build_v_approximation(&expanded, &model, v).unwrap();
    let inputs: Vec<_> = (0..n_steps).map(|_| uniform_vector(&mut r, dims.m, 1.0)).collect();
    let (w, noise) = gen_bounded_noise(NoiseBounds::new(0.1, 0.1).unwrap(), dims.p, dims.q, n_steps, seed);
    let x0 = uniform_vector(&mut r, n, 1.0);
    let traj = simulate_exact(&model, &inputs, &w, &noise, &x0, n_steps).unwrap();
    let d = vapprox.dim();
    let config = EstimatorConfig::new(
        Schedule::constant(spd(&mut r, n)),
        Schedule::constant(spd(&mut r, dims.q)),
        spd(&mut r, d),
        uniform_vector(&mut r, d, 0.5),
    )
    .unwrap();
    FilterInstance { vapprox, config, inputs, measurements: traj.outputs }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..ORACLE_INSTANCES {
        let inst = filter_instance(10_000 + seed, 1);
        let run = me_run(&inst.vapprox, &inst.config, &inst.inputs, &inst.measurements).unwrap();
        let n_steps = inst.measurements.len();
        let batch = batch_wls_oracle(&inst.vapprox, &inst.config, &inst.inputs, &inst.measurements, n_steps).unwrap();
        worst = worst.max(relative_gap(&run[n_steps].x_hat, &batch.x_terminal));
    }
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "oracle equivalence",
        pass: worst <= ORACLE_TOL && elapsed < ORACLE_BUDGET_S,
        detail: format!(
            "{ORACLE_INSTANCES} instances, worst relative gap {worst:.2e} (tol {ORACLE_TOL:.0e}), {elapsed:.2} s (budget {ORACLE_BUDGET_S} s)"
        ),
    }
}

fn lift_exactness() -> Outcome {
    // per step: the lifted update applied to the exact lifted state, every order up to 1.9;
    // free-running: the whole lifted recursion, orders up to 1
    let mut worst_step: f64 = 0.0;
    let mut worst_run: f64 = 0.0;
    let mut all_match_direct = true;
    for seed in 0..LIFT_MODELS {
        for free_running in [false, true] {
            let mut r = rng(20_000 + seed);
            let n = r.random_range(1..=3);
            let dims = Dims { n, m: r.random_range(0..=1), p: r.random_range(0..=2), q: r.random_range(1..=n) };
            let v = r.random_range(1..=4);
            let n_steps = r.random_range(1..=40);
            let model = if free_running {
                random_model_with_orders(&mut r, dims, 1.0)
            } else {
                random_model(&mut r, dims)
            };
            let u: Vec<_> = (0..n_steps).map(|_| uniform_vector(&mut r, dims.m, 1.0)).collect();
            let (w, noise) = gen_bounded_noise(NoiseBounds::new(0.1, 0.1).unwrap(), dims.p, dims.q, n_steps, seed);
            let x0 = uniform_vector(&mut r, n, 1.0);
            let traj = simulate_exact(&model, &u, &w, &noise, &x0, n_steps).unwrap();
            let direct = direct_simulation(&model, &u, &w, &x0, n_steps);
            all_match_direct &= traj.states.iter().zip(&direct).all(|(a, b)| (a - b).norm() <= LIFT_TOL * b.norm().max(1.0));
            let expanded = expand_model(&model, n_steps.max(v)).unwrap();
            let va = build_v_approximation(&expanded, &model, v).unwrap();
            let residuals: Vec<_> = (0..n_steps).map(|k| residual_r(&traj, &expanded, v, k).unwrap()).collect();
            if free_running {
                let lifted =
                    simulate_vapprox(&va, &u, &residuals, &noise, &va.initial_state(&x0).unwrap(), n_steps).unwrap();
                for k in 0..=n_steps {
                    let exact = &traj.states[k];
                    let gap = (va.leading_state(&lifted.states[k]) - exact).norm() / exact.norm().max(1.0);
                    worst_run = worst_run.max(gap);
                }
            } else {
                for (k, rk) in residuals.iter().enumerate() {
                    let next = &va.a_tilde * lift_truth(&traj, va.layout(), k) + &va.b_tilde * &u[k] + &va.g_tilde * rk;
                    let truth = lift_truth(&traj, va.layout(), k + 1);
                    worst_step = worst_step.max((&next - &truth).norm() / truth.norm().max(1.0));
                }
            }
        }
    }
    Outcome {
        id: 2,
        name: "lift exactness",
        pass: worst_step <= LIFT_TOL && worst_run <= LIFT_TOL && all_match_direct,
        detail: format!(
            "{LIFT_MODELS} models, per-step worst {worst_step:.2e}, free-running (orders ≤ 1) worst {worst_run:.2e} (tol {LIFT_TOL:.0e}), exact simulation matches direct solve: {all_match_direct}"
        ),
    }
}

fn ln_factorial(j: usize) -> f64 {
    (1..=j).map(|i| (i as f64).ln()).sum()
}

fn coefficient_bound() -> Outcome {
    let mut violations = Vec::new();
    for alpha in [0.1, 0.5, 1.0, 1.5, 2.0] {
        let c = gl_coefficients(alpha, 50).unwrap();
        let first = (0..=50).find(|&j| {
            let cj = c.get(j).unwrap().abs();
            cj > 0.0 && cj.ln() > j as f64 * f64::ln(alpha) - ln_factorial(j) + 1e-12
        });
        if let Some(j) = first {
            violations.push(format!("α = {alpha}: j = {j}, |c| = {:.4e} > {:.4e}", c.get(j).unwrap().abs(), alpha.powi(j as i32) / ln_factorial(j).exp()));
        }
    }
    let unit = gl_coefficients(1.0, 50).unwrap();
    let collapse = unit.values()[0] == 1.0 && unit.values()[1] == -1.0 && unit.values()[2..].iter().all(|&c| c == 0.0);
    let detail = if violations.is_empty() {
        format!("bound holds for every α, j ≤ 50; integer collapse exact: {collapse}")
    } else {
        format!("integer collapse exact: {collapse}; bound violated at {}", violations.join("; "))
    };
    Outcome { id: 3, name: "coefficient bound", pass: violations.is_empty() && collapse, detail }
}

fn information_form() -> Outcome {
    // needs an invertible prediction covariance, which requires no input registers
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for seed in 0..ORACLE_INSTANCES {
        let inst = filter_instance(30_000 + seed, 0);
        let run = me_run(&inst.vapprox, &inst.config, &inst.inputs, &inst.measurements).unwrap();
        let r_inv = spd_inverse(inst.config.r.at(1).unwrap());
        for (k, st) in run.iter().enumerate().skip(1) {
            let c = inst.vapprox.c_at(k).unwrap();
            let p_inv = spd_inverse(&st.p);
            let m_inv = spd_inverse(st.last_m.as_ref().unwrap());
            worst = worst.max((&p_inv - m_inv - c.transpose() * &r_inv * c).norm() / p_inv.norm());
            steps += 1;
        }
    }
    Outcome {
        id: 4,
        name: "information form",
        pass: worst <= INFO_TOL,
        detail: format!("{ORACLE_INSTANCES} input-free runs, {steps} steps, worst relative gap {worst:.2e} (tol {INFO_TOL:.0e})"),
    }
}

fn eig_range(p: &DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(p.clone()).eigenvalues;
    (e.min(), e.max())
}

fn covariance_containment() -> Outcome {
    let mut failures = Vec::new();
    let mut tightest: f64 = f64::INFINITY;
    for seed in 0..STABLE_SYSTEMS {
        let inst = random_stable_instance(&mut rng(1000 + seed));
        let cov = covariance_bounds(&inst.vapprox, &inst.config, &inst.report).unwrap();
        let ys = vec![DVector::zeros(inst.vapprox.output_dim()); STABLE_HORIZON];
        let run = me_run(&inst.vapprox, &inst.config, &[], &ys).unwrap();
        let start = inst.report.n_c.unwrap().max(inst.report.n_o.unwrap());
        for st in &run[start..] {
            let (lo, hi) = eig_range(&st.p);
            tightest = tightest.min((lo / cov.pi_lo).min(cov.pi_hi / hi));
            if lo < cov.pi_lo || hi > cov.pi_hi {
                failures.push(format!("system {seed} k {}", st.k));
            }
        }
    }
    Outcome {
        id: 5,
        name: "covariance containment",
        pass: failures.is_empty(),
        detail: format!(
            "{STABLE_SYSTEMS} systems, k ≤ {STABLE_HORIZON}, {} violations, tightest slack ratio {tightest:.3}",
            failures.len()
        ),
    }
}

fn iss_envelope() -> Outcome {
    let mut failures = Vec::new();
    let mut all_contract = true;
    let mut max_ratio: f64 = 0.0;
    for seed in 0..STABLE_SYSTEMS {
        let inst = random_stable_instance(&mut rng(1000 + seed));
        let cov = covariance_bounds(&inst.vapprox, &inst.config, &inst.report).unwrap();
        let iss = iss_constants(&inst.vapprox, &inst.config, &inst.report, &cov, None).unwrap();
        all_contract &= iss.contracts();
        let dims = inst.model.dims();
        let expanded = expand_model(&inst.model, STABLE_HORIZON).unwrap();
        let layout = inst.vapprox.layout();
        let k0 = inst.report.n_c.unwrap().max(inst.report.n_o.unwrap());
        for noise_seed in 0..ISS_NOISE_SEEDS {
            let mut r = rng(seed * 100 + noise_seed);
            let x0 = uniform_vector(&mut r, dims.n, 2.0);
            let (w, v) = gen_bounded_noise(NoiseBounds::new(0.05, 0.05).unwrap(), dims.p, dims.q, STABLE_HORIZON, noise_seed);
            let traj = simulate_exact(&inst.model, &[], &w, &v, &x0, STABLE_HORIZON).unwrap();
            let run = me_run(&inst.vapprox, &inst.config, &[], &traj.outputs).unwrap();
            let err = |k: usize| (&run[k].x_hat - lift_truth(&traj, layout, k)).norm();
            let e0 = err(k0);
            let (mut max_r, mut max_v) = (0.0_f64, 0.0_f64);
            for k in k0 + 1..=STABLE_HORIZON {
                max_r = max_r.max(residual_r(&traj, &expanded, layout.v, k - 1).unwrap().norm());
                max_v = max_v.max(v[k - 1].norm());
                let bound = iss.envelope(e0, k - k0, max_r, max_v);
                max_ratio = max_ratio.max(err(k) / bound);
                if err(k) > bound {
                    failures.push(format!("system {seed} seed {noise_seed} k {k}"));
                }
            }
        }
    }
    Outcome {
        id: 6,
        name: "ISS envelope",
        pass: failures.is_empty() && all_contract,
        detail: format!(
            "{STABLE_SYSTEMS} systems × {ISS_NOISE_SEEDS} noise seeds, τ < 1 for all: {all_contract}, {} violations, worst error/bound {max_ratio:.3}",
            failures.len()
        ),
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn eeg_shape() -> Outcome {
    let start = Instant::now();
    let depths = [2, 10, 20];
    let mut sup = vec![Vec::new(); depths.len()];
    let mut shape_ok = true;
    for seed in 0..EEG_SEEDS {
        let dir = tempfile::TempDir::new().unwrap();
        let done = cmd_repro_eeg(seed, &depths, dir.path()).unwrap();
        for (i, run) in done.runs.iter().enumerate() {
            sup[i].push(run.sup_error);
            for table in [&run.output, &run.error] {
                shape_ok &= table.rows.len() == EEG_SAMPLES && table.headers.len() == 1 + 2 * EEG_CHANNELS;
            }
            for kind in ["output", "error"] {
                shape_ok &= dir.path().join(format!("{kind}_v{}.csv", run.v)).is_file();
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let medians: Vec<f64> = sup.into_iter().map(median).collect();
    Outcome {
        id: 7,
        name: "EEG scenario shape",
        pass: shape_ok && medians[2] <= medians[0] && elapsed < EEG_BUDGET_S,
        detail: format!(
            "{EEG_SEEDS} seeds, median sup error v=2 {:.4}, v=10 {:.4}, v=20 {:.4}, shapes ok: {shape_ok}, {elapsed:.2} s (budget {EEG_BUDGET_S} s)",
            medians[0], medians[1], medians[2]
        ),
    }
}

const DET_MODEL: &str = r#"{
    "state_terms": [{"A": [[1, 0.1], [0, 1]], "a": 0.7}, {"A": [[0.05, 0], [0.02, 0.05]], "a": 1.3}],
    "input_terms": [{"B": [[1], [0]], "b": 0.4}],
    "disturbance_terms": [{"G": [[1, 0], [0, 1]], "g": 0}],
    "C": [[1, 0], [0, 1]],
    "dims": {"n": 2, "m": 1, "p": 2, "q": 2}
}"#;

fn run_everything(root: &Path) -> Vec<(String, Vec<u8>)> {
    fs::write(root.join("model.json"), DET_MODEL).unwrap();
    let config = serde_json::json!({
        "model_path": "model.json", "v": 3, "N": 40, "seed": 17,
        "input": {"sine": {"amplitude": 0.5, "period": 9.0}},
        "outputs": root.join("out"),
    });
    fs::write(root.join("config.json"), config.to_string()).unwrap();
    let exp = Experiment::resolve(&Overrides { config: Some(root.join("config.json")), ..Default::default() }).unwrap();
    let out = root.join("out");
    let mut artifacts = Vec::new();
    let mut collect = |tag: &str, dir: &Path| {
        let mut names: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for path in names {
            let name = format!("{tag}/{}", path.file_name().unwrap().to_string_lossy());
            artifacts.push((name, fs::read(&path).unwrap()));
        }
    };
    cmd_simulate(&exp).unwrap();
    collect("simulate", &out);
    let opts = EstimateOptions { trajectory: Some(out.join("trajectory.csv")), oracle: true };
    cmd_estimate(&exp, &opts).unwrap();
    collect("estimate", &out);
    cmd_analyze(&exp).unwrap();
    collect("analyze", &out);
    cmd_repro_eeg(17, &[2, 10, 20], &root.join("eeg")).unwrap();
    collect("repro-eeg", &root.join("eeg"));
    artifacts
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::TempDir::new().unwrap(), tempfile::TempDir::new().unwrap());
    let first = run_everything(a.path());
    let second = run_everything(b.path());
    let differing: Vec<_> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.clone())
        .collect();
    let same_set = first.len() == second.len();
    Outcome {
        id: 8,
        name: "determinism",
        pass: same_set && differing.is_empty(),
        detail: format!("{} artifacts compared across two runs, differing: {differing:?}", first.len()),
    }
}

fn main() -> ExitCode {
    let criteria: [fn() -> Outcome; 8] = [
        oracle_equivalence,
        lift_exactness,
        coefficient_bound,
        information_form,
        covariance_containment,
        iss_envelope,
        eeg_shape,
        determinism,
    ];
    let mut unexpected = Vec::new();
    for criterion in criteria {
        let o = criterion();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let known = KNOWN_UNATTAINABLE.contains(&o.id);
        let note = if known && !o.pass { " (known unattainable)" } else { "" };
        println!("{verdict} [{}] {}: {}{note}", o.id, o.name, o.detail);
        if o.pass == known {
            unexpected.push(o.id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}

mod common;

use common::{lift_truth, random_stable_instance, rng, uniform_matrix, uniform_vector};
use frodest_core::analysis::{
    controllability_gramian, covariance_bounds, iss_constants, observability_gramian, state_transition,
};
use frodest_core::linalg::eig_bounds;
use frodest_core::simulator::gen_bounded_noise;
use frodest_core::{expand_model, me_run, residual_r, simulate_exact, NoiseBounds, Schedule};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gramians_are_psd_window_sums(seed in any::<u64>(), d in 1usize..=5, k0 in 0usize..4, len in 0usize..8) {
        let mut r = rng(seed);
        let a = uniform_matrix(&mut r, d, d, 0.8);
        let g = uniform_matrix(&mut r, d, 2, 1.0);
        let c = uniform_matrix(&mut r, 1, d, 1.0);
        let k = k0 + len;
        let wc = controllability_gramian(&a, &g, k0, k);
        let wo = observability_gramian(&a, &Schedule::constant(c.clone()), k0, k).unwrap();
        let mut wc_sum = DMatrix::zeros(d, d);
        let mut wo_sum = DMatrix::zeros(d, d);
        for i in k0..k {
            let phi = state_transition(&a, k, i + 1);
            wc_sum += &phi * &g * g.transpose() * phi.transpose();
            let psi = state_transition(&a, i + 1, k0);
            wo_sum += psi.transpose() * c.transpose() * &c * psi;
        }
        for (w, sum) in [(&wc, &wc_sum), (&wo, &wo_sum)] {
            prop_assert_eq!(w.clone(), w.transpose());
            let (lo, hi) = eig_bounds(w);
            prop_assert!(lo >= -1e-10 * hi.max(0.0));
            prop_assert!((w - sum).norm() <= 1e-10 * (1.0 + sum.norm()));
        }
    }
}

#[test]
fn filter_covariance_stays_within_bounds() {
    for seed in 0..20 {
        let inst = random_stable_instance(&mut rng(1000 + seed));
        let cov = covariance_bounds(&inst.vapprox, &inst.config, &inst.report).unwrap();
        assert!(cov.pi_lo > 0.0 && cov.pi_lo <= cov.pi_hi);
        let q = inst.vapprox.output_dim();
        let ys = vec![nalgebra::DVector::zeros(q); 200];
        let run = me_run(&inst.vapprox, &inst.config, &[], &ys).unwrap();
        let start = inst.report.n_c.unwrap().max(inst.report.n_o.unwrap());
        for st in &run[start..] {
            let (lo, hi) = eig_bounds(&st.p);
            assert!(lo >= cov.pi_lo && hi <= cov.pi_hi, "seed {seed}, k {}: [{lo}, {hi}] vs {cov:?}", st.k);
        }
    }
}

#[test]
fn estimation_error_respects_iss_envelope() {
    for seed in 0..8 {
        let inst = random_stable_instance(&mut rng(2000 + seed));
        let cov = covariance_bounds(&inst.vapprox, &inst.config, &inst.report).unwrap();
        let iss = iss_constants(&inst.vapprox, &inst.config, &inst.report, &cov, None).unwrap();
        assert!(iss.contracts(), "{iss:?}");
        let dims = inst.model.dims();
        let n_steps = 120;
        let expanded = expand_model(&inst.model, n_steps).unwrap();
        let layout = inst.vapprox.layout();
        let k0 = inst.report.n_c.unwrap().max(inst.report.n_o.unwrap());
        for noise_seed in 0..5 {
            let mut r = rng(seed * 100 + noise_seed);
            let x0 = uniform_vector(&mut r, dims.n, 2.0);
            let (w, v) = gen_bounded_noise(NoiseBounds::new(0.05, 0.05).unwrap(), dims.p, dims.q, n_steps, noise_seed);
            let traj = simulate_exact(&inst.model, &[], &w, &v, &x0, n_steps).unwrap();
            let run = me_run(&inst.vapprox, &inst.config, &[], &traj.outputs).unwrap();
            let err = |k: usize| (&run[k].x_hat - lift_truth(&traj, layout, k)).norm();
            let e0 = err(k0);
            let mut max_r: f64 = 0.0;
            let mut max_v: f64 = 0.0;
            for k in k0 + 1..=n_steps {
                max_r = max_r.max(residual_r(&traj, &expanded, layout.v, k - 1).unwrap().norm());
                max_v = max_v.max(v[k - 1].norm());
                let bound = iss.envelope(e0, k - k0, max_r, max_v);
                assert!(err(k) <= bound, "seed {seed}/{noise_seed}, k {k}: {} > {bound}", err(k));
            }
        }
    }
}

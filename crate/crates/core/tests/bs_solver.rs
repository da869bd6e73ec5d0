mod common;

use cellfree::bs_solver::{
    exact_p, exact_q, project_common_duals, sca_step, solve_bs_beamformers, surrogate_p, surrogate_q,
    update_common_duals, update_lambda_bs, BsDualState, BsSolverParams, BsStepInput, MuIndexVariant, OperatingPoint,
};
use cellfree::linalg::{cosine_distance, norm_sq, relative_error, CVec};
use cellfree::metrics::{bs_powers, effective_uplink, Directions};
use cellfree::training::{ls_estimate_all, make_pilots, ul_pilot_phase, PilotMode};
use proptest::prelude::*;

struct Instance {
    h: Vec<CVec>,
    op: OperatingPoint,
    duals: BsDualState,
}

fn instance(seed: u64, num_bs: usize, m: usize, streams: usize, num_ue: usize) -> Instance {
    let mut rng = common::rng(seed);
    let bm = num_bs * m;
    let n = streams * num_ue;
    let h: Vec<CVec> = (0..n).map(|_| common::random_vec(&mut rng, bm, 1.0)).collect();
    let w_prev: Vec<CVec> = (0..n).map(|_| common::random_vec(&mut rng, bm, 0.1)).collect();
    let v_prev: Vec<CVec> = (0..n).map(|_| common::random_vec(&mut rng, 2, 1.0)).collect();
    let gamma = (0..n).map(|_| common::uniform_in(&mut rng, 0.05, 5.0)).collect();
    let gamma_bar = (0..n).map(|_| common::uniform_in(&mut rng, 0.05, 5.0)).collect();
    let mut duals = BsDualState::initial(num_ue, streams, num_bs, Directions::Both, 0.05);
    duals.nu = (0..n).map(|_| common::uniform_in(&mut rng, 0.01, 2.0)).collect();
    duals.mu = (0..n).map(|_| common::uniform_in(&mut rng, 0.01, 2.0)).collect();
    duals.lambda = (0..num_bs).map(|_| common::uniform_in(&mut rng, 0.0, 0.5)).collect();
    Instance {
        h,
        op: OperatingPoint::new(gamma, gamma_bar, w_prev, v_prev).unwrap(),
        duals,
    }
}

#[test]
fn closed_form_is_stationary() {
    for seed in 0..30 {
        let inst = instance(seed, 3, 2, 2, 3);
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            let mut duals = inst.duals.clone();
            if alpha == 1.0 {
                duals.lambda.iter_mut().for_each(|l| *l += 0.1);
            }
            let w = solve_bs_beamformers(&inst.h, 3, 2, &duals, &inst.op, alpha, 0.3, MuIndexVariant::Printed).unwrap();
            let res = common::bs_stationarity_residual(&inst.h, &w, &duals, &inst.op, alpha, 0.3, 2);
            assert!(res < 1e-8, "seed {seed} alpha {alpha}: residual {res}");
        }
    }
}

#[test]
fn ridge_keeps_singular_case_finite() {
    let inst = instance(4, 2, 2, 1, 6);
    let mut duals = inst.duals.clone();
    duals.lambda = vec![0.0, 0.0];
    let w = solve_bs_beamformers(&inst.h, 2, 2, &duals, &inst.op, 1.0, 0.3, MuIndexVariant::Printed).unwrap();
    assert!(w.iter().all(|x| x.iter().all(|z| z.re.is_finite() && z.im.is_finite())));
}

#[test]
fn single_stream_is_matched_filter() {
    let inst = instance(7, 4, 2, 1, 1);
    let mut duals = inst.duals.clone();
    duals.lambda = vec![0.2; 4];
    let w = solve_bs_beamformers(&inst.h, 4, 2, &duals, &inst.op, 0.5, 0.3, MuIndexVariant::Printed).unwrap();
    assert!(cosine_distance(&w[0], &inst.h[0]) < 1e-12);
}

#[test]
fn variants_agree_when_duals_are_uniform() {
    let mut inst = instance(8, 2, 3, 2, 2);
    inst.duals.mu = vec![0.4; 4];
    let a = solve_bs_beamformers(&inst.h, 2, 3, &inst.duals, &inst.op, 0.5, 0.3, MuIndexVariant::Printed).unwrap();
    let b = solve_bs_beamformers(
        &inst.h,
        2,
        3,
        &inst.duals,
        &inst.op,
        0.5,
        0.3,
        MuIndexVariant::Summation,
    )
    .unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(relative_error(x, y) < 1e-12);
    }
}

#[test]
fn noise_free_estimates_reproduce_ideal_beamformers() {
    let cfg = common::small_config(3, 2, 3, 2, 2);
    let ch = common::unit_channels(&cfg, 12);
    let mut rng = common::rng(12);
    let v: Vec<CVec> = (0..6).map(|_| common::random_vec(&mut rng, 2, 0.2)).collect();
    let w: Vec<CVec> = (0..6).map(|_| common::random_vec(&mut rng, 6, 0.1)).collect();
    let pilots = make_pilots(3, 2, 6, PilotMode::Orthogonal, 1).unwrap();
    let y = ul_pilot_phase(&ch, &v, &pilots, 0.0, &mut rng).unwrap();
    let h_est = ls_estimate_all(&y, &pilots).unwrap();
    let h_true = effective_uplink(&ch, &v, 2);
    for (e, t) in h_est.iter().zip(&h_true) {
        assert!(relative_error(e, t) < 1e-12);
    }

    let inst = instance(12, 3, 2, 2, 3);
    let a = solve_bs_beamformers(&h_est, 3, 2, &inst.duals, &inst.op, 0.5, 0.1, MuIndexVariant::Printed).unwrap();
    let b = solve_bs_beamformers(&h_true, 3, 2, &inst.duals, &inst.op, 0.5, 0.1, MuIndexVariant::Printed).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(relative_error(x, y) < 1e-10);
    }

    let v_norm_sq: Vec<f64> = v.iter().map(norm_sq).collect();
    let step = |h: &[CVec]| {
        let input = BsStepInput {
            h,
            v_norm_sq: &v_norm_sq,
            w_prev: &w,
            v_prev: &v,
            num_bs: 3,
            antennas_per_bs: 2,
            streams_per_ue: 2,
            alpha: 0.5,
            directions: Directions::Both,
            sigma2_bs: 0.1,
            sigma2_ue: 0.1,
            rho_bs: 1.0,
        };
        let duals = BsDualState::initial(3, 2, 3, Directions::Both, 0.05);
        sca_step(&input, &duals, &BsSolverParams::default()).unwrap()
    };
    let (a, b) = (step(&h_est), step(&h_true));
    for (x, y) in a.w.iter().zip(&b.w) {
        assert!(relative_error(x, y) < 1e-8);
    }
    assert!((a.objective - b.objective).abs() <= 1e-10 * b.objective.abs());
}

#[test]
fn sca_step_is_feasible_and_not_worse() {
    for seed in 0..10 {
        let cfg = common::small_config(4, 2, 3, 2, 2);
        let ch = common::unit_channels(&cfg, 100 + seed);
        let mut rng = common::rng(seed);
        let v: Vec<CVec> = (0..6).map(|_| common::random_vec(&mut rng, 2, 0.25)).collect();
        let mut w: Vec<CVec> = (0..6).map(|_| common::random_vec(&mut rng, 8, 1.0)).collect();
        cellfree::bs_solver::scale_to_bs_budget(&mut w, 4, 2, 1.0);
        let h = effective_uplink(&ch, &v, 2);
        let v_norm_sq: Vec<f64> = v.iter().map(norm_sq).collect();
        for directions in [Directions::Both, Directions::DlOnly, Directions::UlOnly] {
            let input = BsStepInput {
                h: &h,
                v_norm_sq: &v_norm_sq,
                w_prev: &w,
                v_prev: &v,
                num_bs: 4,
                antennas_per_bs: 2,
                streams_per_ue: 2,
                alpha: directions.effective_alpha(0.5),
                directions,
                sigma2_bs: 0.1,
                sigma2_ue: 0.1,
                rho_bs: 1.0,
            };
            let duals = BsDualState::initial(3, 2, 4, directions, 0.05);
            let out = sca_step(&input, &duals, &BsSolverParams::default()).unwrap();
            assert!(bs_powers(&out.w, 4, 2).iter().all(|p| *p <= 1.0 + 1e-9));
            let table = cellfree::metrics::sinr_from_effective(&h, &w, &v_norm_sq, 0.1, 0.1, 2).unwrap();
            let rates = cellfree::metrics::compute_rates(&table, 0.5).unwrap();
            assert!(out.objective >= rates.objective_for(directions, 0.5) - 1e-12);
            for d in [&out.duals, &out.next_duals] {
                assert!(d.eta.iter().chain(&d.zeta).all(|x| *x >= 0.0));
                assert!(d.lambda.iter().all(|x| *x >= 0.0));
                let total: f64 = d.eta.iter().chain(&d.zeta).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn lambda_update_examples() {
    assert_eq!(update_lambda_bs(&[0.3], &[2.0], 2.0, 0.1), vec![0.3]);
    let up = update_lambda_bs(&[0.3], &[3.0], 2.0, 0.1);
    assert!((up[0] - 0.4).abs() < 1e-15);
    let mut l = vec![1.0];
    for _ in 0..100 {
        l = update_lambda_bs(&l, &[0.0], 2.0, 0.1);
    }
    assert_eq!(l, vec![0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn surrogates_minorize(seed in any::<u64>(), g in 0.01f64..20.0, g_op in 0.01f64..20.0, scale in 0.01f64..10.0) {
        let mut rng = common::rng(seed);
        let h = common::random_vec(&mut rng, 6, 1.0);
        let w_op = common::random_vec(&mut rng, 6, 1.0);
        let w = common::random_vec(&mut rng, 6, scale);
        let p = exact_p(&w, g, &h);
        let q = exact_q(&w, g, &h);
        prop_assert!(p - surrogate_p(&w, g, &w_op, g_op, &h).unwrap() >= -1e-9);
        prop_assert!(q - surrogate_q(&w, g, &w_op, g_op, &h).unwrap() >= -1e-9);
        let p_op = exact_p(&w_op, g_op, &h);
        prop_assert!((surrogate_p(&w_op, g_op, &w_op, g_op, &h).unwrap() - p_op).abs() <= 1e-9 * p_op.max(1.0));
        let q_op = exact_q(&w_op, g_op, &h);
        prop_assert!((surrogate_q(&w_op, g_op, &w_op, g_op, &h).unwrap() - q_op).abs() <= 1e-9 * q_op.max(1.0));
    }

    #[test]
    fn common_duals_stay_on_simplex(
        eta in proptest::collection::vec(-1.0f64..2.0, 5),
        zeta in proptest::collection::vec(-1.0f64..2.0, 5),
        dl in proptest::collection::vec(0.0f64..5.0, 5),
        ul in proptest::collection::vec(0.0f64..5.0, 5),
        r in 0.0f64..3.0,
        step in 0.0f64..1.0,
    ) {
        for directions in [Directions::Both, Directions::DlOnly, Directions::UlOnly] {
            let mut state = BsDualState::initial(5, 1, 2, directions, step);
            state.eta = eta.clone();
            state.zeta = zeta.clone();
            project_common_duals(&mut state.eta, &mut state.zeta, directions);
            let next = update_common_duals(&state, &dl, &ul, r, 0.5, directions);
            for d in [&state, &next] {
                prop_assert!(d.eta.iter().chain(&d.zeta).all(|x| *x >= 0.0));
                let total: f64 = d.eta.iter().chain(&d.zeta).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                if !directions.has_dl() {
                    prop_assert!(d.eta.iter().all(|x| *x == 0.0));
                }
                if !directions.has_ul() {
                    prop_assert!(d.zeta.iter().all(|x| *x == 0.0));
                }
            }
        }
    }
}

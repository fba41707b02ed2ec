//! Cross-module invariants, mostly property-based.

use glucb::algo::{
    potential_two_arm, run_glucb_traced, run_static, ConfidenceParams, GlucbRun, RadiusMode,
    RunState, Terminated,
};
use glucb::complexity::{objective, solve_hg, AllocationWeights};
use glucb::env::{
    instance_from_json, instance_to_json, sample_unit_vector, three_arm, ArmSet, Instance,
    RngStream,
};
use glucb::linalg::SpdState;
use glucb::DVector;
use proptest::prelude::*;

fn basis(d: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[i] = 1.0;
    v
}

fn params() -> ConfidenceParams {
    ConfidenceParams::new(1.0, 2.0, 0.05, 1.0, RadiusMode::DetBased).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sherman_morrison_tracks_direct_inverse(
        seed in 0u64..1000,
        d in 2usize..6,
        steps in 1usize..120,
    ) {
        let mut rng = RngStream::new(seed, 0);
        let mut spd = SpdState::init(d, 0.5).unwrap();
        for _ in 0..steps {
            spd.rank_one_update(&sample_unit_vector(d, &mut rng)).unwrap();
        }
        let direct = spd.v().clone().try_inverse().unwrap();
        prop_assert!((spd.v_inv() - &direct).amax() < 1e-10);
        prop_assert!(spd.identity_residual() < 1e-8);
    }

    #[test]
    fn quad_form_shrinks_and_log_det_grows(
        seed in 0u64..1000,
        d in 2usize..6,
    ) {
        let mut rng = RngStream::new(seed, 1);
        let mut spd = SpdState::init(d, 1.0).unwrap();
        let y = sample_unit_vector(d, &mut rng);
        let mut quad = spd.quad_form(&y).unwrap();
        let mut log_det = spd.log_det();
        for _ in 0..40 {
            spd.rank_one_update(&sample_unit_vector(d, &mut rng)).unwrap();
            let q = spd.quad_form(&y).unwrap();
            prop_assert!(q <= quad + 1e-12);
            prop_assert!(spd.log_det() > log_det);
            quad = q;
            log_det = spd.log_det();
        }
    }

    #[test]
    fn whitened_score_is_permutation_invariant(
        seed in 0u64..1000,
        perm_seed in 0u64..1000,
    ) {
        let d = 4;
        let mut rng = RngStream::new(seed, 2);
        let mut spd = SpdState::init(d, 1.0).unwrap();
        let updates: Vec<DVector<f64>> =
            (0..15).map(|_| sample_unit_vector(d, &mut rng)).collect();
        for u in &updates {
            spd.rank_one_update(u).unwrap();
        }
        let x = sample_unit_vector(d, &mut rng);
        let y = sample_unit_vector(d, &mut rng);
        let score = spd.whitened_score(&x, &y).unwrap();

        // Apply the same coordinate permutation to every input.
        let mut perm: Vec<usize> = (0..d).collect();
        let mut prng = RngStream::new(perm_seed, 3);
        for i in (1..d).rev() {
            perm.swap(i, prng.uniform_index(i + 1));
        }
        let apply = |v: &DVector<f64>| DVector::from_fn(d, |i, _| v[perm[i]]);
        let mut spd_p = SpdState::init(d, 1.0).unwrap();
        for u in &updates {
            spd_p.rank_one_update(&apply(u)).unwrap();
        }
        let score_p = spd_p.whitened_score(&apply(&x), &apply(&y)).unwrap();
        prop_assert!((score - score_p).abs() <= 1e-10 * score.abs().max(1.0));
    }

    #[test]
    fn selection_tie_set_is_scale_invariant(
        seed in 0u64..1000,
        c in 0.01f64..100.0,
    ) {
        let d = 3;
        let mut rng = RngStream::new(seed, 4);
        let mut spd = SpdState::init(d, 1.0).unwrap();
        for _ in 0..10 {
            spd.rank_one_update(&sample_unit_vector(d, &mut rng)).unwrap();
        }
        let arms: Vec<DVector<f64>> =
            (0..5).map(|_| sample_unit_vector(d, &mut rng)).collect();
        let y = sample_unit_vector(d, &mut rng);
        let tie_set = |y: &DVector<f64>| -> Vec<usize> {
            let scores: Vec<f64> = arms
                .iter()
                .map(|x| spd.whitened_score(x, y).unwrap())
                .collect();
            let max = scores.iter().fold(f64::NEG_INFINITY, |a, s| a.max(*s));
            (0..arms.len())
                .filter(|a| scores[*a] >= max - 1e-12 * max.abs())
                .collect()
        };
        prop_assert_eq!(tie_set(&y), tie_set(&(&y * c)));
    }

    #[test]
    fn instance_json_round_trip_is_bit_exact(
        seed in 0u64..5000,
        d in 2usize..6,
        k in 2usize..8,
    ) {
        let mut rng = RngStream::new(seed, 5);
        let arms: Vec<DVector<f64>> = (0..k).map(|_| sample_unit_vector(d, &mut rng)).collect();
        let theta = sample_unit_vector(d, &mut rng);
        if let Ok(inst) = Instance::new(ArmSet::new(arms).unwrap(), theta, 1.0) {
            let back = instance_from_json(&instance_to_json(&inst)).unwrap();
            prop_assert_eq!(inst.arm_set(), back.arm_set());
            prop_assert_eq!(inst.theta_star(), back.theta_star());
            prop_assert_eq!(inst.noise_std(), back.noise_std());
        }
    }
}

#[test]
fn glucb_is_deterministic_given_the_stream() {
    let inst = three_arm(0.5).unwrap();
    let p = params();
    let run = |seed| {
        let mut rng = RngStream::new(seed, 9);
        let (report, trace) = run_glucb_traced(&inst, &p, &mut rng, 100_000).unwrap();
        (
            report.tau,
            report.recommended,
            trace.iter().map(|s| s.c).collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(123), run(123));
    assert_ne!(run(123).2, run(124).2);
}

#[test]
fn two_arm_tie_scores_agree_when_counts_are_equal() {
    let p = params();
    for seed in 0..10 {
        let mut rng = RngStream::new(seed, 6);
        let arms = loop {
            let a = sample_unit_vector(2, &mut rng);
            let b = sample_unit_vector(2, &mut rng);
            if (a.dot(&b) - 1.0).abs() > 1e-3 {
                break vec![a, b];
            }
        };
        let theta = arms[0].clone();
        let inst = match Instance::new(ArmSet::new(arms).unwrap(), theta, 1.0) {
            Ok(i) => i,
            Err(_) => continue,
        };
        let mut run = GlucbRun::new(&inst, &p, &mut rng).unwrap();
        for _ in 0..400 {
            let state = run.state();
            let h = state.current_best(inst.arm_set());
            let l = state.closest_arm(h, inst.arm_set());
            let counts = state.pull_counts();
            if counts[0] == counts[1] {
                let scores = state.selection_scores(h, l, inst.arm_set()).unwrap();
                let rel = (scores[0] - scores[1]).abs() / scores[0].abs().max(1e-300);
                assert!(rel <= 1e-10, "tie scores differ by {rel}");
            }
            run.force_step().unwrap();
        }
    }
}

#[test]
fn static_uniform_stops_later_than_adaptive_on_the_probe_instance() {
    let inst = three_arm(0.1).unwrap();
    let p = params();
    let uniform = [1.0 / 3.0; 3];
    let mut adaptive_faster = 0;
    let trials = 100;
    for seed in 0..trials {
        let glucb = {
            let mut rng = RngStream::new(seed, 0);
            glucb::algo::run_glucb(&inst, &p, &mut rng, 10_000_000).unwrap()
        };
        let fixed = {
            let mut rng = RngStream::new(seed, 0);
            run_static(&inst, &p, &uniform, &mut rng, 10_000_000).unwrap()
        };
        assert_eq!(glucb.terminated, Terminated::Stopped);
        assert_eq!(fixed.terminated, Terminated::Stopped);
        if glucb.tau < fixed.tau {
            adaptive_faster += 1;
        }
    }
    assert!(
        adaptive_faster >= 90,
        "adaptive beat static in only {adaptive_faster}/{trials} trials"
    );
}

#[test]
fn potential_of_balanced_play_beats_single_arm_loading() {
    let p = params();
    let arms = ArmSet::new(vec![basis(2, 0), basis(2, 1)]).unwrap();
    let inst = Instance::new(arms.clone(), basis(2, 0), 1.0).unwrap();
    let mut rng = RngStream::new(5, 7);
    let mut run = GlucbRun::new(&inst, &p, &mut rng).unwrap();
    for _ in 0..30 {
        run.force_step().unwrap();
    }
    let adaptive = potential_two_arm(run.state(), &arms).unwrap();

    let mut loaded = RunState::new(2, 2, &p).unwrap();
    for _ in 0..30 {
        loaded.observe(0, 0.0, &arms, &p).unwrap();
    }
    let single = potential_two_arm(&loaded, &arms).unwrap();
    assert!(adaptive < single);
}

#[test]
fn solver_weights_feed_back_into_objective() {
    let inst = three_arm(0.7).unwrap();
    let result = solve_hg(&inst, 1e-6, 50_000).unwrap();
    let there = objective(&inst, &result.w_star).unwrap();
    assert!((there - result.h_g).abs() <= 1e-9 * result.h_g);
    let uniform = AllocationWeights::uniform(3);
    assert!(objective(&inst, &uniform).unwrap() >= result.h_g - result.fw_gap);
}

mod common;

use common::log_slope;
use swpomdp::builders::{build_example1, build_example3, MachineRepair};
use swpomdp::metrics::dobrushin;
use swpomdp::stability::{
    bound_hilbert, bound_w1_geometric, empirical_terms, loss_bound_closed, loss_bound_series, HilbertBound,
    PriorSet,
};
use swpomdp::{Belief, FinitePomdp, ModelConstants};

fn stationary(m: &FinitePomdp) -> Belief {
    let nu = m.n_actions();
    m.stationary_distribution(&vec![1.0 / nu as f64; nu]).unwrap()
}

/// Case 1 dynamics and costs with flip probability `eps`, including the
/// noiseless `eps = 0` that the builder rejects.
fn machine_repair_with_channel(eps: f64) -> FinitePomdp {
    let (k, t) = (0.3, 0.3);
    FinitePomdp::new(
        "machine_repair",
        vec![
            vec![vec![1.0, 0.0], vec![t, 1.0 - t]],
            vec![vec![1.0 - k, k], vec![0.0, 1.0]],
        ],
        vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]],
        vec![vec![1.0, 3.0], vec![0.0, 2.0]],
        0.8,
        None,
    )
    .unwrap()
}

fn delta_q(m: &FinitePomdp) -> f64 {
    dobrushin(m.observation_matrix(), m.n_obs()).unwrap()
}

// With z* uniform and Q = [[0.7,0.3],[0.3,0.7]]: psi*(0|0) = 0.7,
// psi*(0|1) = 0.3. From the Dirac at 0 the expected W1 is
// 0.7 * 0.3 + 0.3 * 0.7 = 0.42; the largest TV is |1 - 0.3| + 0.7 = 1.4.
#[test]
fn machine_repair_n0_by_hand() {
    let m = MachineRepair::CASE_1.build().unwrap();
    let z = Belief::uniform(2);
    let e = empirical_terms(&m, 0, &z, &PriorSet::vertices(2)).unwrap();
    assert!((e.ln_w1.value - 0.42).abs() < 1e-14, "{}", e.ln_w1.value);
    assert!((e.ltv_uniform.value - 1.4).abs() < 1e-14);
    assert!((e.ltv_expected.value - 0.84).abs() < 1e-14);
    assert_eq!(e.excluded_mass, 0.0);
}

#[test]
fn prior_set_of_z_star_gives_zero() {
    let m = build_example3(0.3, 0.9, None).unwrap();
    let z = stationary(&m);
    let priors = PriorSet::new().with("z*", z.clone());
    for n in 0..4 {
        let e = empirical_terms(&m, n, &z, &priors).unwrap();
        assert!(e.ln_w1.value.abs() < 1e-14 && e.ltv_uniform.value.abs() < 1e-14);
    }
}

#[test]
fn noiseless_channel_gives_zero() {
    let m = machine_repair_with_channel(0.0);
    let z = stationary(&m);
    let e = empirical_terms(&m, 1, &z, &PriorSet::standard(2, &z)).unwrap();
    assert_eq!(e.ltv_uniform.value, 0.0);
    assert_eq!(e.ln_w1.value, 0.0);
}

#[test]
fn example3_decays_at_the_hilbert_rate() {
    let eps = 0.3;
    let m = build_example3(eps, 0.9, None).unwrap();
    let z = stationary(&m);
    let ltv: Vec<f64> = (2..=7)
        .map(|n| empirical_terms(&m, n, &z, &PriorSet::vertices(3)).unwrap().ltv_uniform.value)
        .collect();
    let slope = log_slope(&ltv);
    let target = ((3.0 - eps) / (3.0 + eps)).ln();
    assert!(slope <= target + 0.05, "slope {slope} vs {target}");
}

#[test]
fn geometric_bound_holds_on_machine_repair() {
    for case in [MachineRepair::CASE_1, MachineRepair::CASE_2] {
        let m = case.build().unwrap();
        let z = stationary(&m);
        let priors = PriorSet::standard(2, &z);
        for n in 0..=6 {
            let e = empirical_terms(&m, n, &z, &priors).unwrap();
            let b = bound_w1_geometric(&m.constants(), delta_q(&m), n).unwrap();
            assert!(e.ln_w1.value <= b.bound + 1e-9, "N={n}: {} > {}", e.ln_w1.value, b.bound);
            assert!(e.ln_w1.value <= 0.5 * e.ltv_uniform.value + 1e-12);
        }
    }
}

// N = 0 on this model is reported by the acceptance gate.
#[test]
fn geometric_bound_holds_on_example1_for_positive_n() {
    for eps in [0.1, 0.2, 0.3] {
        let m = build_example1(eps, 0.9, None).unwrap();
        let z = stationary(&m);
        let priors = PriorSet::standard(4, &z);
        let b0 = bound_w1_geometric(&m.constants(), delta_q(&m), 0).unwrap();
        assert!((b0.rate - (1.0 - eps)).abs() < 1e-12);
        for n in 1..=5 {
            let ln = empirical_terms(&m, n, &z, &priors).unwrap().ln_w1.value;
            let b = bound_w1_geometric(&m.constants(), delta_q(&m), n).unwrap();
            assert!(ln <= b.bound + 1e-9, "eps={eps} N={n}: {ln} > {}", b.bound);
        }
    }
}

#[test]
fn perfectly_informative_plug_in() {
    let c = ModelConstants {
        diameter: 1.0,
        alpha: 1.0,
        k1: 0.0,
        c_inf: 1.0,
    };
    let b = bound_w1_geometric(&c, 1.0, 3).unwrap();
    assert_eq!(b.rate, 0.5);
    assert_eq!(b.bound, 0.5 * 0.125);
    assert!(b.contracting);
    assert!(bound_w1_geometric(&c, 1.5, 3).is_err());
}

#[test]
fn zero_series_gives_zero_loss() {
    let c = MachineRepair::CASE_1.build().unwrap().constants();
    let l = loss_bound_series(&c, 0.8, &[0.0; 6]).unwrap();
    assert_eq!((l.value_loss, l.policy_loss), (0.0, 0.0));
    assert_eq!(loss_bound_closed(&c, 0.8, 0.0, 3).unwrap().value_loss, 0.0);
}

#[test]
fn hilbert_bound_not_applicable_without_mixing() {
    let m = build_example1(0.1, 0.9, None).unwrap();
    let z = stationary(&m);
    let hb = bound_hilbert(&m, &z, &PriorSet::standard(4, &z)).unwrap();
    assert!(matches!(hb, HilbertBound::NotApplicable { .. }));
    assert_eq!(hb.bound(3), None);
}

// A noisier channel never makes windows forget the prior faster on average.
#[test]
fn expected_terms_are_nondecreasing_in_channel_noise() {
    for n in 0..=3 {
        let (mut prev_tv, mut prev_w1) = (-1.0, -1.0);
        for k in 0..=10 {
            let eps = 0.05 * k as f64;
            let m = machine_repair_with_channel(eps);
            let z = stationary(&m);
            let e = empirical_terms(&m, n, &z, &PriorSet::standard(2, &z)).unwrap();
            assert!(e.ltv_expected.value >= prev_tv - 1e-12, "N={n} eps={eps}");
            assert!(e.ln_w1.value >= prev_w1 - 1e-12, "N={n} eps={eps}");
            prev_tv = e.ltv_expected.value;
            prev_w1 = e.ln_w1.value;
        }
    }
}

// The sample-path sup is not monotone in the noise. At N = 0 with
// z* = (1/2, 1/2), the Dirac at 0 and the contradicting observation y = 1
// give psi*(0|1) = eps, so the sup is 2(1 - eps), decreasing in eps.
#[test]
fn uniform_ltv_at_n0_is_two_minus_two_eps() {
    for k in 1..=10 {
        let eps = 0.05 * k as f64;
        let m = machine_repair_with_channel(eps);
        let z = stationary(&m);
        assert!((z.as_slice()[0] - 0.5).abs() < 1e-12);
        let e = empirical_terms(&m, 0, &z, &PriorSet::standard(2, &z)).unwrap();
        assert!((e.ltv_uniform.value - 2.0 * (1.0 - eps)).abs() < 1e-12, "eps={eps}");
    }
}

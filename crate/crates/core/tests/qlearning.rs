use swpomdp::builders::MachineRepair;
use swpomdp::qlearning::{estimate_costs_online, run_q_learning, QLearningSettings};
use swpomdp::rng::CounterRng;
use swpomdp::simulate::sample_trajectory;
use swpomdp::window::{value_iteration, WindowMdp};
use swpomdp::{Belief, FinitePomdp};

fn setup(case: MachineRepair, n: usize) -> (FinitePomdp, WindowMdp, Vec<f64>, Vec<usize>) {
    let m = case.build().unwrap();
    let z = m.stationary_distribution(&[0.5, 0.5]).unwrap();
    let wm = WindowMdp::build(&m, n, &z).unwrap();
    let sol = value_iteration(&wm, m.discount(), 1e-12, 100_000).unwrap();
    let q = wm.q_values(m.discount(), &sol.values);
    (m, wm, q, sol.policy.actions)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
}

#[test]
fn gap_shrinks_with_more_visits() {
    let (m, wm, q, _) = setup(MachineRepair::CASE_1, 1);
    let pairs = wm.len() as u64 * 2;
    let gaps = |visits: u64| {
        let g: Vec<f64> = (0..10)
            .map(|seed| {
                let s = QLearningSettings::uniform(2, visits * pairs, seed);
                run_q_learning(&m, &wm, &s, Some(&q)).unwrap().diagnostics.gap.unwrap()
            })
            .collect();
        median(g)
    };
    let (few, many) = (gaps(1_000), gaps(100_000));
    assert!(many < few, "{many} >= {few}");
}

#[test]
fn greedy_policy_matches_value_iteration() {
    for case in [MachineRepair::CASE_1, MachineRepair::CASE_2] {
        for n in 0..=3 {
            let (m, wm, q, actions) = setup(case, n);
            let s = QLearningSettings::uniform(2, 2_000_000, 7);
            let run = run_q_learning(&m, &wm, &s, Some(&q)).unwrap();
            assert_eq!(run.policy.actions, actions, "eps={} N={n}", case.eps);
            assert_eq!(run.diagnostics.starved_reachable, 0);
        }
    }
}

/// `E[c(x_t, u) | I_t]` by summing over state paths started from `z`.
fn conditional_cost_by_paths(m: &FinitePomdp, z: &[f64], obs: &[usize], acts: &[usize], u: usize) -> f64 {
    let nx = m.n_states();
    let mut joint = vec![0.0; nx];
    let paths = nx.pow(obs.len() as u32);
    for p in 0..paths {
        let xs: Vec<usize> = (0..obs.len()).map(|k| p / nx.pow(k as u32) % nx).collect();
        let mut w = z[xs[0]] * m.observation(xs[0], obs[0]);
        for k in 1..obs.len() {
            w *= m.transition(acts[k - 1], xs[k - 1], xs[k]) * m.observation(xs[k], obs[k]);
        }
        joint[xs[obs.len() - 1]] += w;
    }
    let total: f64 = joint.iter().sum();
    (0..nx).map(|x| joint[x] / total * m.cost(x, u)).sum()
}

#[test]
fn online_cost_estimates_match_path_enumeration() {
    let m = MachineRepair::CASE_1.build().unwrap();
    let z = m.stationary_distribution(&[0.5, 0.5]).unwrap();
    let n = 1;
    let mut rng = CounterRng::new(11);
    let traj = sample_trajectory(&m, &z, &[0.5, 0.5], 1_000_000, &mut rng).unwrap();
    let est = estimate_costs_online(&m, n, &traj).unwrap();
    assert_eq!(est.unvisited(), 0);
    let wm = WindowMdp::build(&m, n, &z).unwrap();
    for code in 0..wm.len() as u64 {
        let w = wm.space.decode(code);
        for u in 0..2 {
            let oracle = conditional_cost_by_paths(&m, z.as_slice(), &w.obs, &w.acts, u);
            let got = est.get(code, u).unwrap();
            assert!((got - oracle).abs() < 2e-2, "{w:?} u={u}: {got} vs {oracle}");
            assert!((wm.cost(code, u) - oracle).abs() < 1e-12);
        }
    }
}

#[test]
fn noiseless_cost_estimates_are_exact() {
    let m = FinitePomdp::new(
        "machine_repair",
        vec![
            vec![vec![1.0, 0.0], vec![0.3, 0.7]],
            vec![vec![0.7, 0.3], vec![0.0, 1.0]],
        ],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![1.0, 3.0], vec![0.0, 2.0]],
        0.8,
        None,
    )
    .unwrap();
    let mut rng = CounterRng::new(3);
    let traj = sample_trajectory(&m, &Belief::uniform(2), &[0.5, 0.5], 2_000, &mut rng).unwrap();
    let est = estimate_costs_online(&m, 1, &traj).unwrap();
    let wm = WindowMdp::build(&m, 1, &Belief::uniform(2)).unwrap();
    for code in 0..wm.len() as u64 {
        let x = wm.space.decode(code).obs[1];
        for u in 0..2 {
            if let Some(c) = est.get(code, u) {
                assert_eq!(c, m.cost(x, u));
            }
        }
    }
}

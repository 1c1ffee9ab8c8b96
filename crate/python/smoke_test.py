"""Smoke test for the swpomdp extension module.

Build and install first, e.g. ``maturin build -m crates/python/Cargo.toml``
and ``pip install target/wheels/swpomdp-*.whl``; then run
``python -m pytest python/smoke_test.py``.
"""

import json
import math

import pytest

import swpomdp


def test_machine_repair_model():
    m = swpomdp.Pomdp.machine_repair()
    assert (m.n_states, m.n_obs, m.n_actions) == (2, 2, 2)
    assert m.validate() == []
    c = m.constants()
    assert math.isclose(c["alpha"], 1.4, abs_tol=1e-12)
    assert m.stationary_distribution() == pytest.approx([0.5, 0.5], abs=1e-12)
    again = swpomdp.Pomdp.from_json(m.to_json())
    assert again.cost(0, 1) == m.cost(0, 1) == 3.0


def test_distances():
    mu, nu = [0.2, 0.3, 0.5], [0.5, 0.25, 0.25]
    assert swpomdp.tv_distance(mu, nu) == pytest.approx(0.6)
    assert swpomdp.w1_distance(mu, nu) == pytest.approx(0.3)
    line = [[abs(i - j) for j in range(3)] for i in range(3)]
    assert swpomdp.w1_distance(mu, nu, line) == pytest.approx(0.3 + 0.25)
    assert swpomdp.hilbert_metric(mu, mu) == 0.0
    assert swpomdp.dobrushin([[0.5, 0.5], [0.5, 0.5]]) == pytest.approx(1.0)
    eps, lam = swpomdp.mixing_coefficient([[0.5, 0.5], [0.5, 0.5]])
    assert eps == pytest.approx(1.0) and lam == pytest.approx([0.5, 0.5])


def test_window_pipeline():
    m = swpomdp.Pomdp.machine_repair()
    z = m.stationary_distribution()
    wm = swpomdp.WindowMdp(m, 1, z)
    assert len(wm) == 8
    code = wm.encode([1, 1], [0])
    assert wm.decode(code) == ([1, 1], [0])
    post, lik = swpomdp.window_posterior(m, z, [1, 1], [0])
    assert wm.posterior(code) == pytest.approx(post, abs=1e-12)
    assert sum(wm.obs_probs(code, 0)) == pytest.approx(1.0)

    sol = swpomdp.value_iteration(wm, m.discount)
    assert len(sol["policy"]) == len(wm)
    values = swpomdp.evaluate_policy(m, wm, sol["policy"])
    assert len(values) == len(wm) and len(values[0]) == 2

    q_ref = [
        wm.cost(c, u) + m.discount * sum(
            p * sol["values"][wm.successor(c, u, y)] for y, p in enumerate(wm.obs_probs(c, u))
        )
        for c in range(len(wm))
        for u in range(2)
    ]
    run = swpomdp.q_learning(m, wm, 50_000, seed=3, reference=q_ref)
    assert len(run["q"]) == 2 * len(wm)
    assert run["diagnostics"]["gap"] is not None
    with pytest.raises(ValueError):
        swpomdp.q_learning(m, wm, 10, cost_signal="bogus")


def test_stability_and_experiment():
    m = swpomdp.Pomdp.machine_repair()
    rep = swpomdp.stability_report(m, 0, [0.5, 0.5], priors=[[1.0, 0.0], [0.0, 1.0]])
    assert rep["terms"]["ln_w1"]["value"] == pytest.approx(0.42, abs=1e-14)
    assert rep["w1_bound"]["rate"] == pytest.approx(0.98)

    cfg = json.dumps({"case": "mr1", "model": "machine-repair", "n_list": [0, 1]})
    csv, sidecar = swpomdp.run_experiment(cfg)
    lines = csv.splitlines()
    assert lines[0] == swpomdp.CSV_HEADER
    assert len(lines) == 3 and all(l.endswith(",ok") for l in lines[1:])
    assert len(sidecar["results"]) == 2
    with pytest.raises(ValueError, match="n_list"):
        swpomdp.run_experiment(json.dumps({"model": "machine-repair", "n_list": []}))

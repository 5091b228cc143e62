import json
import math

import numpy as np
import pytest

from quorumsync import models
from quorumsync.diagnostics import (distortion, dumps, estimate_period, fit_exponential_rate,
                                    group_distance, pairwise_sync_error, sync_report)
from quorumsync.errors import InputError
from quorumsync.network import MediumSpec, NodeGroupSpec, assemble_quorum
from quorumsync.sim import IntegratorConfig, Trajectory, integrate


def brute_pairwise(X, ord_):
    """max over node pairs of the vector norm of the difference, one time slice at a time."""
    T, N, _ = X.shape
    out = np.zeros(T)
    for k in range(T):
        for i in range(N):
            for j in range(N):
                out[k] = max(out[k], np.linalg.norm(X[k, i] - X[k, j], ord_))
    return out


def fake_traj(net, states, times=None):
    states = np.asarray(states, dtype=float)
    times = np.arange(states.shape[0], dtype=float) if times is None else times
    return Trajectory(times, states, net.labels, net.node_mask)


def toy_net(count=4, dim=2, f=None):
    f = f or (lambda X, t: -X ** 3)
    grp = NodeGroupSpec("nodes", dim, count, lambda X, z, t: f(X, t), medium_input=lambda X: X,
                        intrinsic=f)
    med = MediumSpec("m", dim, lambda z, psi, t: -z)
    return assemble_quorum([grp], [med])


# -- rate fits -------------------------------------------------------------------------


def test_rate_exact_exponential():
    t = np.linspace(0, 10, 201)
    fit = fit_exponential_rate(t, np.exp(-2 * t))
    assert fit.rate == pytest.approx(2.0, abs=1e-6)
    assert fit.residual < 1e-8


def test_rate_modulated_exponential():
    t = np.linspace(0, 30, 1001)
    fit = fit_exponential_rate(t, np.exp(-t) * (1 + 0.1 * np.sin(t)))
    assert fit.rate == pytest.approx(1.0, abs=0.05)


def test_rate_constant_series():
    t = np.linspace(0, 10, 50)
    assert fit_exponential_rate(t, np.full(50, 3.0)).rate == pytest.approx(0.0, abs=1e-12)


def test_rate_window_too_short():
    t = np.linspace(0, 1, 20)
    with pytest.raises(InputError):
        fit_exponential_rate(t, np.exp(-t), window=(0.0, 0.3))


def test_rate_default_window_excludes_floor():
    t = np.linspace(0, 40, 401)
    e = np.maximum(np.exp(-t), 1e-13)
    fit = fit_exponential_rate(t, e)
    assert fit.rate == pytest.approx(1.0, abs=1e-6)
    assert fit.window[1] < 24.0


# -- period ----------------------------------------------------------------------------


def test_period_of_sine():
    t = np.arange(0, 1000, 0.5)
    est = estimate_period(np.sin(0.1 * t), t)
    assert est.periodic
    assert est.period == pytest.approx(20 * np.pi, rel=5e-3)


def test_period_with_trend_and_harmonic():
    t = np.arange(0, 600, 0.2)
    x = 0.01 * t + np.sin(2 * np.pi * t / 37.0) + 0.3 * np.sin(4 * np.pi * t / 37.0 + 1)
    assert estimate_period(x, t).period == pytest.approx(37.0, rel=5e-3)


def test_period_constant_is_aperiodic():
    t = np.arange(0, 100, 0.1)
    est = estimate_period(np.full(t.size, 2.5), t)
    assert not est.periodic and est.period is None


def test_period_decay_is_aperiodic():
    t = np.arange(0, 100, 0.1)
    assert not estimate_period(np.exp(-0.05 * t), t).periodic


def test_period_needs_uniform_grid():
    t = np.sort(np.random.default_rng(0).uniform(0, 100, 500))
    with pytest.raises(InputError):
        estimate_period(np.sin(t), t)


# -- sync error ------------------------------------------------------------------------


@pytest.mark.parametrize("kind,ord_", [("L1", 1), ("L2", 2), ("Linf", np.inf)])
def test_pairwise_matches_brute_force(kind, ord_):
    net = toy_net(count=5, dim=3)
    rng = np.random.default_rng(1)
    states = rng.normal(size=(7, net.dim))
    e = pairwise_sync_error(fake_traj(net, states), net, "nodes", kind)
    X = net.group_states(states, "nodes")
    np.testing.assert_allclose(e, brute_pairwise(X, ord_), rtol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_pairwise_permutation_invariant(seed):
    net = toy_net(count=6, dim=2)
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(5, net.dim))
    perm = rng.permutation(6)
    shuffled = states.copy()
    shuffled[:, :12] = states[:, :12].reshape(5, 6, 2)[:, perm].reshape(5, 12)
    a = pairwise_sync_error(fake_traj(net, states), net, "nodes")
    b = pairwise_sync_error(fake_traj(net, shuffled), net, "nodes")
    np.testing.assert_array_equal(a, b)


def test_identical_initial_conditions_stay_identical():
    net = models.genetic_relax_osc(models.GeneticOscParams(d1=6.0, d2=2.0, N=4))
    x0 = np.concatenate([np.tile([1.0, 2.0, 0.5], 4), [0.3]])
    traj = integrate(net, x0, (0.0, 50.0), IntegratorConfig(dt_out=1.0))
    assert np.all(pairwise_sync_error(traj, net, "cells") == 0.0)


def test_enzyme_envelope_and_rate():
    net = models.enzyme_substrate()
    x0 = np.array([0.0, 2.0, 5.0, 1.0])
    traj = integrate(net, x0, (0.0, 60.0), IntegratorConfig(rtol=1e-10, atol=1e-13, dt_out=0.25))
    e = pairwise_sync_error(traj, net, "enzymes")
    assert np.all(e <= e[0] * np.exp(-0.9 * traj.times) + 1e-12)
    assert e[-1] <= 1e-6
    # certified rate is a = 1; the fit should recover it
    assert fit_exponential_rate(traj.times, e).rate >= 0.8


def test_group_distance():
    p = models.GeneticOscParams(d1=6.0, d2=2.0, N=2)
    net = models.two_cluster_genetic(p)
    states = np.zeros((2, net.dim))
    states[1, :6] = 1.0
    d = group_distance(fake_traj(net, states), net, "cluster1", "cluster2")
    np.testing.assert_allclose(d, [0.0, 1.0])


# -- distortion ----------------------------------------------------------------------------


def test_distortion_zero_when_synchronized():
    net = toy_net(count=4, dim=2)
    row = np.concatenate([np.tile([0.7, -1.2], 4), [0.0, 0.0]])
    d = distortion(fake_traj(net, np.vstack([row, 2 * row])), net)
    assert np.all(d.norm == 0.0)


def test_distortion_zero_for_linear_field():
    M = np.array([[-1.0, 2.0], [0.5, -3.0]])
    net = toy_net(count=5, dim=2, f=lambda X, t: X @ M.T + np.sin(t))
    states = np.random.default_rng(2).normal(size=(6, net.dim))
    d = distortion(fake_traj(net, states), net)
    assert np.max(d.norm) <= 1e-14


def test_distortion_hand_value():
    net = toy_net(count=2, dim=1)  # f(x) = -x^3
    d = distortion(fake_traj(net, [[0.0, 2.0, 0.0]]), net)
    # centre 1: f(1) = -1, mean f = (0 - 8)/2 = -4, eps = 3
    assert d.center[0, 0] == 1.0
    assert d.eps[0, 0] == pytest.approx(3.0)


# -- report ----------------------------------------------------------------------------


def test_sync_report_roundtrip():
    net = models.enzyme_substrate()
    traj = integrate(net, [0.0, 1.0, 2.0, 1.0], (0.0, 500.0),
                     IntegratorConfig(rtol=1e-10, atol=1e-12, dt_out=0.5))
    rep = sync_report(traj, net, ["enzymes[0].X"], with_distortion=True)
    data = json.loads(rep.to_json())
    g = data["groups"]["enzymes"]
    assert g["synchronized"] and g["rate"] == pytest.approx(1.0, abs=0.05)
    assert data["periods"]["enzymes[0].X"]["period"] == pytest.approx(20 * math.pi, rel=0.01)
    assert data["distortion"]["mean_norm_tail"] < 1e-10
    assert rep.to_json() == dumps(rep.to_dict())


def test_sync_report_cross_matrix():
    net = models.two_cluster_genetic(models.GeneticOscParams(d1=6.0, d2=2.0, N=2))
    states = np.random.default_rng(0).uniform(0, 1, (30, net.dim))
    rep = sync_report(fake_traj(net, states, np.linspace(0, 29, 30)), net, observables=[])
    mat = np.asarray(rep.cross["final_distance"])
    assert mat.shape == (2, 2) and mat[0, 0] == 0.0 and mat[0, 1] == mat[1, 0] > 0


def test_dumps_deterministic():
    obj = {"b": np.float64(1.5), "a": [np.int64(2), (3, 4)], "c": float("nan")}
    assert dumps(obj) == '{\n  "a": [\n    2,\n    [\n      3,\n      4\n    ]\n  ],\n' \
                         '  "b": 1.5,\n  "c": null\n}\n'

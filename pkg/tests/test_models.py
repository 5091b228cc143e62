import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quorumsync import models
from quorumsync.dynsys import jacobian_fd
from quorumsync.errors import InputError
from quorumsync.sim import IntegratorConfig, integrate

# -- independent transcriptions of the catalog equations ----------------------------------


def enzyme_oracle(p, y, t):
    X, S = y[:-1], y[-1]
    r = 1.1 + np.sin(0.1 * t)
    return np.append(-p.a * X + p.K1 * S / (p.K2 + S), -p.N * p.K1 * S / (p.K2 + S) + r)


def genetic_oracle(p, y, t):
    N = p.N
    X = y[:-1].reshape(N, 3)
    we = y[-1]
    out = np.empty_like(X)
    for i, (u, v, w) in enumerate(X):
        out[i] = [p.alpha1 / (1 + v ** 2) + p.alpha3 * w ** 2 / (1 + w ** 2) - p.d1 * u,
                  p.alpha2 / (1 + u ** 2) - p.d2 * v,
                  p.eps * (p.alpha4 / (1 + u ** 2) - p.d3 * w) + 2 * p.d * (we - w)]
    dwe = p.De / N * sum(X[:, 2] - we) - p.de * we
    return np.append(out.ravel(), dwe)


def ahl_oracle(p, x):
    xc, xe = x
    return np.array([p.alpha + p.beta * xc ** p.n / (p.x_thresh ** p.n + xc ** p.n)
                     - p.gamma_c * xc - p.d1 * xc - p.d2 * xe,
                     p.d1 * xc - p.d2 * xe - p.gamma_e * xe])


def gain_hill_oracle(p, y):
    x, z = y[:-1], y[-1]
    dx = p.a0 - x + p.b * x ** 2 / (1 + x ** 2) + p.k * p.N * (z - x)
    dz = p.delta * (np.mean(x) - z)
    return np.append(dx, dz)


@pytest.mark.parametrize("N", [1, 3, 7])
def test_enzyme_oracle(N):
    p = models.EnzymeParams(N=N)
    net = models.enzyme_substrate(p)
    rng = np.random.default_rng(N)
    for _ in range(100):
        y, t = rng.uniform(0, 10, net.dim), rng.uniform(0, 200)
        np.testing.assert_allclose(net(y, t), enzyme_oracle(p, y, t), rtol=0, atol=1e-12)


@pytest.mark.parametrize("params", [{}, {"d1": 6.0, "d2": 2.0, "N": 4}])
def test_genetic_oracle(params):
    p = models.GeneticOscParams(**params)
    net = models.genetic_relax_osc(p)
    assert net.dim == 3 * p.N + 1
    rng = np.random.default_rng(0)
    for _ in range(100):
        y = rng.uniform(0, 10, net.dim)
        np.testing.assert_allclose(net(y, 0.0), genetic_oracle(p, y, 0.0), rtol=0, atol=1e-12)


def test_ahl_oracle():
    p = models.AhlParams(alpha=0.7, beta=1.3, gamma_c=1.1, gamma_e=0.4, d1=0.8, d2=0.6,
                         x_thresh=1.5, n=3)
    f = models.ahl_pathway(p)
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.uniform(0, 10, 2)
        np.testing.assert_allclose(f(x), ahl_oracle(p, x), rtol=0, atol=1e-12)
        np.testing.assert_allclose(f.jacobian(x), jacobian_fd(f, x), atol=1e-6)


def test_gain_hill_oracle():
    p = models.GainHillParams(k=0.3, N=6, b=4.0, a0=0.2, delta=1.5)
    net = models.gain_coupled_hill(p)
    rng = np.random.default_rng(2)
    for _ in range(100):
        y = rng.uniform(0, 5, net.dim)
        np.testing.assert_allclose(net(y), gain_hill_oracle(p, y), rtol=0, atol=1e-12)


def test_hill_alpha_is_sup_of_slope():
    p = models.GainHillParams(b=4.0)
    x = np.linspace(0, 10, 200001)
    slope = -1 + 2 * p.b * x / (1 + x ** 2) ** 2
    assert models.hill_alpha(p) == pytest.approx(slope.max(), abs=1e-9)
    assert models.hill_alpha(p) == pytest.approx(-1 + 3 * np.sqrt(3) / 2)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e6), st.floats(0.01, 10), st.floats(0.01, 10), st.integers(1, 6))
def test_hill_term_bounded(x, beta, theta, n):
    p = models.AhlParams(beta=beta, x_thresh=theta, n=n)
    _, hill, _ = models._ahl_parts(p)
    h = hill(x)
    assert 0.0 <= h <= beta * (1 + 1e-12)


def _inward_on_faces(net, t_values, seed):
    """Sampled check: on every axis face of the nonnegative orthant the flow points inward."""
    mask = net.nonnegative_mask()
    rng = np.random.default_rng(seed)
    worst = np.inf
    for idx in np.nonzero(mask)[0]:
        for _ in range(50):
            y = rng.uniform(0, 5, net.dim)
            y[idx] = 0.0
            t = float(rng.choice(t_values))
            worst = min(worst, net(y, t)[idx])
    return worst


@pytest.mark.parametrize("build", [
    lambda: models.enzyme_substrate(),
    lambda: models.genetic_relax_osc(models.GeneticOscParams(N=4)),
    lambda: models.two_cluster_genetic(models.GeneticOscParams(d1=6.0, d2=2.0, N=3)),
    lambda: models.three_cluster_vdp(models.GeneticOscParams(d1=6.0, d2=2.0, N=3)),
    lambda: models.gain_coupled_hill(),
])
def test_orthant_inward_flow(build):
    net = build()
    assert net.nonnegative_mask().any()
    assert _inward_on_faces(net, np.linspace(0, 100, 11), 0) >= 0.0


def test_ahl_printed_sign_can_leave_orthant():
    # as printed, x_c' at x_c = 0 is alpha - d2 x_e: negative for large x_e.
    # the mass-exchange sign keeps the orthant invariant.
    printed = models.ahl_pathway(models.AhlParams())
    assert printed(np.array([0.0, 5.0]))[0] < 0
    exch = models.ahl_pathway(models.AhlParams(exchange_sign="exchange"))
    rng = np.random.default_rng(0)
    for xe in rng.uniform(0, 10, 50):
        assert exch(np.array([0.0, xe]))[0] > 0
        assert exch(np.array([xe, 0.0]))[1] >= 0


def test_ahl_production_floor():
    p = models.AhlParams(alpha=0.8)
    assert models.ahl_pathway(p)(np.zeros(2))[0] == pytest.approx(0.8)


@pytest.mark.parametrize("sign", ["printed", "exchange"])
def test_ahl_linear_equilibrium(sign):
    p = models.AhlParams(beta=0.0, alpha=1.0, exchange_sign=sign)
    f = models.ahl_pathway(p)
    xs = models.ahl_equilibrium(p)
    np.testing.assert_allclose(f(xs), 0.0, atol=1e-14)
    assert np.all(np.linalg.eigvals(f.jacobian(xs)).real < 0)
    cfg = IntegratorConfig(method="rk45", rtol=1e-11, atol=1e-13)
    for x0 in ([0.0, 0.0], [7.0, 3.0]):
        traj = integrate(f, np.array(x0), (0.0, 60.0), cfg)
        np.testing.assert_allclose(traj.final, xs, atol=1e-8)


def test_ahl_equilibrium_requires_beta_zero():
    with pytest.raises(InputError):
        models.ahl_equilibrium(models.AhlParams(beta=1.0))


def test_genetic_jacobian_fd_crosscheck():
    p = models.GeneticOscParams(d1=6.0, d2=2.0)
    grp = models._genetic_group(p, "cells")
    rng = np.random.default_rng(3)
    for _ in range(50):
        x, z = rng.uniform(0, 5, 3), rng.uniform(0, 5, 1)
        fd = jacobian_fd(lambda y, t: grp.node_field(y, z, t), x)
        np.testing.assert_allclose(grp.node_jac(x, z), fd, atol=1e-5)
        assert grp.node_jac(x, z)[2, 2] == pytest.approx(-p.eps * p.d3 - 2 * p.d)


def test_vdp_jacobian_fd_crosscheck():
    q = models.VdpParams(K=2.5)
    net = models.three_cluster_vdp(models.GeneticOscParams(d1=6.0, d2=2.0, N=2), q)
    grp = net.group("vdp")
    rng = np.random.default_rng(4)
    for _ in range(50):
        y, z = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 1)
        fd = jacobian_fd(lambda s, t: grp.node_field(s, z, t), y)
        np.testing.assert_allclose(models.vdp_jacobian(q, y), fd, atol=1e-6)


def test_enzyme_defaults():
    p = models.EnzymeParams()
    assert (p.a, p.K1, p.K2, p.N) == (1.0, 2.0, 1.0, 3)
    net = models.enzyme_substrate(p)
    assert net.media[0].forcing.period == pytest.approx(20 * np.pi)


def test_genetic_baseline_defaults():
    p = models.GeneticOscParams()
    assert (p.alpha1, p.alpha2, p.alpha3, p.alpha4) == (3.0, 4.5, 1.0, 4.0)
    assert (p.eps, p.d, p.d1, p.d2, p.d3) == (0.01, 2.0, 1.0, 1.0, 1.0)
    models.genetic_relax_osc(p)


def test_parameter_validation():
    with pytest.raises(InputError):
        models.EnzymeParams(a=-1.0)
    with pytest.raises(InputError):
        models.GeneticOscParams(N=0)
    with pytest.raises(InputError):
        models.AhlParams(n=0)
    with pytest.raises(InputError):
        models.VdpParams(g="cosh")
    with pytest.raises(InputError):
        models.GainHillParams(k=0.0)


@pytest.mark.parametrize("name", sorted(models.REGISTRY))
def test_registry_builds(name):
    sys = models.build_model(name)
    assert sys.dim >= 2


def test_registry_errors():
    with pytest.raises(InputError):
        models.get_model("lorenz")
    with pytest.raises(InputError):
        models.build_model("enzyme_substrate", {"bogus": 1})
    with pytest.raises(InputError):
        models.build_model("enzyme_substrate", extra={"K": 1})
    net = models.build_model("two_cluster_genetic", extra={"K": 0.2})
    assert net.metadata["K"] == 0.2

import numpy as np
import pytest

from quorumsync import models
from quorumsync.errors import AssemblyError, InputError, InvariantError
from quorumsync.network import (CoupledNetworkSpec, MediaGraph, MediumSpec, NodeGroupSpec,
                                assemble_coupled, assemble_quorum, input_equivalence_check)


def hill(s, n):
    return s ** n / (1 + s ** n)


def genetic_cluster_oracle(p, U, V, W, we):
    """Node equations of one genetic cluster, written out per coordinate."""
    du = p.alpha1 / (1 + V ** p.beta) + p.alpha3 * hill(W, p.eta) - p.d1 * U
    dv = p.alpha2 / (1 + U ** p.gamma) - p.d2 * V
    dw = p.eps * (p.alpha4 / (1 + U ** p.gamma) - p.d3 * W) + 2 * p.d * (we - W)
    return du, dv, dw


def unpack_genetic(y, N, offset):
    X = y[offset:offset + 3 * N].reshape(N, 3)
    return X[:, 0], X[:, 1], X[:, 2]


def interleave(du, dv, dw):
    return np.column_stack([du, dv, dw]).ravel()


def two_cluster_oracle(p, K, r, y, t):
    N = p.N
    U1, V1, W1 = unpack_genetic(y, N, 0)
    U2, V2, W2 = unpack_genetic(y, N, 3 * N)
    we1, we2 = y[6 * N], y[6 * N + 1]
    phi = lambda x: K * x
    out = np.concatenate([
        interleave(*genetic_cluster_oracle(p, U1, V1, W1, we1)),
        interleave(*genetic_cluster_oracle(p, U2, V2, W2, we2)),
        [p.De / N * np.sum(W1 - we1) - p.de * we1 + r(t) + phi(we2) - phi(we1),
         p.De / N * np.sum(W2 - we2) - p.de * we2 + phi(we1) - phi(we2)],
    ])
    return out


def three_cluster_oracle(p, q, c, y, t):
    N, Nv = p.N, q.N_vdp
    U1, V1, W1 = unpack_genetic(y, N, 0)
    U2, V2, W2 = unpack_genetic(y, N, 3 * N)
    Y = y[6 * N:6 * N + 2 * Nv].reshape(Nv, 2)
    we1, we2, we3 = y[-3:]
    phi = lambda x: c * x
    y1, y2 = Y[:, 0], Y[:, 1]
    dy1 = y2
    dy2 = -q.alpha * (y1 ** 2 - q.beta) * y2 - q.omega ** 2 * y1 + q.K * (we3 - y1)
    return np.concatenate([
        interleave(*genetic_cluster_oracle(p, U1, V1, W1, we1)),
        interleave(*genetic_cluster_oracle(p, U2, V2, W2, we2)),
        np.column_stack([dy1, dy2]).ravel(),
        [p.De / N * np.sum(W1 - we1) - p.de * we1 + phi(we3) - phi(we1),
         p.De / N * np.sum(W2 - we2) - p.de * we2 + phi(we3) - phi(we2),
         q.K / Nv * np.sum(y2 - we3) + np.sin(we3) + phi(we1) + phi(we2) - 2 * phi(we3)],
    ])


# -- assembly examples ----------------------------------------------------------------------


def test_smallest_instance_single_node():
    grp = NodeGroupSpec("n", 2, 1, lambda X, z, t: -X + z[0], medium_input=lambda X: X[:, :1] ** 2)
    med = MediumSpec("m", 1, lambda z, psi, t: psi - z)
    net = assemble_quorum([grp], [med])
    y = np.array([3.0, -1.0, 0.5])
    np.testing.assert_allclose(net.psi(y, "m"), [9.0])
    np.testing.assert_allclose(net(y), [-2.5, 1.5, 8.5])
    assert net.dim == 3


def test_enzyme_hand_value():
    net = models.enzyme_substrate(models.EnzymeParams())
    np.testing.assert_allclose(net(np.array([0.0, 0.0, 0.0, 1.0]), 0.0), [1.0, 1.0, 1.0, -1.9],
                               atol=1e-15)


def test_enzyme_hill_at_zero_and_single_node():
    net = models.enzyme_substrate(models.EnzymeParams())
    np.testing.assert_allclose(net(np.array([1.0, 2.0, 3.0, 0.0]), 0.0)[:3], [-1.0, -2.0, -3.0])
    one = models.enzyme_substrate(models.EnzymeParams(N=1, forcing=None))
    # medium loss is one Michaelis-Menten term: -2*3/(1+3)
    assert one(np.array([0.0, 3.0]))[1] == pytest.approx(-1.5)


def test_two_cluster_layout_and_forcing():
    p = models.GeneticOscParams(d1=6.0, d2=2.0, N=4)
    net = models.two_cluster_genetic(p, K=0.1)
    assert net.dim == 2 * (3 * p.N + 1)
    desc = net.describe()
    assert [m["forced"] for m in desc["media"]] == [True, False]
    r = lambda t: 1.0 + np.sin(0.1 * t)
    rng = np.random.default_rng(0)
    for _ in range(100):
        y = rng.uniform(0, 5, net.dim)
        t = rng.uniform(0, 100)
        np.testing.assert_allclose(net(y, t), two_cluster_oracle(p, 0.1, r, y, t), rtol=0,
                                   atol=1e-12)


def test_three_cluster_matches_transcription():
    p = models.GeneticOscParams(d1=6.0, d2=2.0, N=3)
    q = models.VdpParams(K=2.5, N_vdp=2)
    net = models.three_cluster_vdp(p, q, phi_gain=3.0)
    assert net.dim == 2 * 3 * p.N + 2 * q.N_vdp + 3
    rng = np.random.default_rng(1)
    for _ in range(100):
        y = rng.uniform(-3, 5, net.dim)
        np.testing.assert_allclose(net(y, 0.0), three_cluster_oracle(p, q, 3.0, y, 0.0), rtol=0,
                                   atol=1e-12)


def test_negative_media_gain_rejected():
    with pytest.raises(AssemblyError):
        models.two_cluster_genetic(models.GeneticOscParams(N=2), K=-0.1)


def test_zero_media_coupling_gives_independent_copies():
    p = models.GeneticOscParams(d1=6.0, d2=2.0, N=3)
    net = models.two_cluster_genetic(p, K=0.0)
    single = models.genetic_relax_osc(models.GeneticOscParams(d1=6.0, d2=2.0, N=3))
    forced = models.genetic_relax_osc(models.GeneticOscParams(
        d1=6.0, d2=2.0, N=3, forcing={"offset": 1.0, "amplitude": 1.0, "omega": 0.1}))
    rng = np.random.default_rng(2)
    y = rng.uniform(0, 4, net.dim)
    t = 7.0
    c1 = np.concatenate([y[:9], [y[18]]])
    c2 = np.concatenate([y[9:18], [y[19]]])
    out = net(y, t)
    np.testing.assert_allclose(np.concatenate([out[:9], [out[18]]]), forced(c1, t), atol=1e-14)
    np.testing.assert_allclose(np.concatenate([out[9:18], [out[19]]]), single(c2, t), atol=1e-14)


def test_genetic_zero_coupling_decouples_nodes():
    p = models.GeneticOscParams(d=0.0, N=4)
    net = models.genetic_relax_osc(p)
    rng = np.random.default_rng(3)
    y = rng.uniform(0, 4, net.dim)
    y[-1] = 0.0
    X = y[:-1].reshape(4, 3)
    out = net(y)[:-1].reshape(4, 3)
    for i in range(4):
        expect = genetic_cluster_oracle(p, *X[i], 0.0)
        np.testing.assert_allclose(out[i], expect, atol=1e-14)


def test_layout_is_contiguous():
    net = models.three_cluster_vdp(models.GeneticOscParams(d1=6.0, d2=2.0, N=2))
    desc = net.describe()
    offs = [(g["offset"], g["count"] * g["node_dim"]) for g in desc["groups"]]
    offs += [(m["offset"], m["dim"]) for m in desc["media"]]
    pos = 0
    for off, size in offs:
        assert off == pos
        pos += size
    assert pos == net.dim
    assert net.labels[-3:] == ("medium1.we", "medium2.we", "medium3.we")


def test_assembly_errors():
    grp = NodeGroupSpec("n", 1, 2, lambda X, z, t: -X, medium_input=lambda X: X)
    med = MediumSpec("m", 1, lambda z, psi, t: psi - z)
    with pytest.raises(AssemblyError):
        assemble_quorum([grp], [med], attachments={"n": "nowhere"})
    with pytest.raises(AssemblyError):
        assemble_quorum([grp], [med, MediumSpec("m2", 1, lambda z, psi, t: -z)])
    bad = NodeGroupSpec("b", 2, 2, lambda X, z, t: -X[:, :1], medium_input=lambda X: X[:, :1])
    with pytest.raises(AssemblyError):
        assemble_quorum([bad], [med])
    with pytest.raises(AssemblyError):
        NodeGroupSpec("c", 1, 0, lambda X, z, t: X)
    with pytest.raises(InputError):
        assemble_quorum([grp], [med]).group("missing")


# -- properties ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_node_permutation_leaves_medium_unchanged(seed):
    p = models.GeneticOscParams(d1=6.0, d2=2.0, N=6)
    net = models.genetic_relax_osc(p)
    rng = np.random.default_rng(seed)
    y = rng.uniform(0, 5, net.dim)
    perm = rng.permutation(p.N)
    y2 = y.copy()
    y2[:-1] = y[:-1].reshape(p.N, 3)[perm].ravel()
    a, b = net(y, 1.0), net(y2, 1.0)
    assert b[-1] == pytest.approx(a[-1], rel=1e-14, abs=1e-14)
    np.testing.assert_allclose(b[:-1].reshape(p.N, 3), a[:-1].reshape(p.N, 3)[perm], atol=1e-14)


def test_zero_coupling_is_direct_product():
    f1 = lambda X, t: -X ** 3 + np.sin(t)
    f2 = lambda X, t: np.cos(X)
    grp1 = NodeGroupSpec("a", 1, 3, lambda X, z, t: f1(X, t), medium_input=lambda X: 0 * X)
    grp2 = NodeGroupSpec("b", 2, 2, lambda X, z, t: f2(X, t), medium_input=lambda X: 0 * X[:, :1])
    g = lambda z, psi, t: -2 * z
    media = [MediumSpec("ma", 1, g), MediumSpec("mb", 1, g)]
    net = assemble_quorum([grp1, grp2], media, MediaGraph(), {"a": "ma", "b": "mb"})
    rng = np.random.default_rng(4)
    for _ in range(20):
        y = rng.normal(size=net.dim)
        t = float(rng.uniform(0, 10))
        expect = np.concatenate([f1(y[:3], t), f2(y[3:7], t), -2 * y[7:]])
        np.testing.assert_allclose(net(y, t), expect, atol=1e-15)


# -- directly coupled networks -----------------------------------------------------------


def ring(n):
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i + 1) % n] = A[(i + 1) % n, i] = 1.0
    return A


def test_ring_laplacian_and_ltilde_sums():
    spec = CoupledNetworkSpec(2, ("g",) * 3, {"g": lambda x, t: -x},
                              {"g": lambda x: np.array([x[0] + np.tanh(x[0]), 2 * x[1]])},
                              ring(3))
    net = assemble_coupled(spec)
    np.testing.assert_allclose(net.laplacian.sum(axis=1), 0.0)
    x = np.random.default_rng(0).normal(size=6)
    Lt = net.ltilde(x)
    # for each column block j, sum_i l_ij dh(x_j) = (sum_i l_ij) dh(x_j) = 0 (L symmetric)
    for j in range(3):
        col = sum(Lt[2 * i:2 * i + 2, 2 * j:2 * j + 2] for i in range(3))
        np.testing.assert_allclose(col, 0.0, atol=1e-8)


def test_partial_state_coupling():
    spec = CoupledNetworkSpec(2, ("g", "g"), {"g": lambda x, t: np.zeros(2)},
                              {"g": lambda x: np.array([x[0], 0.0])},
                              np.array([[0.0, 1.0], [1.0, 0.0]]))
    net = assemble_coupled(spec)
    out = net(np.array([1.0, 5.0, 3.0, -2.0]))
    np.testing.assert_allclose(out, [2.0, 0.0, -2.0, 0.0])


def test_identity_coupling_is_classic_diffusion():
    M = np.array([[-1.0, 0.3], [-0.3, -1.0]])
    spec = CoupledNetworkSpec(2, ("g", "g"), {"g": lambda x, t: M @ x}, {"g": lambda x: x},
                              np.array([[0.0, 2.0], [2.0, 0.0]]))
    net = assemble_coupled(spec)
    x = np.array([1.0, 2.0, -1.0, 0.5])
    np.testing.assert_allclose(net(x), np.concatenate([M @ x[:2] + 2 * (x[2:] - x[:2]),
                                                       M @ x[2:] + 2 * (x[:2] - x[2:])]))


def test_nondiagonal_coupling_rejected():
    spec = CoupledNetworkSpec(2, ("g", "g"), {"g": lambda x, t: -x},
                              {"g": lambda x: np.array([x[0] + x[1], x[1]])},
                              np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(InvariantError):
        assemble_coupled(spec)
    neg = CoupledNetworkSpec(1, ("g", "g"), {"g": lambda x, t: -x}, {"g": lambda x: -x},
                             np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(InvariantError):
        assemble_coupled(neg)


def test_coupled_spec_validation():
    with pytest.raises(AssemblyError):
        CoupledNetworkSpec(1, ("g", "g"), {"g": lambda x, t: x}, {"g": lambda x: x},
                           np.array([[0.0, -1.0], [1.0, 0.0]]))
    with pytest.raises(AssemblyError):
        CoupledNetworkSpec(1, ("g", "h"), {"g": lambda x, t: x}, {"g": lambda x: x},
                           np.zeros((2, 2)))


# -- input equivalence -------------------------------------------------------------------


def test_single_medium_trivially_equivalent():
    net = models.genetic_relax_osc()
    rep = input_equivalence_check(net, [["medium"]])
    assert rep.verdict and rep.classes == (("medium",),)


def test_three_cluster_equivalence():
    net = models.three_cluster_vdp(models.GeneticOscParams(d1=6.0, d2=2.0, N=3))
    rep = input_equivalence_check(net, [["medium1", "medium2"]])
    assert rep.verdict
    assert ("medium1", "medium2") in rep.classes
    bad = input_equivalence_check(net, [["medium1", "medium3"]])
    assert not bad.verdict
    assert bad.witness["feature"] == "dynamics"


def test_population_mismatch_witness():
    p = models.GeneticOscParams(N=3)
    groups = [models._genetic_group(p, "c1"), models._genetic_group(p, "c2", count=4)]
    media = [models._genetic_medium(p, "m1", 3, None), models._genetic_medium(p, "m2", 4, None)]
    net = assemble_quorum(groups, media, attachments={"c1": "m1", "c2": "m2"})
    rep = input_equivalence_check(net, [["m1", "m2"]])
    assert not rep.verdict and rep.witness["feature"] == "population"


def test_two_cluster_forcing_distinguishes_only_when_asked():
    net = models.two_cluster_genetic(models.GeneticOscParams(d1=6.0, d2=2.0, N=3))
    assert input_equivalence_check(net, [["medium1", "medium2"]]).verdict
    rep = input_equivalence_check(net, [["medium1", "medium2"]], include_forcing=True)
    assert not rep.verdict and rep.witness["feature"] == "forcing"


def test_equivalence_report_serializes():
    net = models.two_cluster_genetic(models.GeneticOscParams(N=2))
    d = input_equivalence_check(net).to_dict()
    assert d["verdict"] is True and d["classes"] == [["medium1", "medium2"]]

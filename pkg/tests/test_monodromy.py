import numpy as np
import pytest
from scipy.stats import unitary_group

from lawson_dpw import fuchsian as fu
from lawson_dpw import monodromy as mo
from lawson_dpw.errors import PathTooClose


def loop_rep(form, centers, base=2j, radius=0.2):
    Ms = []
    for c in centers:
        S, C = mo.loop_paths(base, c, radius)
        Ss, Cc = mo.parallel_transport(form, S), mo.parallel_transport(form, C)
        Ms.append(Ss @ Cc @ np.linalg.inv(Ss))
    return Ms


def eigen_error(M, rho):
    """Distance of the eigenvalues of ``M`` to ``exp(+-2 pi i rho)``, over both pairings."""
    ev = np.linalg.eigvals(M)
    t = np.exp(2j * np.pi * rho * np.array([1, -1]))
    return min(np.abs(ev - t).max(), np.abs(ev - t[::-1]).max())


def random_su2(rng):
    X = unitary_group.rvs(2, random_state=rng)
    return X / np.sqrt(np.linalg.det(X))


# ---------------------------------------------------------------- transport

def test_reducible_loop_is_exponential():
    sys_ = fu.make_reducible(1, -1, 1 / 8)
    C = mo.loop_paths(2j, 0, 0.2)[1]
    T = mo.parallel_transport(sys_, C)
    assert np.abs(T - np.diag([np.exp(2j * np.pi / 8), np.exp(-2j * np.pi / 8)])).max() < 1e-9


def test_constant_path_is_identity():
    sys_ = fu.make_us(2, 1, 0.1)
    assert np.allclose(mo.parallel_transport(sys_, mo.Segment(2j, 2j)), np.eye(2))
    assert np.allclose(mo.parallel_transport(sys_, []), np.eye(2))


def test_forward_then_backward_is_identity():
    sys_ = fu.make_us(2, 1, 0.1)
    path = [mo.Segment(2j, 0.5 + 1.3j), mo.Arc(0.5 + 1j, 0.3, np.pi / 2, -np.pi / 2)]
    back = [p.reversed() for p in reversed(path)]
    assert np.abs(mo.parallel_transport(sys_, path + back) - np.eye(2)).max() < 1e-9


def test_path_clearance():
    with pytest.raises(PathTooClose):
        mo.parallel_transport(fu.make_us(2, 1, 0.1), mo.Segment(-1 + 1e-4j, 1j))


def test_batch_flow_matches_exponential():
    A = np.array([[0.3, 1.0], [-0.5, -0.3]], dtype=complex)
    from scipy.linalg import expm
    out = mo.batch_flow(lambda s: A, np.eye(2), s_eval=np.array([0.5, 1.0]), rtol=1e-13)
    assert np.abs(out[0] - expm(0.5 * A)).max() < 1e-12
    assert np.abs(out[1] - expm(A)).max() < 1e-12


# ---------------------------------------------------------------- monodromy

def test_reducible_rep_is_diagonal():
    e = np.exp(2j * np.pi / 8)
    rep = mo.monodromy_rep(fu.make_reducible(-1, -1, 1 / 8))
    expected = [np.diag([1 / e, e]), np.diag([e, 1 / e]), np.diag([1 / e, e]), np.diag([e, 1 / e])]
    assert np.abs(rep.M - expected).max() < 1e-9


def test_traces_and_determinants():
    rng = np.random.default_rng(11)
    for _ in range(3):
        sys_, _, _ = fu.random_stable_system(rng, rho=1 / 8)
        rep = mo.monodromy_rep(sys_)
        assert np.abs(rep.traces() - np.sqrt(2)).max() < 1e-7
        assert np.abs(np.linalg.det(rep.M) - 1).max() < 1e-9
        assert rep.relation_defect()[0] < 1e-7
    rep = mo.monodromy_rep(fu.make_us(2, 1, 1 / 8))
    mu = np.linalg.eigvals(rep.M)
    scale = np.abs(rep.M).max(axis=(1, 2)) ** 2  # rounding in the eigensolver grows with |M|^2
    assert np.all(np.abs(np.abs(mu[:, 0] * mu[:, 1]) - 1) < 1e-12 * scale)


def test_loop_at_infinity_matches_big_circle():
    sys_ = fu.make_us(1.2 + 0.5j, 0.4, 0.15)
    rep = mo.monodromy_rep(sys_)
    S = mo.parallel_transport(sys_, mo.Segment(2j, 3j))
    C = mo.parallel_transport(sys_, mo.Arc(0, 3, np.pi / 2, np.pi / 2 - 2 * np.pi))  # clockwise: positive around inf
    M4 = S @ C @ np.linalg.inv(S)
    assert np.abs(M4 - rep.M[3]).max() < 1e-8
    assert np.abs(rep.M[0] @ rep.M[1] @ rep.M[2] @ rep.M[3] - np.eye(2)).max() < 1e-8


def test_p_chart_relation():
    rng = np.random.default_rng(12)
    sys_, _, _ = fu.random_stable_system(rng)
    rp = mo.monodromy_rep(fu.mobius_change(sys_, "P"))
    assert rp.relation == (0, 2, 1, 3)
    assert rp.relation_defect()[0] < 1e-7
    assert np.abs(rp.traces() - 2 * np.cos(2 * np.pi * sys_.rho)).max() < 1e-7


def test_eigenvalues_match_weights():
    rng = np.random.default_rng(13)
    for _ in range(5):
        sys_, _, _ = fu.random_stable_system(rng)
        rep = mo.monodromy_rep(sys_)
        for Mk in rep.M:
            assert eigen_error(Mk, sys_.rho) < 1e-7


def test_rep_json_and_conjugate():
    rep = mo.monodromy_rep(fu.make_us(2, 1, 0.1))
    d = rep.to_json()
    assert len(d["M"]) == 4 and d["relation"] == [1, 2, 3, 4]
    g = fu.random_sl2(np.random.default_rng(0))
    assert np.allclose(rep.conjugate(g).traces(), rep.traces())


# ---------------------------------------------------------------- unitarity

def test_unitarize_su2_identity_metric():
    rng = np.random.default_rng(14)
    M = np.array([random_su2(rng) for _ in range(4)])
    res = mo.unitarize(M)
    assert res.present and res.residual < 1e-20
    assert np.abs(res.metric.H - np.eye(2)).max() < 1e-8


def test_unitarize_conjugation_oracle():
    rng = np.random.default_rng(15)
    for _ in range(20):
        g = fu.random_sl2(rng)
        M = np.linalg.inv(g) @ np.array([random_su2(rng) for _ in range(4)]) @ g
        res = mo.unitarize(mo.MonodromyRep(M))
        assert res.present and res.residual < 1e-10
        H = g.conj().T @ g
        H /= np.sqrt(np.linalg.det(H).real)
        assert np.abs(res.metric.H - H).max() / np.abs(H).max() < 1e-6


@pytest.mark.parametrize("c0", [0.0, 0.5])
def test_unstable_connection_not_unitarizable(c0):
    pt = fu.UnstableFamilyPoint(0, c0, 1 / 8)
    Ms = loop_rep(lambda z: fu.unstable_connection_form(pt, z), [-1, 0, 1])
    Ms.append(np.linalg.inv(Ms[0] @ Ms[1] @ Ms[2]))
    res = mo.unitarize(np.array(Ms))
    assert not res.present and res.residual > 1e-3


def test_invariant_form_svd_kernel():
    rng = np.random.default_rng(16)
    g = fu.random_sl2(rng)
    M = np.linalg.inv(g) @ np.array([random_su2(rng) for _ in range(4)]) @ g
    s, H = mo.invariant_form_svd(M)
    assert s[0] < 1e-12 * s[-1]
    assert mo.invariance_residual(M, H) < 1e-20


def test_reducibility():
    assert mo.is_reducible_rep(mo.monodromy_rep(fu.make_reducible(-1, -1, 1 / 8)))
    rep = mo.monodromy_rep(fu.make_us(2, 1, 1 / 8))
    assert not mo.is_reducible_rep(rep)
    g = fu.random_sl2(np.random.default_rng(17))
    assert not mo.is_reducible_rep(rep.conjugate(g))
    assert mo.is_reducible_rep(mo.monodromy_rep(fu.make_reducible(1, -1, 1 / 8)).conjugate(g))

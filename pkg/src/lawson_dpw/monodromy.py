"""Parallel transport, monodromy representations and the unitarizability test.

Transport uses the right action ``dPhi = Phi xi`` with ``Phi(start) = Id``,
so concatenating paths multiplies their transports left to right.

The integrator is batched: a *form* is any callable taking an array of
points ``z`` of shape ``(L, B)`` and returning matrices of shape
``(L, B, 2, 2)``.  ``L`` indexes paths and ``B`` indexes independent
systems (for instance spectral parameter samples), and every path/system
pair is integrated inside one ODE solve.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from .errors import PathTooClose, StepFailure
from .fuchsian import FuchsianSystem
from .loopalg import ID2, HermitianMetric, dagger, det2, inv2, trace2

DEFAULT_RTOL = 1e-12
MIN_DISTANCE = 1e-3

Z_BASEPOINT = 2j
Z_RADIUS = 0.2
Z_OUTER = 3.0
P_BASEPOINT = 0j
P_RADIUS = 0.5

# Hermitian basis used by the unitarizer
_HERM_BASIS = np.array([[[1, 0], [0, 0]], [[0, 0], [0, 1]], [[0, 1], [1, 0]], [[0, 1j], [-1j, 0]]], dtype=complex)


# ---------------------------------------------------------------- paths

class Segment:
    """Straight segment from ``z0`` to ``z1``."""

    def __init__(self, z0, z1):
        self.z0 = complex(z0)
        self.z1 = complex(z1)

    def point(self, s):
        return self.z0 + (self.z1 - self.z0) * s

    def velocity(self, s):
        return (self.z1 - self.z0) * np.ones_like(s)

    def distance_to(self, q):
        d = self.z1 - self.z0
        if d == 0:
            return abs(q - self.z0)
        s = np.clip(((q - self.z0) * np.conj(d)).real / abs(d) ** 2, 0, 1)
        return abs(self.point(s) - q)

    def reversed(self):
        return Segment(self.z1, self.z0)


class Arc:
    """Circular arc ``center + radius e^{i theta}`` for theta from ``theta0`` to ``theta1``."""

    def __init__(self, center, radius, theta0, theta1):
        self.center = complex(center)
        self.radius = float(radius)
        self.theta0 = float(theta0)
        self.theta1 = float(theta1)

    def point(self, s):
        return self.center + self.radius * np.exp(1j * (self.theta0 + (self.theta1 - self.theta0) * s))

    def velocity(self, s):
        return 1j * (self.theta1 - self.theta0) * self.radius * np.exp(
            1j * (self.theta0 + (self.theta1 - self.theta0) * s))

    def distance_to(self, q):
        ss = np.linspace(0, 1, 2049)
        return float(np.abs(self.point(ss) - q).min())

    def reversed(self):
        return Arc(self.center, self.radius, self.theta1, self.theta0)


def _check_clearance(paths, punctures, min_distance):
    for p in paths:
        for q in punctures:
            if np.isfinite(abs(q)) and p.distance_to(q) < min_distance:
                raise PathTooClose(f"path passes within {min_distance} of puncture {q}")


def batch_flow(generator, y0, s_span=(0.0, 1.0), s_eval=None, rtol=DEFAULT_RTOL, atol=1e-14):
    """Integrate ``dPhi/ds = Phi G(s)`` for a stack of matrices.

    ``generator(s)`` returns an array of the same shape as ``y0``
    (``(..., 2, 2)``).  Without ``s_eval`` the end value is returned, else an
    array with a leading axis over ``s_eval``.
    """
    y0 = np.asarray(y0, dtype=complex)
    shape = y0.shape

    def rhs(s, y):
        return (y.reshape(shape) @ generator(s)).ravel()

    sol = solve_ivp(rhs, s_span, y0.ravel(), method="DOP853", rtol=rtol, atol=atol, t_eval=s_eval)
    if sol.status != 0:
        raise StepFailure(sol.message)
    if s_eval is None:
        return sol.y[:, -1].reshape(shape)
    return np.moveaxis(sol.y, -1, 0).reshape((len(sol.t),) + shape)


def batch_transport(form, paths, batch=1, rtol=DEFAULT_RTOL, atol=1e-14, phi0=None):
    """Transport along ``L`` paths for ``batch`` systems at once.

    Returns an array of shape ``(L, batch, 2, 2)``.  ``paths`` may also be a
    pair of callables ``(z(s), dz(s))`` returning arrays of shape ``(L, batch)``.
    """
    if isinstance(paths, tuple) and callable(paths[0]):
        zf, dzf = paths
        L = np.shape(zf(0.0))[0]
    else:
        L = len(paths)

        def zf(s):
            return np.array([p.point(s) for p in paths])[:, None] * np.ones((1, batch))

        def dzf(s):
            return np.array([p.velocity(s) for p in paths])[:, None] * np.ones((1, batch))

    shape = (L, batch, 2, 2)
    y0 = np.broadcast_to(ID2 if phi0 is None else phi0, shape).astype(complex)
    return batch_flow(lambda s: form(zf(s)) * dzf(s)[..., None, None], y0, rtol=rtol, atol=atol)


def system_form(sys):
    """Wrap a FuchsianSystem (or a plain callable on scalars) as a batched form."""
    if isinstance(sys, FuchsianSystem):
        return sys.connection
    return np.vectorize(lambda z: np.asarray(sys(z), dtype=complex), signature="()->(2,2)")


def parallel_transport(sys, path, rtol=DEFAULT_RTOL, min_distance=MIN_DISTANCE):
    """Transport of ``d + xi`` along a list of segments/arcs (or a single one).

    ``sys`` is a FuchsianSystem or a callable ``z -> 2x2 matrix``.
    """
    pieces = list(path) if isinstance(path, (list, tuple)) else [path]
    if isinstance(sys, FuchsianSystem):
        _check_clearance(pieces, sys.punctures.points, min_distance)
    if not pieces:
        return ID2.copy()
    T = batch_transport(system_form(sys), pieces, 1, rtol)[:, 0]
    out = ID2.copy()
    for Tk in T:
        out = out @ Tk
    return out


# ---------------------------------------------------------------- loops

def loop_paths(basepoint, center, radius):
    """Segment from the basepoint to the circle and the full counterclockwise circle."""
    d = center - basepoint
    d = d / abs(d)
    q = center - radius * d
    th0 = float(np.angle(-d))
    return Segment(basepoint, q), Arc(center, radius, th0, th0 + 2 * np.pi)


def loop_monodromies(form, centers, basepoint, radius, batch=1, rtol=DEFAULT_RTOL):
    """Monodromies ``S C S^{-1}`` around each center for ``batch`` systems.

    Returns shape ``(len(centers), batch, 2, 2)``.  All segments are
    integrated in one solve and all circles in another.
    """
    segs, arcs = zip(*(loop_paths(basepoint, c, radius) for c in centers))
    S = batch_transport(form, list(segs), batch, rtol)
    C = batch_transport(form, list(arcs), batch, rtol)
    return S @ C @ inv2(S)


@dataclass
class MonodromyRep:
    """Four local monodromies from a common basepoint.

    ``relation`` lists the order in which the product is the identity.
    """

    M: np.ndarray
    relation: tuple = (0, 1, 2, 3)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=complex)

    def product(self):
        out = ID2.copy()
        for k in self.relation:
            out = out @ self.M[k]
        return out

    def relation_defect(self):
        """``min over signs of ||product -+ Id||_F`` and the sign attaining it."""
        P = self.product()
        dp = np.linalg.norm(P - ID2)
        dm = np.linalg.norm(P + ID2)
        return (dp, 1) if dp <= dm else (dm, -1)

    def conjugate(self, g):
        gi = np.linalg.inv(g)
        return MonodromyRep(gi @ self.M @ g, self.relation, dict(self.meta))

    def traces(self):
        return trace2(self.M)

    def to_json(self):
        return {"M": [[[float(z.real), float(z.imag)] for z in Mk.ravel()] for Mk in self.M],
                "traces": [[float(z.real), float(z.imag)] for z in self.traces()],
                "relation": [k + 1 for k in self.relation]}


def monodromy_rep(sys, basepoint=None, radius=None, rtol=DEFAULT_RTOL):
    """Monodromy representation of a Z- or P-normalized system.

    Z chart: loops from 2i around -1, 0, 1, and around infinity along the
    clockwise circle of radius ``Z_OUTER`` (reached from the basepoint along
    the imaginary axis), so that ``M1 M2 M3 M4 = Id``.
    P chart: loops from 0 around all four roots; the punctures are met
    counterclockwise in the order p1, p3, p2, p4, giving ``M1 M3 M2 M4 = Id``.
    Every loop is integrated, so the relation is a genuine check.
    """
    pts = sys.punctures.points
    form = system_form(sys)
    if sys.punctures.normalization == "Z":
        base = Z_BASEPOINT if basepoint is None else basepoint
        r = Z_RADIUS if radius is None else radius
        centers = pts[:3]
        paths = [p for c in centers for p in loop_paths(base, c, r)]
        top = 1j * Z_OUTER
        outer = [Segment(base, top), Arc(0, Z_OUTER, np.pi / 2, np.pi / 2 - 2 * np.pi)]
        _check_clearance(paths + outer, pts, MIN_DISTANCE)
        M = loop_monodromies(form, centers, base, r, 1, rtol)[:, 0]
        S, C = batch_transport(form, outer, 1, rtol)[:, 0]
        M4 = S @ C @ inv2(S)
        return MonodromyRep(np.concatenate([M, M4[None]]), (0, 1, 2, 3), {"basepoint": base, "radius": r})
    base = P_BASEPOINT if basepoint is None else basepoint
    r = P_RADIUS if radius is None else radius
    paths = [p for c in pts for p in loop_paths(base, c, r)]
    _check_clearance(paths, pts, MIN_DISTANCE)
    M = loop_monodromies(form, pts, base, r, 1, rtol)[:, 0]
    return MonodromyRep(M, (0, 2, 1, 3), {"basepoint": base, "radius": r})


# ---------------------------------------------------------------- unitarity

@dataclass
class UnitarizationResult:
    metric: object  # HermitianMetric or None when absent
    residual: float
    kernel_gap: float = float("nan")

    @property
    def present(self):
        return self.metric is not None


def invariance_residual(M, H):
    """``sum_k ||M_k^* H M_k - H||_F^2``."""
    D = dagger(M) @ H @ M - H
    return float(np.sum(np.abs(D) ** 2))


def invariant_form_svd(M):
    """Singular values and right vectors of the real-linear map ``H -> (M_k^* H M_k - H)_k``.

    Works on stacks: ``M`` has shape ``(..., K, 2, 2)``.  Returns
    ``(s, H)`` where ``H`` is the Hermitian matrix of the smallest singular
    value (not normalized) and ``s`` are the singular values, ascending.
    """
    M = np.asarray(M, dtype=complex)
    cols = []
    for E in _HERM_BASIS:
        D = dagger(M) @ E @ M - E
        D = D.reshape(D.shape[:-3] + (-1,))
        cols.append(np.concatenate([D.real, D.imag], axis=-1))
    A = np.stack(cols, axis=-1)
    _, s, vh = np.linalg.svd(A)
    v = vh[..., -1, :]
    H = np.einsum("...i,ijk->...jk", v.astype(complex), _HERM_BASIS)
    return s[..., ::-1], H


def _metric_from_params(p):
    l11 = np.exp(p[0])
    L = np.array([[l11, 0], [p[1] + 1j * p[2], 1 / l11]])
    return L @ dagger(L)


def _params_from_metric(H):
    L = np.linalg.cholesky(H / np.sqrt(det2(H).real))
    return np.array([np.log(L[0, 0].real), L[1, 0].real, L[1, 0].imag])


def unitarize(rep, tol=1e-8, restarts=8, seed=0):
    """Search for a positive Hermitian ``H`` (det 1) with ``M_k^* H M_k = H``.

    Minimizes ``R(H) = sum ||M_k^* H M_k - H||_F^2`` with ``H = L L^*``, ``L``
    lower triangular of determinant one, from ``H = Id``, ``restarts`` random
    starts and the kernel vector of the linearized invariance map.  The metric
    is reported when ``R < tol * sum ||M_k||_F^2``.
    """
    M = rep.M if isinstance(rep, MonodromyRep) else np.asarray(rep, dtype=complex)

    def resid(p):
        D = dagger(M) @ _metric_from_params(p) @ M - _metric_from_params(p)
        return np.concatenate([D.real.ravel(), D.imag.ravel()])

    rng = np.random.default_rng(seed)
    starts = [np.zeros(3)] + [rng.normal(size=3) for _ in range(restarts)]
    s, Hk = invariant_form_svd(M)
    Hk = 0.5 * (Hk + dagger(Hk))
    if np.trace(Hk).real < 0:
        Hk = -Hk
    w = np.linalg.eigvalsh(Hk)
    if w[0] > 0:
        starts.insert(0, _params_from_metric(Hk))
    best = None
    for p0 in starts:
        try:
            sol = least_squares(resid, p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
        except ValueError:
            continue
        val = float(np.sum(sol.fun ** 2))
        if best is None or val < best[0]:
            best = (val, sol.x)
        if val < 1e-28:
            break
    val, p = best
    H = _metric_from_params(p)
    H = 0.5 * (H + dagger(H))
    gap = float(s[0] / s[1]) if s[1] > 0 else float("inf")
    scale = float(np.sum(np.abs(M) ** 2))
    if val < tol * scale and np.all(np.isfinite(H)):
        return UnitarizationResult(HermitianMetric.normalized(H), val, gap)
    return UnitarizationResult(None, val, gap)


def _eigvecs(M, tol):
    """Eigenvectors of a 2x2 matrix, or ``None`` if it is scalar."""
    M = np.asarray(M, dtype=complex)
    if np.abs(M - 0.5 * trace2(M) * ID2).max() < tol:
        return None
    _, V = np.linalg.eig(M)
    return [V[:, 0], V[:, 1]]


def _alignment_defect(v, M):
    w = M @ v
    nw = np.linalg.norm(w)
    if nw == 0:
        return 0.0
    return abs(v[0] * w[1] - v[1] * w[0]) / (np.linalg.norm(v) * nw)


def is_reducible_rep(rep, tol=1e-8):
    """True iff all monodromies share an eigenvector within ``tol``."""
    M = rep.M if isinstance(rep, MonodromyRep) else np.asarray(rep, dtype=complex)
    cands = None
    for Mk in M:
        cands = _eigvecs(Mk, tol)
        if cands is not None:
            break
    if cands is None:
        return True
    return any(max(_alignment_defect(v, Mk) for Mk in M) < tol for v in cands)

"""Fuchsian systems and parabolic structures on the four-punctured sphere.

Two puncture normalizations are used throughout:

* ``Z``: z = (-1, 0, 1, inf), the chart in which the modulus map is defined;
* ``P``: p = e^{i pi/4} (1, -1, i, -i), the roots of z^4 + 1.

In the ``Z`` chart the residue at infinity is stored explicitly as
``A4 = -(A1 + A2 + A3)``, so every residue check treats the four
punctures uniformly.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (BadModulus, CoincidentPoints, DegenerateResidue, InvalidSignPair, InvalidSystem,
                     NotStable, PoleAtPuncture, SingularGauge, ZeroE)
from .loopalg import (ID2, as_matrix, det2, dagger, eigenline, eigenvalues_tracefree, inv2, is_nilpotent,
                      trace2)

INF = complex("inf")
Z_POINTS = (-1.0 + 0j, 0j, 1.0 + 0j, INF)
P_POINTS = tuple(np.exp(1j * np.pi / 4) * np.array([1, -1, 1j, -1j]))

# Klein-four symmetries as permutations of the puncture labels 0..3 (same in both charts)
DELTA_PERM = (2, 3, 0, 1)
TAU_PERM = (3, 2, 1, 0)

D_STD = np.array([[1j, 0], [0, -1j]])
C_STD = np.array([[0, 1j], [1j, 0]])

# Z -> P relabelling: z1 -> p1, z3 -> p2, z2 -> p3, z4 -> p4
Z_TO_P_SLOT = (0, 2, 1, 3)


def _is_inf(q):
    return q is None or (isinstance(q, (complex, float)) and np.isinf(abs(q)))


def sign_normalize(g):
    """Fix the sign of a matrix defined up to sign.

    The entry of largest modulus is made to have argument in (-pi/2, pi/2];
    ties are resolved by taking the first such entry in row-major order.
    """
    g = np.array(g, dtype=complex)
    flat = g.ravel()
    m = np.abs(flat)
    k = int(np.flatnonzero(m >= m.max() * (1 - 1e-12))[0])
    ang = np.angle(flat[k])
    if not (-np.pi / 2 < ang <= np.pi / 2 + 1e-15):
        g = -g
    return g


class PunctureSet:
    """Four marked points on the Riemann sphere in one of the two normalizations."""

    def __init__(self, normalization, points=None):
        if normalization not in ("Z", "P"):
            raise InvalidSystem(f"unknown normalization {normalization!r}")
        if points is None:
            points = Z_POINTS if normalization == "Z" else P_POINTS
        pts = tuple(INF if _is_inf(q) else complex(q) for q in points)
        if len(pts) != 4:
            raise InvalidSystem("need exactly four punctures")
        for i in range(4):
            for j in range(i):
                if pts[i] == pts[j] or (np.isfinite(abs(pts[i])) and np.isfinite(abs(pts[j]))
                                        and abs(pts[i] - pts[j]) < 1e-14):
                    raise CoincidentPoints("punctures must be pairwise distinct")
        self.normalization = normalization
        self.points = pts

    @classmethod
    def Z(cls):
        return cls("Z")

    @classmethod
    def P(cls):
        return cls("P")

    def finite(self):
        return [k for k, q in enumerate(self.points) if np.isfinite(abs(q))]

    def to_json(self):
        return [("inf" if not np.isfinite(abs(q)) else [q.real, q.imag]) for q in self.points]

    def __repr__(self):
        return f"PunctureSet({self.normalization}, {self.points})"


def _mat_json(A):
    return [[float(z.real), float(z.imag)] for z in np.asarray(A).ravel()]


def _mat_from_json(d):
    vals = [complex(re, im) for re, im in d]
    if len(vals) != 4:
        raise InvalidSystem("a matrix needs four entries")
    return np.array(vals).reshape(2, 2)


class FuchsianSystem:
    """``d + sum_k A_k dz / (z - z_k)`` with trace-free residues of eigenvalues +-rho.

    ``residues`` holds all four matrices; for a puncture at infinity the
    stored matrix is the residue there, ``-(sum of the finite ones)``.
    """

    def __init__(self, punctures, residues, rho, tol=1e-8, check_weights=True):
        A = np.array(residues, dtype=complex)
        if A.shape == (3, 2, 2) and not np.isfinite(abs(punctures.points[3])):
            A = np.concatenate([A, -A.sum(axis=0)[None]], axis=0)
        if A.shape != (4, 2, 2):
            raise InvalidSystem(f"residues must have shape (4, 2, 2), got {A.shape}")
        scale = max(1.0, float(np.abs(A).max()))
        if np.abs(A.sum(axis=0)).max() > tol * scale:
            raise InvalidSystem("residues do not sum to zero")
        if np.abs(trace2(A)).max() > tol * scale:
            raise InvalidSystem("residues are not trace-free")
        rho = float(rho)
        if check_weights:
            if not (0 < rho < 0.5):
                raise InvalidSystem(f"weight {rho} outside (0, 1/2)")
            dev = np.abs(-det2(A) - rho * rho).max()
            if dev > tol * max(1.0, scale ** 2):
                raise InvalidSystem(f"residue eigenvalues differ from +-rho by {dev:.2e}")
        A.setflags(write=False)
        self.punctures = punctures
        self.residues = A
        self.rho = rho

    @classmethod
    def from_finite(cls, punctures, finite_residues, rho, **kw):
        """Build a system from the residues at the finite punctures only."""
        A = np.array(finite_residues, dtype=complex)
        fin = punctures.finite()
        full = np.zeros((4, 2, 2), dtype=complex)
        for k, Ak in zip(fin, A):
            full[k] = Ak
        for k in range(4):
            if k not in fin:
                full[k] = -A.sum(axis=0)
        return cls(punctures, full, rho, **kw)

    def connection(self, z):
        """The dz-coefficient ``sum A_k / (z - z_k)`` at ``z`` (array-valued ``z`` allowed)."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape + (2, 2), dtype=complex)
        for k in self.punctures.finite():
            d = z - self.punctures.points[k]
            if np.any(d == 0):
                raise PoleAtPuncture(f"z coincides with puncture {k + 1}")
            out += self.residues[k] / d[..., None, None]
        return out

    def conjugate(self, g):
        """The gauge ``A_k -> g^{-1} A_k g`` by a constant matrix."""
        g = as_matrix(g)
        gi = np.linalg.inv(g)
        return FuchsianSystem(self.punctures, gi @ self.residues @ g, self.rho, check_weights=False)

    def to_json(self):
        return {"normalization": self.punctures.normalization,
                "punctures": self.punctures.to_json(),
                "residues": [_mat_json(A) for A in self.residues],
                "rho": self.rho}

    @classmethod
    def from_json(cls, d):
        try:
            pts = [INF if q == "inf" else complex(q[0], q[1]) for q in d["punctures"]]
            pset = PunctureSet(d["normalization"], pts)
            res = [_mat_from_json(A) for A in d["residues"]]
            rho = float(d["rho"])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise InvalidSystem(f"malformed system: {exc}") from exc
        if len(res) == 3:
            return cls.from_finite(pset, res, rho)
        return cls(pset, res, rho)

    def __repr__(self):
        return f"FuchsianSystem({self.punctures.normalization}, rho={self.rho})"


class ParabolicStructure:
    """Four quasiparabolic lines (unit representatives) with a common weight."""

    def __init__(self, lines, rho):
        L = np.array(lines, dtype=complex)
        if L.shape != (4, 2):
            raise InvalidSystem("need four lines in C^2")
        n = np.linalg.norm(L, axis=1)
        if np.any(n == 0):
            raise InvalidSystem("line representatives must be nonzero")
        L = L / n[:, None]
        L.setflags(write=False)
        self.lines = L
        self.rho = float(rho)

    def __repr__(self):
        return f"ParabolicStructure({np.round(self.lines, 6).tolist()}, rho={self.rho})"


class HiggsField:
    """Residues of a strongly parabolic Higgs field."""

    def __init__(self, residues, punctures):
        self.residues = np.array(residues, dtype=complex)
        self.punctures = punctures

    def form(self, z):
        """dz-coefficient of ``sum Psi_k dz / (z - z_k)`` over the finite punctures."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape + (2, 2), dtype=complex)
        for k in self.punctures.finite():
            out += self.residues[k] / (z - self.punctures.points[k])[..., None, None]
        return out


class StabilityClass(enum.Enum):
    Stable = "stable"
    StrictlySemistable = "strictly semistable"
    Unstable = "unstable"


@dataclass(frozen=True)
class UnstableFamilyPoint:
    E: complex
    c0: complex
    rho: float

    def __post_init__(self):
        if not (0 < self.rho < 0.25):
            raise InvalidSystem("rho must lie in (0, 1/4)")


# ---------------------------------------------------------------- constructors

def normal_form_residues(u, rho):
    r = rho
    return np.array([[[-r, 2 * r * u], [0, r]],
                     [[-r, 0], [-2 * r, r]],
                     [[r, 0], [2 * r, -r]],
                     [[r, -2 * r * u], [0, -r]]], dtype=complex)


def _check_u(u):
    if _is_inf(u) or abs(u) < 1e-14 or abs(u - 1) < 1e-14:
        raise BadModulus(f"modulus {u} is one of 0, 1, inf")


def make_normal_form(u, rho):
    """The Z-normalized system with quasiparabolic lines (u,1), (0,1), (1,1), (1,0)."""
    _check_u(u)
    return FuchsianSystem(PunctureSet.Z(), normal_form_residues(complex(u), rho), rho)


def higgs_residues(u):
    u = complex(u)
    return np.array([[[-u, u * u], [-1, u]],
                     [[0, 0], [1 - u, 0]],
                     [[u, -u], [u, -u]],
                     [[0, u - u * u], [0, 0]]], dtype=complex)


def make_higgs(u):
    """The strongly parabolic Higgs field adapted to the normal form of modulus ``u``."""
    return HiggsField(higgs_residues(u), PunctureSet.Z())


def make_us(u, s, rho):
    """Residues ``A_k^u + s Psi_k``."""
    _check_u(u)
    return FuchsianSystem(PunctureSet.Z(), normal_form_residues(complex(u), rho) + complex(s) * higgs_residues(u),
                          rho)


def make_reducible(sigma_m1, sigma_1, rho):
    """Diagonal system with signs ``sigma_m1``, ``+1``, ``sigma_1`` at z = -1, 0, 1."""
    if (sigma_m1, sigma_1) not in ((-1, -1), (-1, 1), (1, -1)):
        raise InvalidSignPair(f"sign pair {(sigma_m1, sigma_1)} not admissible")
    if not (0 < rho < 0.25):
        raise InvalidSystem("rho must lie in (0, 1/4)")
    H = np.diag([rho, -rho]).astype(complex)
    return FuchsianSystem.from_finite(PunctureSet.Z(), [sigma_m1 * H, H, sigma_1 * H], rho)


# ---------------------------------------------------------------- parabolic data

def parabolic_structure(sys, tol=1e-12):
    """The four +rho eigenlines of the residues."""
    if sys.rho == 0:
        raise DegenerateResidue("weight zero")
    lines = []
    for k, A in enumerate(sys.residues):
        if np.abs(A).max() < tol:
            raise DegenerateResidue(f"residue {k + 1} vanishes")
        mu, _ = eigenvalues_tracefree(A, tol=1e-8 * max(1.0, np.abs(A).max()))
        lines.append(eigenline(A, mu))
    return ParabolicStructure(lines, sys.rho)


def line_distance(v, w):
    """Fubini-Study chordal distance between two lines in C^2."""
    v = np.asarray(v, dtype=complex)
    w = np.asarray(w, dtype=complex)
    return abs(v[0] * w[1] - v[1] * w[0]) / (np.linalg.norm(v) * np.linalg.norm(w))


def stability(par, threshold=1e-8):
    """Stable iff the four lines are pairwise distinct, else strictly semistable."""
    L = par.lines
    for i in range(4):
        for j in range(i):
            if line_distance(L[i], L[j]) < threshold:
                return StabilityClass.StrictlySemistable
    return StabilityClass.Stable


def _bracket(v, w):
    return v[0] * w[1] - v[1] * w[0]


def lines_cross_ratio(L):
    """``[1,2][3,4] / ([1,4][3,2])`` with ``[a,b] = det(l_a, l_b)``; ``inf`` if the denominator vanishes."""
    num = _bracket(L[0], L[1]) * _bracket(L[2], L[3])
    den = _bracket(L[0], L[3]) * _bracket(L[2], L[1])
    scale = np.prod([np.linalg.norm(x) for x in L])
    if abs(den) < 1e-14 * scale:
        return INF
    return complex(num / den)


def modulus_u(sys, lenient=False, threshold=1e-8):
    """Modulus of a Z-normalized system.

    Strict mode rejects non-stable input; lenient mode returns the cross-ratio
    of the quasiparabolic lines, which also covers strictly semistable systems.
    """
    par = parabolic_structure(sys)
    if not lenient and stability(par, threshold) is not StabilityClass.Stable:
        raise NotStable("quasiparabolic lines coalesce")
    return lines_cross_ratio(par.lines)


def _normalizing_gauge(L):
    """``g`` in SL(2) mapping (1,0), (0,1), (1,1) to the lines at z4, z2, z3."""
    M = np.column_stack([L[3], L[1]])
    if abs(det2(M)) < 1e-14:
        raise NotStable("lines at z2 and z4 coincide")
    ab = np.linalg.solve(M, L[2])
    if np.any(np.abs(ab) < 1e-14):
        raise NotStable("line at z3 coincides with z2 or z4")
    g = M * ab[None, :]
    g = g / np.sqrt(det2(g))
    return g


def coordinates_us(sys):
    """Coordinates ``(u, s, g)`` with ``g^{-1} A_k g = A_k^u + s Psi_k``."""
    if sys.punctures.normalization != "Z":
        raise InvalidSystem("coordinates are defined in the Z chart")
    par = parabolic_structure(sys)
    if stability(par) is not StabilityClass.Stable:
        raise NotStable("quasiparabolic lines coalesce")
    g = sign_normalize(_normalizing_gauge(par.lines))
    gi = np.linalg.inv(g)
    x = gi @ par.lines[0]
    if abs(x[1]) < 1e-14 * np.linalg.norm(x):
        raise NotStable("modulus at infinity")
    u = complex(x[0] / x[1])
    R = gi @ sys.residues @ g - normal_form_residues(u, sys.rho)
    Psi = higgs_residues(u)
    s = complex(np.vdot(Psi.ravel(), R.ravel()) / np.vdot(Psi.ravel(), Psi.ravel()))
    return u, s, g


def higgs_space_dim(par, symmetric_with=None, tol=1e-9):
    """Dimension of the space of strongly parabolic Higgs fields.

    The linear conditions are ``sum Psi_k = 0``, ``tr Psi_k = 0`` and
    ``Psi_k l_k = 0``.  With ``symmetric_with=(D, C)`` the field must also
    satisfy ``Psi_delta(k) = D^{-1} Psi_k D`` and ``Psi_tau(k) = C^{-1} Psi_k C``.
    """
    rows = []

    def unit(k, i, j):
        e = np.zeros((4, 2, 2), dtype=complex)
        e[k, i, j] = 1
        return e

    basis = [unit(k, i, j) for k in range(4) for i in range(2) for j in range(2)]

    def conditions(P):
        out = [P.sum(axis=0).ravel(), trace2(P)]
        out += [P[k] @ par.lines[k] for k in range(4)]
        if symmetric_with is not None:
            D, C = (as_matrix(X) for X in symmetric_with)
            Di, Ci = np.linalg.inv(D), np.linalg.inv(C)
            for k in range(4):
                out.append((P[DELTA_PERM[k]] - Di @ P[k] @ D).ravel())
                out.append((P[TAU_PERM[k]] - Ci @ P[k] @ C).ravel())
        return np.concatenate([np.atleast_1d(o) for o in out])

    rows = np.column_stack([conditions(e) for e in basis])
    s = np.linalg.svd(rows, compute_uv=False)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return 16 - rank


# ---------------------------------------------------------------- the unstable family

def unstable_connection_form(pt, z):
    """dz-coefficient of the connection form of the unstable family over the affine chart."""
    z = complex(z)
    if any(abs(z - q) < 1e-15 for q in (-1, 0, 1)):
        raise PoleAtPuncture("z is a pole of the connection form")
    E, c0, r = complex(pt.E), complex(pt.c0), pt.rho
    zz = z - z ** 3
    a11 = r * (1 - 3 * z * z) / zz + E
    a12 = (-c0 ** 2 * E ** 2 + 6 * r * (c0 * E - E * z + 1) + c0 * E * (E * z - 2) - 8 * r * r - E ** 2 * z ** 2
           + E ** 2 + E * z - 1) / (z ** 3 - z)
    a21 = c0 + z
    a22 = -(r * (1 - 3 * z * z) - E * z ** 3 + E * z) / zz
    return np.array([[a11, a12], [a21, a22]])


def _unstable_denominators(pt):
    E, c0, r = complex(pt.E), complex(pt.c0), pt.rho
    return c0 * E - 2 * r + E + 1, (c0 - 1) * E + 1 - 2 * r


def gauge_unstable_to_fuchsian(pt):
    """Closed-form coordinates ``(u0, s0)`` of the gauged unstable-family connection."""
    E, c0, r = complex(pt.E), complex(pt.c0), pt.rho
    if E == 0:
        raise ZeroE("the gauge is undefined at E = 0")
    d1, d2 = _unstable_denominators(pt)
    if abs(d1) < 1e-14 or abs(d2) < 1e-14:
        raise SingularGauge("vanishing denominator in the gauge")
    u0 = -((c0 + 1) * E + 1 - 2 * r) / d2
    s0 = -((1 - c0) * E + 2 * r - 1) * ((1 - c0) * E + 4 * r - 1) / (2 * E)
    return u0, s0


def unstable_gauge(pt, z):
    """The gauge ``l^E(z) C`` and its z-derivative."""
    E, c0, r = complex(pt.E), complex(pt.c0), pt.rho
    d1, _ = _unstable_denominators(pt)
    C = np.array([[(c0 * E - 2 * r + 1) / (E * d1), 0], [-E / d1, 1]])
    l = np.array([[0, 1], [-1, complex(z) / E]])
    dl = np.array([[0, 0], [0, 1 / E]])
    return l @ C, dl @ C


def verify_unstable_gauge(pt, zs):
    """Max deviation between the gauged unstable form and the (u0, s0) Fuchsian form on ``zs``."""
    u0, s0 = gauge_unstable_to_fuchsian(pt)
    target = FuchsianSystem(PunctureSet.Z(), normal_form_residues(u0, pt.rho) + s0 * higgs_residues(u0),
                            pt.rho, check_weights=False)
    dev = 0.0
    for z in zs:
        g, dg = unstable_gauge(pt, z)
        gi = np.linalg.inv(g)
        gauged = gi @ unstable_connection_form(pt, z) @ g + gi @ dg
        dev = max(dev, float(np.abs(gauged - target.connection(z)).max()))
    return dev


# ---------------------------------------------------------------- symmetries

def _intertwiner_space(A, perm):
    """Basis of matrices X with ``A_k X = X A_perm(k)`` for all k."""
    cols = []
    for i in range(2):
        for j in range(2):
            X = np.zeros((2, 2), dtype=complex)
            X[i, j] = 1
            cols.append(np.concatenate([(A[k] @ X - X @ A[perm[k]]).ravel() for k in range(4)]))
    Mx = np.column_stack(cols)
    _, s, vh = np.linalg.svd(Mx)
    scale = max(1.0, s[0])
    null = vh[np.sum(s > 1e-9 * scale):].conj()
    return [v.reshape(2, 2) for v in null]


def _pick_unimodular(space, reference, extra=None):
    """Choose a determinant-one element of a linear space of matrices.

    Within the trace-free part (and an optional extra linear condition) the
    element closest to ``reference`` is used, so the standard matrices are
    returned verbatim when they lie in the space.
    """
    if not space:
        return None
    B = np.array([X.ravel() for X in space]).T
    if len(space) > 1:
        cond = [np.array([X[0, 0] + X[1, 1] for X in space])]
        if extra is not None:
            cond += [np.array([extra(X)[i, j] for X in space]) for i in range(2) for j in range(2)]
        Cm = np.array(cond)
        _, s, vh = np.linalg.svd(Cm)
        null = vh[np.sum(s > 1e-9 * max(1.0, s.max())):].conj().T
        if null.shape[1] > 0:
            B = B @ null
    coef = np.linalg.lstsq(B, reference.ravel(), rcond=None)[0]
    cands = [B @ coef] + [B[:, i] for i in range(B.shape[1])]
    if B.shape[1] > 1:
        cands.append(B[:, 0] + B[:, 1])
    for c in cands:
        X = c.reshape(2, 2)
        d = det2(X)
        if abs(d) > 1e-6 * np.linalg.norm(X) ** 2:
            return sign_normalize(X / np.sqrt(d))
    return None


def check_symmetric(sys, tol=1e-8):
    """Test for ``delta^* nabla = nabla.D~`` and ``tau^* nabla = nabla.C~``.

    Returns ``(is_symmetric, D~, C~)``; the matrices are ``None`` when no
    determinant-one solution exists.
    """
    if sys.punctures.normalization != "Z":
        raise InvalidSystem("symmetry check is defined in the Z chart")
    A = sys.residues
    D = _pick_unimodular(_intertwiner_space(A, DELTA_PERM), D_STD)
    C = None
    if D is not None:
        C = _pick_unimodular(_intertwiner_space(A, TAU_PERM), C_STD, extra=lambda X: D @ X + X @ D)
        if C is None:
            C = _pick_unimodular(_intertwiner_space(A, TAU_PERM), C_STD)
    ok = D is not None and C is not None
    if ok:
        scale = max(1.0, float(np.abs(A).max()))
        for X, perm in ((D, DELTA_PERM), (C, TAU_PERM)):
            Xi = np.linalg.inv(X)
            for k in range(4):
                if np.abs(Xi @ A[k] @ X - A[perm[k]]).max() > tol * scale:
                    ok = False
    return ok, D, C


def symmetric_normal_form(x, y, z, rho=None):
    """Residues ``A1 = [[x, y], [z, -x]]`` with ``A3 = D^-1 A1 D`` and ``A4 = C^-1 A1 C``."""
    A1 = np.array([[x, y], [z, -x]], dtype=complex)
    Di, Ci = np.linalg.inv(D_STD), np.linalg.inv(C_STD)
    A3 = Di @ A1 @ D_STD
    A4 = Ci @ A1 @ C_STD
    A2 = -(A1 + A3 + A4)
    if rho is None:
        rho = float(np.sqrt(complex(x * x + y * z)).real)
    return FuchsianSystem(PunctureSet.Z(), [A1, A2, A3, A4], rho)


# ---------------------------------------------------------------- charts

def cross_ratio(q1, q2, q3, q4):
    """``(q1-q3)(q2-q4) / ((q1-q4)(q2-q3))`` with points at infinity cancelled."""
    q = [INF if _is_inf(x) else complex(x) for x in (q1, q2, q3, q4)]
    for i in range(4):
        for j in range(i):
            both_inf = not np.isfinite(abs(q[i])) and not np.isfinite(abs(q[j]))
            if both_inf or (np.isfinite(abs(q[i])) and np.isfinite(abs(q[j])) and abs(q[i] - q[j]) < 1e-15):
                raise CoincidentPoints("cross-ratio needs pairwise distinct points")

    def diff(a, b):
        if not np.isfinite(abs(q[a])):
            return 1.0
        if not np.isfinite(abs(q[b])):
            return -1.0
        return q[a] - q[b]

    return complex(diff(0, 2) * diff(1, 3) / (diff(0, 3) * diff(1, 2)))


def mobius_z_to_p(z):
    """The Moebius map sending -1, 1, 0, inf to p1, p2, p3, p4."""
    p1, p2, p3, p4 = P_POINTS
    # T(z) = (a z + b) / (c z + d) with T(inf) = p4, T(0) = p3, T(1) = p2
    # write T(z) = (p4 k z + p3) / (k z + 1); T(1) = p2 fixes k
    k = (p2 - p3) / (p4 - p2)
    if _is_inf(z):
        return p4
    z = complex(z)
    den = k * z + 1
    if den == 0:
        return INF
    return (p4 * k * z + p3) / den


def mobius_change(sys, target):
    """Move a system between the Z and P charts.

    Residue matrices are unchanged; only the puncture labels move.  The
    correspondence is z1 -> p1, z3 -> p2, z2 -> p3, z4 -> p4, which is the
    order in which both cross-ratios equal -1.
    """
    src = sys.punctures.normalization
    if src == target:
        return sys
    A = sys.residues
    if src == "Z" and target == "P":
        B = np.array([A[Z_TO_P_SLOT[k]] for k in range(4)])
        return FuchsianSystem(PunctureSet.P(), B, sys.rho, check_weights=False)
    if src == "P" and target == "Z":
        B = np.zeros_like(A)
        for k in range(4):
            B[Z_TO_P_SLOT[k]] = A[k]
        return FuchsianSystem(PunctureSet.Z(), B, sys.rho, check_weights=False)
    raise InvalidSystem(f"unknown target {target!r}")


def random_sl2(rng, scale=1.0):
    """A random SL(2,C) matrix with entries of size ~``scale``."""
    while True:
        g = scale * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        d = det2(g)
        if abs(d) > 0.5 * scale ** 2:
            return g / np.sqrt(d)


def random_stable_system(rng, rho=None, conjugate=True):
    """A random ``make_us`` system, optionally conjugated by a random gauge.

    ``u`` is drawn from ``0.3 <= |u| <= 1.5`` away from 1 and ``|s| <= 0.5``,
    which keeps the monodromy entries moderate (the Higgs term grows like
    ``|s| |u|^2`` and the transport exponentially in it).
    """
    if rho is None:
        rho = rng.uniform(0.02, 0.23)
    while True:
        u = rng.uniform(0.3, 1.5) * np.exp(2j * np.pi * rng.uniform())
        if abs(u - 1) > 0.3:
            break
    s = rng.uniform(0, 0.5) * np.exp(2j * np.pi * rng.uniform())
    sys = make_us(u, s, rho)
    if conjugate:
        sys = sys.conjugate(random_sl2(rng))
    return sys, u, s

"""The symmetric Fuchsian DPW potential on the P-normalized four-punctured sphere.

    eta = 1/(z^4+1) [[-4 a z,                      2 sqrt2 (b (z^2-1) - c (z^2+1))],
                     [2 sqrt2 (b (z^2-1) + c (z^2+1)),  4 a z                    ]] dz

with ``a, b, c`` Laurent polynomials in lambda with a simple pole at 0.
The angle parameter is t = 1/(2g+2) for genus g.
"""

import json

import numpy as np

from .errors import InvalidSystem, NonCompactAngle, PoleAtPuncture, PoleAtZeroLambda, ZeroResidueC
from .fuchsian import C_STD, D_STD, P_POINTS, FuchsianSystem, PunctureSet
from .loopalg import LaurentScalar

SQRT2 = np.sqrt(2.0)
P_ARRAY = np.array(P_POINTS)


def t_from_genus(g):
    if int(g) != g or g < 1:
        raise NonCompactAngle(f"genus must be a positive integer, got {g}")
    return 1.0 / (2 * int(g) + 2)


def genus_from_t(t, tol=1e-9):
    """The genus g with t = 1/(2g+2); NonCompactAngle if t is not of that form."""
    g = (1.0 / t - 2) / 2
    if t <= 0 or abs(g - round(g)) > tol * max(1.0, g) or round(g) < 1:
        raise NonCompactAngle(f"t = {t} is not of the form 1/(2g+2)")
    return int(round(g))


class PotentialCoefficients:
    """The triple ``(a, b, c)`` of LaurentScalars with ``n_min = -1`` and truncation ``N``."""

    def __init__(self, a, b, c, t):
        a, b, c = (x if isinstance(x, LaurentScalar) else LaurentScalar(x, -1) for x in (a, b, c))
        N = max(a.n_max, b.n_max, c.n_max, 1)
        for x in (a, b, c):
            if x.n_min < -1:
                raise InvalidSystem("coefficients may have at most a simple pole at lambda = 0")
        self.a, self.b, self.c = (x.truncate(N) if x.n_min == -1 else
                                  LaurentScalar(x._widen(-1, N), -1) for x in (a, b, c))
        self.t = float(t)

    @property
    def N(self):
        return self.a.n_max

    def arrays(self):
        """Dense coefficient arrays for exponents -1..N."""
        return self.a.coeffs, self.b.coeffs, self.c.coeffs

    def values(self, lam):
        lam = np.asarray(lam, dtype=complex)
        if np.any(lam == 0):
            raise PoleAtZeroLambda("lambda = 0")
        return self.a.eval(lam), self.b.eval(lam), self.c.eval(lam)

    def scaled(self, mu):
        return PotentialCoefficients(self.a * mu, self.b * mu, self.c * mu, self.t)

    def to_json(self):
        return {"t": self.t, "N": self.N, "a": self.a.to_json(), "b": self.b.to_json(), "c": self.c.to_json()}

    @classmethod
    def from_json(cls, d):
        try:
            return cls(LaurentScalar.from_json(d["a"]), LaurentScalar.from_json(d["b"]),
                       LaurentScalar.from_json(d["c"]), float(d["t"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSystem(f"malformed coefficient file: {exc}") from exc

    def save(self, path, **extra):
        d = self.to_json()
        d.update(extra)
        with open(path, "w") as fh:
            json.dump(d, fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def __repr__(self):
        return f"PotentialCoefficients(t={self.t}, N={self.N})"


def eta_values(z, a, b, c):
    """dz-coefficient of eta for broadcastable arrays of z and coefficient values."""
    z, a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=complex) for v in (z, a, b, c)))
    d = z ** 4 + 1
    z2 = z * z
    out = np.empty(z.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = -4 * a * z / d
    out[..., 1, 1] = -out[..., 0, 0]
    out[..., 0, 1] = 2 * SQRT2 * (b * (z2 - 1) - c * (z2 + 1)) / d
    out[..., 1, 0] = 2 * SQRT2 * (b * (z2 - 1) + c * (z2 + 1)) / d
    return out


def eta_local(dz, k, a, b, c):
    """``(z - p_k) eta`` at ``z = p_k + dz`` with the pole factor cancelled exactly."""
    dz, a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=complex) for v in (dz, a, b, c)))
    pk = P_ARRAY[k]
    z = pk + dz
    d = np.ones_like(z)
    for j, q in enumerate(P_ARRAY):
        if j != k:
            d = d * (z - q)
    z2 = z * z
    out = np.empty(z.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = -4 * a * z / d
    out[..., 1, 1] = -out[..., 0, 0]
    out[..., 0, 1] = 2 * SQRT2 * (b * (z2 - 1) - c * (z2 + 1)) / d
    out[..., 1, 0] = 2 * SQRT2 * (b * (z2 - 1) + c * (z2 + 1)) / d
    return out


def eta_matrix(coeffs, z, lam0):
    """The potential's dz-coefficient at ``(z, lambda0)``."""
    z = complex(z)
    if abs(z ** 4 + 1) < 1e-14:
        raise PoleAtPuncture("z is a root of z^4 + 1")
    a, b, c = coeffs.values(lam0)
    return eta_values(z, a, b, c)


def residue_matrices(a, b, c):
    """Residues at p_1..p_4 for coefficient values ``a, b, c`` (arrays broadcast)."""
    return np.stack([eta_local(0.0, k, a, b, c) for k in range(4)], axis=-3)


def residues_from_eta(coeffs, lam0, check_weights=True):
    """The P-normalized Fuchsian system of the potential at ``lambda0``."""
    a, b, c = coeffs.values(lam0)
    A = residue_matrices(a, b, c)
    return FuchsianSystem(PunctureSet.P(), A, coeffs.t, check_weights=check_weights)


def quadric_coefficients(coeffs):
    """Coefficients of ``a^2 - b^2 - c^2 + t^2`` on exponents -2..2N."""
    q = coeffs.a * coeffs.a - coeffs.b * coeffs.b - coeffs.c * coeffs.c
    q = q + LaurentScalar([coeffs.t ** 2], 0)
    return LaurentScalar(q._widen(-2, 2 * coeffs.N), -2)


def check_quadric(coeffs):
    """Largest coefficient of ``a^2 - b^2 - c^2 + t^2``."""
    return quadric_coefficients(coeffs).max_abs()


def check_nilpotent_residue(coeffs):
    """``|(Res b)^2 - (Res c)^2| + |(Res a)^2 - 2 (Res b)^2|``."""
    ra, rb, rc = coeffs.a.coeff(-1), coeffs.b.coeff(-1), coeffs.c.coeff(-1)
    if rc == 0:
        raise ZeroResidueC("Res c vanishes")
    return float(abs(rb * rb - rc * rc) + abs(ra * ra - 2 * rb * rb))


def eta_minus1(coeffs, z):
    """The lambda^{-1} coefficient of eta at ``z``."""
    return eta_values(z, coeffs.a.coeff(-1), coeffs.b.coeff(-1), coeffs.c.coeff(-1))


def first_order_seed(t, N=6):
    """``a = t/2 (1/lambda - lambda)``, ``b = c = -t/(2 sqrt2) (1/lambda + lambda)``."""
    if not (0 < t <= 0.25):
        raise InvalidSystem(f"t = {t} outside (0, 1/4]")
    if N < 1:
        raise InvalidSystem("truncation must be at least 1")
    a = np.zeros(N + 2)
    b = np.zeros(N + 2)
    a[0], a[2] = t / 2, -t / 2
    b[0] = b[2] = -t / (2 * SQRT2)
    return PotentialCoefficients(LaurentScalar(a, -1), LaurentScalar(b, -1), LaurentScalar(b.copy(), -1), t)


def _pullback_deviation(eta_fn, zs, lams):
    Di, Ci = np.linalg.inv(D_STD), np.linalg.inv(C_STD)
    dd = dt = 0.0
    for lam in lams:
        E = eta_fn(zs, lam)
        Em = eta_fn(-zs, lam)
        Ei = eta_fn(1 / zs, lam)
        dd = max(dd, float(np.abs(-Em - Di @ E @ D_STD).max()))
        dt = max(dt, float(np.abs(-Ei / (zs ** 2)[:, None, None] - Ci @ E @ C_STD).max()))
    return dd, dt


def check_symmetries(coeffs, eta_fn=None, zs=None, lams=None):
    """Deviations of ``delta^* eta - D^-1 eta D`` and ``tau^* eta - C^-1 eta C``.

    ``delta(z) = -z`` and ``tau(z) = 1/z``; ``eta_fn(z_array, lambda)`` can
    replace the ansatz to exercise the check itself.
    """
    if eta_fn is None:
        def eta_fn(z, lam):
            a, b, c = coeffs.values(lam)
            return eta_values(z, a, b, c)
    if zs is None:
        r = np.array([0.3, 0.7, 1.4, 2.5])
        th = np.linspace(0.1, 2 * np.pi, 9)
        zs = (r[:, None] * np.exp(1j * th[None, :])).ravel()
    if lams is None:
        lams = np.exp(2j * np.pi * np.arange(5) / 5 + 0.3j)
    return _pullback_deviation(eta_fn, np.asarray(zs, dtype=complex), lams)


class SymmetricPotential:
    """A potential together with the P-normalized punctures."""

    def __init__(self, coeffs):
        self.coeffs = coeffs
        self.punctures = PunctureSet.P()

    def at(self, lam0, check_weights=True):
        return residues_from_eta(self.coeffs, lam0, check_weights)

    def form(self, lams):
        """Batched form over spectral samples ``lams`` for the transport engine."""
        a, b, c = self.coeffs.values(np.atleast_1d(lams))

        def f(z):
            return eta_values(z, a, b, c)

        return f

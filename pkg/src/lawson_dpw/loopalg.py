"""Complex 2x2 matrices and finite Laurent polynomials in the spectral parameter.

A ``Matrix2c`` is represented by a complex ``numpy`` array of shape ``(2, 2)``;
the helpers below build and inspect such arrays.  Laurent polynomials are
small immutable classes holding a dense coefficient array that starts at
exponent ``n_min``.
"""

import numpy as np

from .errors import NotHermitianMetric, NotTraceFree, PoleAtZero

DEFAULT_TOL = 1e-10

E11 = np.array([[1, 0], [0, 0]], dtype=complex)
E12 = np.array([[0, 1], [0, 0]], dtype=complex)
E21 = np.array([[0, 0], [1, 0]], dtype=complex)
E22 = np.array([[0, 0], [0, 1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


def mat2(a11, a12, a21, a22):
    """Build a complex 2x2 matrix from its row-major entries."""
    return np.array([[a11, a12], [a21, a22]], dtype=complex)


def tracefree_matrix(a11, a12, a21, a22, tol=DEFAULT_TOL):
    """Build a 2x2 matrix and assert that it is trace-free."""
    A = mat2(a11, a12, a21, a22)
    if abs(A[0, 0] + A[1, 1]) >= tol:
        raise NotTraceFree(f"trace {A[0, 0] + A[1, 1]} exceeds {tol}")
    return A


def as_matrix(A):
    A = np.asarray(A, dtype=complex)
    if A.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {A.shape}")
    return A


def det2(A):
    """Determinant of a stack of 2x2 matrices (last two axes)."""
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def inv2(A):
    """Inverse of a stack of 2x2 matrices via the adjugate."""
    out = np.empty_like(A)
    d = det2(A)
    out[..., 0, 0] = A[..., 1, 1] / d
    out[..., 1, 1] = A[..., 0, 0] / d
    out[..., 0, 1] = -A[..., 0, 1] / d
    out[..., 1, 0] = -A[..., 1, 0] / d
    return out


def trace2(A):
    return A[..., 0, 0] + A[..., 1, 1]


def dagger(A):
    return np.conj(np.swapaxes(A, -1, -2))


def _order_pair(mu):
    if mu.real < 0 or (mu.real == 0 and mu.imag < 0):
        mu = -mu
    return mu, -mu


def eigenvalues_tracefree(A, tol=DEFAULT_TOL):
    """Eigenvalues ``(mu, -mu)`` of a trace-free matrix.

    The first eigenvalue has nonnegative real part, ties broken by a
    nonnegative imaginary part.
    """
    A = as_matrix(A)
    if abs(trace2(A)) >= tol:
        raise NotTraceFree(f"trace {trace2(A)} exceeds {tol}")
    # centre the trace away so round-off in a nearly trace-free input does not leak in
    A0 = A - 0.5 * trace2(A) * ID2
    mu = np.sqrt(complex(-det2(A0)))
    # snap tiny real or imaginary parts produced by sqrt of near-real numbers
    scale = max(abs(mu), 1.0)
    if abs(mu.real) < 1e-15 * scale:
        mu = complex(0.0, mu.imag)
    if abs(mu.imag) < 1e-15 * scale:
        mu = complex(mu.real, 0.0)
    return _order_pair(mu)


def is_nilpotent(A, tol=DEFAULT_TOL):
    """True iff both the trace and the determinant vanish within ``tol``."""
    A = as_matrix(A)
    return bool(abs(trace2(A)) < tol and abs(det2(A)) < tol)


def eigenline(A, mu):
    """A unit vector spanning the ``mu``-eigenline of ``A``."""
    B = as_matrix(A) - mu * ID2
    # kernel of a rank-one matrix: use the row of largest norm
    r = B[0] if np.linalg.norm(B[0]) >= np.linalg.norm(B[1]) else B[1]
    if np.linalg.norm(r) == 0.0:
        v = np.array([1.0, 0.0], dtype=complex)
    else:
        v = np.array([-r[1], r[0]], dtype=complex)
    return v / np.linalg.norm(v)


class _Laurent:
    """Dense finite Laurent polynomial with coefficient array ``coeffs[n - n_min]``."""

    _core_shape = ()

    def __init__(self, coeffs, n_min=0):
        c = np.array(coeffs, dtype=complex)
        if c.ndim == len(self._core_shape):
            c = c[None]
        if c.shape[1:] != self._core_shape:
            raise ValueError(f"bad coefficient shape {c.shape}")
        if c.shape[0] == 0:
            c = np.zeros((1,) + self._core_shape, dtype=complex)
        c.setflags(write=False)
        self._c = c
        self._n_min = int(n_min)

    @property
    def coeffs(self):
        return self._c

    @property
    def n_min(self):
        return self._n_min

    @property
    def n_max(self):
        return self._n_min + self._c.shape[0] - 1

    @property
    def N(self):
        """Truncation order (highest represented exponent)."""
        return self.n_max

    def exponents(self):
        return np.arange(self.n_min, self.n_max + 1)

    def coeff(self, n):
        k = n - self.n_min
        if 0 <= k < self._c.shape[0]:
            return self._c[k]
        return np.zeros(self._core_shape, dtype=complex)[()]

    def _widen(self, n_min, n_max):
        out = np.zeros((n_max - n_min + 1,) + self._core_shape, dtype=complex)
        k = self.n_min - n_min
        out[k:k + self._c.shape[0]] = self._c
        return out

    def _binary(self, other, op):
        if not isinstance(other, type(self)):
            return NotImplemented
        lo = min(self.n_min, other.n_min)
        hi = max(self.n_max, other.n_max)
        return type(self)(op(self._widen(lo, hi), other._widen(lo, hi)), lo)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __neg__(self):
        return type(self)(-self._c, self.n_min)

    def truncate(self, N):
        """Drop all exponents above ``N`` (zero-pad if ``N`` exceeds ``n_max``)."""
        if N < self.n_min:
            raise ValueError("truncation below n_min")
        return type(self)(self._widen(self.n_min, max(N, self.n_max))[:N - self.n_min + 1], self.n_min)

    def eval(self, lam):
        """Evaluate at ``lam`` (scalar or array)."""
        lam = np.asarray(lam, dtype=complex)
        if self.n_min < 0 and np.any(lam == 0):
            raise PoleAtZero("negative exponents evaluated at lambda = 0")
        # Horner in lambda, then multiply by lambda**n_min
        acc = np.zeros(lam.shape + self._core_shape, dtype=complex)
        lam_b = lam.reshape(lam.shape + (1,) * len(self._core_shape))
        for c in self._c[::-1]:
            acc = acc * lam_b + c
        return acc * lam_b ** self.n_min

    def residue(self):
        """Coefficient of ``lambda**-1``."""
        return self.coeff(-1)

    def max_abs(self):
        return float(np.abs(self._c).max())

    def __eq__(self, other):
        if not isinstance(other, type(self)):
            return NotImplemented
        lo = min(self.n_min, other.n_min)
        hi = max(self.n_max, other.n_max)
        return bool(np.array_equal(self._widen(lo, hi), other._widen(lo, hi)))

    def __hash__(self):
        return hash((self.n_min, self._c.tobytes()))


class LaurentScalar(_Laurent):
    """Finite Laurent polynomial with complex coefficients."""

    def __mul__(self, other):
        if isinstance(other, LaurentScalar):
            return LaurentScalar(np.convolve(self._c, other._c), self.n_min + other.n_min)
        if isinstance(other, LaurentMatrix):
            return other.__rmul__(self)
        if np.isscalar(other):
            return LaurentScalar(self._c * other, self.n_min)
        return NotImplemented

    __rmul__ = __mul__

    def __pow__(self, k):
        out = LaurentScalar([1.0], 0)
        for _ in range(int(k)):
            out = out * self
        return out

    def to_json(self):
        return {"n_min": self.n_min, "coeffs": [[float(c.real), float(c.imag)] for c in self._c]}

    @classmethod
    def from_json(cls, d):
        return cls([complex(re, im) for re, im in d["coeffs"]], d["n_min"])

    @classmethod
    def monomial(cls, n, value=1.0):
        return cls([value], n)

    def __repr__(self):
        return f"LaurentScalar(n_min={self.n_min}, coeffs={np.round(self._c, 12).tolist()})"


class LaurentMatrix(_Laurent):
    """Finite Laurent polynomial with 2x2 matrix coefficients."""

    _core_shape = (2, 2)

    def __mul__(self, other):
        if isinstance(other, LaurentMatrix):
            k = self._c.shape[0] + other._c.shape[0] - 1
            out = np.zeros((k, 2, 2), dtype=complex)
            for i, A in enumerate(self._c):
                out[i:i + other._c.shape[0]] += A @ other._c
            return LaurentMatrix(out, self.n_min + other.n_min)
        if isinstance(other, LaurentScalar):
            return self.__rmul__(other)
        if np.isscalar(other):
            return LaurentMatrix(self._c * other, self.n_min)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, LaurentScalar):
            k = self._c.shape[0] + other.coeffs.shape[0] - 1
            out = np.zeros((k, 2, 2), dtype=complex)
            for i, s in enumerate(other.coeffs):
                out[i:i + self._c.shape[0]] += s * self._c
            return LaurentMatrix(out, self.n_min + other.n_min)
        if np.isscalar(other):
            return LaurentMatrix(self._c * other, self.n_min)
        return NotImplemented

    @classmethod
    def from_scalar(cls, s, M):
        """The Laurent matrix ``s(lambda) * M`` for a constant matrix ``M``."""
        return cls(s.coeffs[:, None, None] * as_matrix(M)[None], s.n_min)

    def to_json(self):
        return {"n_min": self.n_min,
                "coeffs": [[[float(z.real), float(z.imag)] for z in A.ravel()] for A in self._c]}

    @classmethod
    def from_json(cls, d):
        return cls([np.array([complex(re, im) for re, im in A]).reshape(2, 2) for A in d["coeffs"]], d["n_min"])

    def __repr__(self):
        return f"LaurentMatrix(n_min={self.n_min}, N={self.N})"


def laurent_eval(P, lam0):
    """Evaluate a Laurent polynomial at ``lam0``."""
    return P.eval(lam0)


def residue_at_zero(P):
    """The ``lambda**-1`` coefficient (zero if absent)."""
    return P.residue()


class HermitianMetric:
    """Positive-definite Hermitian 2x2 matrix normalized to determinant one."""

    def __init__(self, H, tol=1e-8):
        H = as_matrix(H)
        if np.abs(H - dagger(H)).max() > tol * max(1.0, np.abs(H).max()):
            raise NotHermitianMetric("matrix is not Hermitian")
        H = 0.5 * (H + dagger(H))
        w = np.linalg.eigvalsh(H)
        if w[0] <= 0:
            raise NotHermitianMetric(f"eigenvalues {w} not positive")
        if abs(det2(H).real - 1.0) > tol * max(1.0, np.abs(H).max() ** 2):
            raise NotHermitianMetric(f"determinant {det2(H).real} is not one")
        H.setflags(write=False)
        self.H = H

    @classmethod
    def normalized(cls, H):
        """Rescale a positive Hermitian matrix to determinant one."""
        H = as_matrix(H)
        H = 0.5 * (H + dagger(H))
        return cls(H / np.sqrt(det2(H).real))

    def sqrt_factor(self):
        """Upper-triangular ``C`` with ``C^* C = H`` (Cholesky factor)."""
        L = np.linalg.cholesky(self.H)
        return dagger(L)

    def __repr__(self):
        return f"HermitianMetric({np.round(self.H, 10).tolist()})"

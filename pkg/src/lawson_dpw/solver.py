"""Newton solver and continuation in t for the monodromy problem of the potential.

Unknowns live in a real chart on the constraint set: the coefficients of
``a, b, c`` are real, the pole parts satisfy ``c_{-1} = b_{-1}`` and
``a_{-1} = -sqrt2 b_{-1}`` (nilpotent residue in lambda), and ``a_0..a_N``
are eliminated by the quadric ``a^2 - b^2 - c^2 = -t^2`` at orders
``-1..N-1``.  The chart parameters are ``(b_{-1}, b_0..b_N, c_0..c_N)``.

The residual collects

* ``Im tr(M1 M2)``, ``Im tr(M1 M3)``, ``Im tr(M1 M4)`` at the unit-circle
  samples (trace reality of the pair invariants);
* real and imaginary parts of the commutators ``[M1, M_k]``, k = 2, 3, 4,
  at the Sym points, where the representation has to be reducible (hence
  abelian, being unitarizable there);
* the quadric coefficients of orders ``N..2N`` that the truncation cannot
  eliminate.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import zeta

from .errors import (EliminationSingular, InvalidSystem, JacobianSingular, NoConvergence, StepFailure,
                     StepUnderflow)
from .fuchsian import D_STD
from .loopalg import LaurentScalar, trace2
from .monodromy import P_BASEPOINT, P_RADIUS, loop_monodromies, unitarize
from .potential import P_ARRAY, SQRT2, PotentialCoefficients, eta_values, first_order_seed

log = logging.getLogger(__name__)

ZETA3 = float(zeta(3))
_D_INV = np.linalg.inv(D_STD)


def sample_points(m):
    """The 2m-th roots of unity without +1 and -1."""
    lam = np.exp(1j * np.pi * np.arange(2 * m) / m)
    return lam[np.abs(lam.imag) > 1e-12]


@dataclass
class ClosingConfig:
    m: int = 8
    sym_points: tuple = (1j, -1j)
    newton_tol: float = 1e-9
    max_iter: int = 25
    continuation_step: float = 0.01
    step_floor: float = 1e-4
    N: int = 6
    N_max: int = 0
    N_step: int = 4
    floor_factor: float = 1e3
    rtol: float = 1e-12
    fd_step: float = 1e-7
    threads: int = 1

    def __post_init__(self):
        self.N_max = max(self.N_max, self.N)
        if self.m < 2 or self.newton_tol <= 0 or self.max_iter < 0 or self.rtol <= 0:
            raise InvalidSystem("invalid closing configuration")

    @property
    def lambda_samples(self):
        return sample_points(self.m)


@dataclass
class SolveResult:
    coeffs: PotentialCoefficients
    residual_norm: float
    newton_iterations: int
    x: np.ndarray
    continuation_trace: list = field(default_factory=list)
    guard_residual: float = float("nan")


# ---------------------------------------------------------------- chart

def n_params(N):
    return 2 * N + 3


def chart_arrays(x, t, N):
    """Coefficient arrays (exponents -1..N) of a, b, c from chart parameters."""
    x = np.asarray(x, dtype=float)
    if x.shape != (n_params(N),):
        raise InvalidSystem(f"expected {n_params(N)} parameters, got {x.shape}")
    bm1 = x[0]
    b = np.concatenate([[bm1], x[1:N + 2]])
    c = np.concatenate([[bm1], x[N + 2:2 * N + 3]])
    a = np.zeros(N + 2)
    a[0] = -SQRT2 * bm1
    if abs(a[0]) < 1e-300:
        raise EliminationSingular("b_{-1} = 0: the quadric cannot be solved for a")
    for n in range(-1, N):
        # order-n coefficient of a^2 - b^2 - c^2 + t^2 is 2 a_{-1} a_{n+1} + (known terms)
        s = 0.0
        for i in range(-1, n + 2):
            j = n - i
            if j < -1 or j > N:
                continue
            s -= b[i + 1] * b[j + 1] + c[i + 1] * c[j + 1]
            if i != -1 and j != -1:
                s += a[i + 1] * a[j + 1]
        if n == 0:
            s += t * t
        a[n + 2] = -s / (2 * a[0])
    return a, b, c


def chart(x, t, N):
    a, b, c = chart_arrays(x, t, N)
    return PotentialCoefficients(LaurentScalar(a, -1), LaurentScalar(b, -1), LaurentScalar(c, -1), t)


def inverse_chart(coeffs):
    """Chart parameters of a coefficient triple (the real parts of the free coefficients)."""
    a, b, c = coeffs.arrays()
    return np.concatenate([[b[0].real], b[1:].real, c[1:].real])


def quadric_tail(a, b, c, t, N):
    """Quadric coefficients of orders N..2N."""
    q = np.convolve(a, a) - np.convolve(b, b) - np.convolve(c, c)
    q[2] += t * t
    return q[N + 2:]


def resize_params(x, N_old, N_new):
    """Pad (with zeros) or cut chart parameters to another truncation order."""
    x = np.asarray(x, dtype=float)
    b = x[1:N_old + 2]
    c = x[N_old + 2:]
    k = N_new + 1
    pad = lambda v: np.concatenate([v[:k], np.zeros(max(0, k - len(v)))])
    return np.concatenate([[x[0]], pad(b), pad(c)])


def seed_params(t, N):
    return inverse_chart(first_order_seed(t, N))


# ---------------------------------------------------------------- residual

def _evalc(coef, lam):
    n = np.arange(coef.shape[-1]) - 1
    return np.sum(coef[..., None, :] * lam[:, None] ** n, axis=-1)


def potential_monodromies(arrays, lams, rtol=1e-12):
    """Monodromies ``M1..M4`` (P chart, basepoint 0) for a batch of coefficient arrays.

    ``arrays`` is a tuple ``(a, b, c)`` each of shape ``(K, N+2)``; returns shape
    ``(4, K, len(lams), 2, 2)``.  Loops around p2 and p4 follow from those around
    p1 and p3 by ``M2 = D^-1 M1 D`` and ``M4 = D^-1 M3 D`` (delta-equivariance).
    """
    a, b, c = (np.atleast_2d(v) for v in arrays)
    K = a.shape[0]
    lams = np.asarray(lams, dtype=complex)
    av, bv, cv = (_evalc(v, lams).ravel() for v in (a, b, c))

    def form(z):
        return eta_values(z, av, bv, cv)

    M13 = loop_monodromies(form, [P_ARRAY[0], P_ARRAY[2]], P_BASEPOINT, P_RADIUS, K * len(lams), rtol)
    M13 = M13.reshape(2, K, len(lams), 2, 2)
    M1, M3 = M13
    return np.stack([M1, _D_INV @ M1 @ D_STD, M3, _D_INV @ M3 @ D_STD])


def commutator_defect(M):
    """Entries of ``[M_1, M_k]`` for k = 2, 3, 4, shape ``(3, ..., 4)``.

    On the unit circle a reducible unitarizable representation is abelian,
    so these vanish to first order at the Sym points.
    """
    M1 = M[0]
    return np.array([(M1 @ Mk - Mk @ M1).reshape(Mk.shape[:-2] + (4,)) for Mk in M[1:]])


def _residual_from_monodromies(M, n_samples, arrays, t, N):
    M1, M2, M3, M4 = M
    s = slice(0, n_samples)
    y = slice(n_samples, None)
    parts = [trace2(M1[:, s] @ M2[:, s]).imag, trace2(M1[:, s] @ M3[:, s]).imag,
             trace2(M1[:, s] @ M4[:, s]).imag]
    com = commutator_defect(np.stack([M1[:, y], M2[:, y], M3[:, y], M4[:, y]]))
    com = np.moveaxis(com, 1, 0).reshape(M1.shape[0], -1)
    parts += [com.real, com.imag]
    a, b, c = arrays
    tails = np.array([quadric_tail(a[k], b[k], c[k], t, N) for k in range(a.shape[0])])
    return np.concatenate(parts + [tails], axis=1)


def closing_residual_batch(X, t, N, cfg, lams=None):
    """Residual vectors for a batch of chart parameter vectors ``X`` (shape ``(K, 2N+3)``)."""
    X = np.atleast_2d(X)
    if lams is None:
        lams = cfg.lambda_samples
    allam = np.concatenate([lams, np.asarray(cfg.sym_points, dtype=complex)])
    arrays = tuple(np.array(v) for v in zip(*(chart_arrays(x, t, N) for x in X)))
    threads = max(1, int(cfg.threads))
    if threads == 1 or X.shape[0] < 2 * threads:
        M = potential_monodromies(arrays, allam, cfg.rtol)
    else:
        chunks = np.array_split(np.arange(X.shape[0]), threads)
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda idx: potential_monodromies(tuple(v[idx] for v in arrays), allam, cfg.rtol),
                                chunks))
        M = np.concatenate(parts, axis=1)
    return _residual_from_monodromies(M, len(lams), arrays, t, N)


def closing_residual(coeffs, cfg=None):
    """Residual vector of a coefficient triple (evaluated through its chart parameters)."""
    cfg = cfg or ClosingConfig(N=coeffs.N)
    x = inverse_chart(coeffs)
    return closing_residual_batch(x[None], coeffs.t, coeffs.N, cfg)[0]


# ---------------------------------------------------------------- Newton

def newton(x0, t, cfg, N=None):
    """Damped Gauss-Newton with a forward-difference Jacobian.

    Returns ``(x, residual_norm, iterations)``.
    """
    N = cfg.N if N is None else N
    x = np.array(x0, dtype=float)
    F = closing_residual_batch(x[None], t, N, cfg)[0]
    nrm = float(np.linalg.norm(F))
    for it in range(cfg.max_iter + 1):
        log.debug("t=%.6g it=%d |F|=%.3e", t, it, nrm)
        if nrm < cfg.newton_tol:
            return x, nrm, it
        if it == cfg.max_iter:
            break
        h = cfg.fd_step * max(np.abs(x).max(), 1e-3)
        R = closing_residual_batch(x[None] + h * np.eye(len(x)), t, N, cfg)
        J = (R - F).T / h
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] <= 1e-13 * sv[0]:
            raise JacobianSingular(f"Jacobian condition {sv[0] / max(sv[-1], 1e-300):.2e}")
        dx = np.linalg.lstsq(J, -F, rcond=None)[0]
        step = 1.0
        while True:
            xn = x + step * dx
            try:
                with np.errstate(over="ignore", invalid="ignore"):  # diverging trials count as failures
                    Fn = closing_residual_batch(xn[None], t, N, cfg)[0]
                nn = float(np.linalg.norm(Fn))
            except (EliminationSingular, StepFailure, ArithmeticError):
                nn = np.inf
            if nn < nrm or step < 1e-4:
                break
            step /= 2
        if not np.isfinite(nn) or nn >= nrm:
            err = NoConvergence(f"line search failed at |F| = {nrm:.3e} (t = {t})")
            err.residual = nrm
            raise err
        x, F, nrm = xn, Fn, nn
    err = NoConvergence(f"no convergence in {cfg.max_iter} iterations, |F| = {nrm:.3e} (t = {t})")
    err.residual = nrm
    raise err


def sample_guard(x, t, cfg, N=None):
    """Residual norm with twice as many spectral samples."""
    N = cfg.N if N is None else N
    return float(np.linalg.norm(closing_residual_batch(np.asarray(x)[None], t, N, cfg,
                                                       lams=sample_points(2 * cfg.m))[0]))


def solve_at_t(t, seed=None, cfg=None):
    """Solve the monodromy problem at ``t`` starting from ``seed`` (coefficients or chart vector)."""
    cfg = cfg or ClosingConfig()
    if not (0 < t <= 0.25):
        raise InvalidSystem(f"t = {t} outside (0, 1/4]")
    if seed is None:
        x0 = seed_params(t, cfg.N)
    elif isinstance(seed, PotentialCoefficients):
        x0 = inverse_chart(seed if seed.N == cfg.N else _repad(seed, cfg.N))
    else:
        x0 = np.asarray(seed, dtype=float)
    x, nrm, it = newton(x0, t, cfg)
    guard = sample_guard(x, t, cfg)
    if guard > 10 * cfg.newton_tol:
        raise NoConvergence(f"residual {guard:.2e} with doubled samples (sample dependence)")
    return SolveResult(chart(x, t, cfg.N), nrm, it, x, [(t, nrm, it)], guard)


def _repad(coeffs, N):
    a, b, c = (LaurentScalar(v.coeffs[:N + 2], -1).truncate(N) for v in (coeffs.a, coeffs.b, coeffs.c))
    return PotentialCoefficients(a, b, c, coeffs.t)


def continue_in_t(t_start, t_end, cfg=None, callback=None, start=None):
    """Predictor-corrector continuation from ``t_start`` to ``t_end``.

    The first point is solved from the first-order seed unless a previous
    SolveResult ``start`` is given (its truncation order is kept if larger).
    Later predictors extrapolate the chart parameters linearly from the last
    two solutions.  When Newton stalls close to convergence (residual below
    ``cfg.floor_factor * cfg.newton_tol``, the signature of the truncation
    floor) the truncation order grows by ``cfg.N_step`` (up to ``cfg.N_max``,
    with at least N + 4 sample pairs); any other failure halves the step.
    The step doubles after three successes; hitting ``cfg.step_floor``
    raises StepUnderflow carrying the results so far.
    """
    cfg = cfg or ClosingConfig()
    if start is None:
        first = solve_at_t(t_start, None, cfg)
    else:
        first = start
        t_start = start.coeffs.t
        if start.coeffs.N > cfg.N:
            N = start.coeffs.N
            cfg = replace(cfg, N=N, N_max=max(cfg.N_max, N), m=max(cfg.m, N + 4))
    results = [first]
    trace = [(t_start, first.residual_norm, first.newton_iterations)]
    if callback:
        callback(first)
    direction = 1.0 if t_end >= t_start else -1.0
    h = cfg.continuation_step
    successes = 0
    t = t_start
    while direction * (t_end - t) > 1e-14:
        tn = t + direction * min(h, abs(t_end - t))
        if len(results) >= 2:
            r0, r1 = results[-2], results[-1]
            t0, t1 = r0.coeffs.t, r1.coeffs.t
            x0 = resize_params(r0.x, r0.coeffs.N, cfg.N)
            x1 = resize_params(r1.x, r1.coeffs.N, cfg.N)
            pred = x1 + (x1 - x0) * (tn - t1) / (t1 - t0)
        else:
            pred = resize_params(results[-1].x, results[-1].coeffs.N, cfg.N) * tn / t
        try:
            res = solve_at_t(tn, pred, cfg)
        except (NoConvergence, JacobianSingular, EliminationSingular, StepFailure) as exc:
            log.info("continuation step to t=%.6g failed (N=%d): %s", tn, cfg.N, exc)
            floor = getattr(exc, "residual", np.inf) < cfg.floor_factor * cfg.newton_tol
            if floor and cfg.N < cfg.N_max:
                N = min(cfg.N + cfg.N_step, cfg.N_max)
                cfg = replace(cfg, N=N, m=max(cfg.m, N + 4))
                log.info("raising truncation to N=%d, m=%d", cfg.N, cfg.m)
                try:
                    last = results[-1]
                    res = solve_at_t(last.coeffs.t, resize_params(last.x, last.coeffs.N, cfg.N), cfg)
                    res.continuation_trace = list(trace)
                    results[-1] = res
                except (NoConvergence, JacobianSingular, EliminationSingular, StepFailure) as exc2:
                    log.info("re-solve at the larger truncation failed: %s", exc2)
                continue
            h /= 2
            successes = 0
            if h < cfg.step_floor:
                err = StepUnderflow(f"continuation step fell below {cfg.step_floor} at t = {t}")
                err.results = results
                err.trace = trace
                raise err
            continue
        t = tn
        results.append(res)
        trace.append((t, res.residual_norm, res.newton_iterations))
        res.continuation_trace = list(trace)
        if callback:
            callback(res)
        successes += 1
        if successes >= 3:
            h *= 2
            successes = 0
    return results


def area_series(t):
    """``8 pi (1 - log 2 t - 9/4 zeta(3) t^3)``."""
    if not (0 <= t <= 0.25):
        raise InvalidSystem(f"t = {t} outside [0, 1/4]")
    return float(8 * np.pi * (1 - np.log(2) * t - 2.25 * ZETA3 * t ** 3))


def unitarity_check(coeffs, cfg=None, lams=None):
    """Unitarize residuals at each spectral sample (a posteriori intrinsic-closing check)."""
    cfg = cfg or ClosingConfig(N=coeffs.N)
    lams = cfg.lambda_samples if lams is None else np.asarray(lams)
    arrays = tuple(v[None] for v in coeffs.arrays())
    M = potential_monodromies(arrays, lams, cfg.rtol)[:, 0]
    return [unitarize(M[:, j]) for j in range(len(lams))]


def default_threads():
    env = os.environ.get("LAWSON_DPW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1

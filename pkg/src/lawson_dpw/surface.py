"""Reconstruction of the minimal surface in S^3 from a solved potential.

Pipeline:

1. Monodromies on an offset spectral grid ``lambda_j = exp(2 pi i (j + 1/2)/K)``
   give the invariant metrics ``H(lambda_j)``; their Fourier interpolant gives
   ``H`` at the Sym points ``+-i`` where the representation is abelian and the
   invariant metric is not unique.
2. The frame ``Phi`` is transported from ``z = 0`` over a mesh of the four
   quadrants.  Each quadrant ``Q_q = i^q Q_1`` is the image of the unit disc
   under ``z = i^q sqrt(i (1 + w)/(1 - w))``, centred on its puncture, and is
   slit along ``arg w = 0`` (the diagonal from the puncture to infinity).
3. ``X = C Phi`` with ``C^* C = H`` is split as ``X = F B`` (unitary times
   positive loop) through the block Toeplitz system of ``G = X^* X``.
4. ``f = F(i) F(-i)^{-1}`` lies in SU(2), identified with the unit sphere of C^2.

The fundamental piece is extended by the isometries ``f -> U_k(i) f U_k(-i)^{-1}``
with ``U_k = C M_k C^{-1}``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import InsufficientSamples, MissingUnitarization, NonCompactAngle, NonUnitary
from .fuchsian import D_STD
from .loopalg import ID2, dagger, det2
from .monodromy import P_BASEPOINT, P_RADIUS, batch_flow, invariant_form_svd, loop_monodromies
from .potential import P_ARRAY, SQRT2, eta_local, eta_values, genus_from_t

log = logging.getLogger(__name__)

SYM_POINTS = (1j, -1j)
QUAD_TO_K = (0, 2, 1, 3)  # quadrant i^q Q1 contains puncture p_{QUAD_TO_K[q] + 1}
_P1 = P_ARRAY[0]
_D_INV = np.linalg.inv(D_STD)


# ---------------------------------------------------------------- spectral data

def offset_grid(K):
    return np.exp(2j * np.pi * (np.arange(K) + 0.5) / K)


def _signed_freqs(K):
    return np.fft.fftfreq(K, 1.0 / K).astype(int)


def fourier_coefficients(samples, K):
    """Coefficients ``G_n`` (signed n, FFT order) of samples on the offset grid."""
    n = _signed_freqs(K)
    Gh = np.fft.fft(samples, axis=-3) / K
    return Gh * np.exp(-1j * np.pi * n / K)[:, None, None]


def fourier_eval(coef, K, lam):
    n = _signed_freqs(K)
    return np.einsum("n,...nij->...ij", lam ** n, coef)


def hermitian_sqrt(H):
    w, V = np.linalg.eigh(H)
    return V @ (np.sqrt(w)[..., None] * dagger(V))


@dataclass
class SpectralData:
    """Unitarization data of a solved potential."""

    coeffs: object
    K: int
    lams: np.ndarray
    H: np.ndarray            # (K, 2, 2) invariant metrics on the grid
    C: np.ndarray            # (K, 2, 2) Hermitian square roots
    H_sym: np.ndarray        # (2, 2, 2) at +i, -i
    C_sym: np.ndarray
    M_sym: np.ndarray        # (4, 2, 2, 2): loop k, sym point
    U_sym: np.ndarray        # C M C^-1 at the sym points
    kernel_ratio: float      # worst s_min / s_second over the grid

    @property
    def t(self):
        return self.coeffs.t

    def all_lams(self):
        return np.concatenate([self.lams, np.array(SYM_POINTS)])


def _coefficient_values(coeffs, lams):
    a, b, c = coeffs.values(lams)
    return a, b, c


def spectral_data(coeffs, K=64, rtol=1e-12, max_kernel_ratio=1e-4):
    """Invariant metrics on the offset grid and their values at the Sym points."""
    lams = offset_grid(K)
    allam = np.concatenate([lams, np.array(SYM_POINTS)])
    av, bv, cv = _coefficient_values(coeffs, allam)

    def form(z):
        return eta_values(z, av, bv, cv)

    M13 = loop_monodromies(form, [P_ARRAY[0], P_ARRAY[2]], P_BASEPOINT, P_RADIUS, len(allam), rtol)
    M1, M3 = M13
    M = np.stack([M1, _D_INV @ M1 @ D_STD, M3, _D_INV @ M3 @ D_STD])  # (4, L, 2, 2)
    Mg = np.moveaxis(M[:, :K], 0, 1)  # (K, 4, 2, 2)
    s, H = invariant_form_svd(Mg)
    ratio = float(np.max(s[:, 0] / s[:, 1]))
    if ratio > max_kernel_ratio:
        raise MissingUnitarization(f"invariant metric not determined (kernel ratio {ratio:.2e})")
    H = 0.5 * (H + dagger(H))
    sign = np.sign(np.trace(H, axis1=-2, axis2=-1).real)
    H = H * sign[:, None, None]
    if np.any(np.linalg.eigvalsh(H)[:, 0] <= 0):
        raise MissingUnitarization("invariant form is indefinite")
    H = H / np.sqrt(det2(H).real)[:, None, None]
    coef = fourier_coefficients(H, K)
    H_sym = np.array([fourier_eval(coef, K, lam) for lam in SYM_POINTS])
    H_sym = 0.5 * (H_sym + dagger(H_sym))
    H_sym = H_sym / np.sqrt(det2(H_sym).real)[:, None, None]
    C = hermitian_sqrt(H)
    C_sym = hermitian_sqrt(H_sym)
    M_sym = M[:, K:]
    U_sym = C_sym[None] @ M_sym @ np.linalg.inv(C_sym)[None]
    return SpectralData(coeffs, K, lams, H, C, H_sym, C_sym, M_sym, U_sym, ratio)


def iwasawa_factor(X, K):
    """Positive-part data of ``X`` sampled on the offset grid.

    Solves ``sum_m G_{n-m} Y_m = delta_{n0} Id`` for ``G = X^* X``; the inverse
    positive factor is ``B^{-1}(lambda) = Y(lambda) B_0^*`` with ``B_0`` the
    upper Cholesky factor of ``Y_0^{-1}``.  Returns ``(Y, B0)`` with ``Y`` of
    shape ``(..., K/2, 2, 2)``.
    """
    G = dagger(X) @ X
    Gh = fourier_coefficients(G, K)
    Mt = K // 2
    idx = (np.arange(Mt)[:, None] - np.arange(Mt)[None, :]) % K
    T = Gh[..., idx, :, :]
    T = np.swapaxes(T, -3, -2).reshape(X.shape[:-3] + (2 * Mt, 2 * Mt))
    rhs = np.zeros(X.shape[:-3] + (2 * Mt, 2), dtype=complex)
    rhs[..., 0, 0] = 1
    rhs[..., 1, 1] = 1
    Y = np.linalg.solve(T, rhs).reshape(X.shape[:-3] + (Mt, 2, 2))
    Y0 = Y[..., 0, :, :]
    Y0 = 0.5 * (Y0 + dagger(Y0))
    L = np.linalg.cholesky(np.linalg.inv(Y0))
    return Y, dagger(L)


def unitary_frame(Phi_grid, Phi_sym, data, tol=1e-7):
    """``F(+i)`` and ``F(-i)`` from frames on the grid and at the Sym points.

    ``Phi_grid`` has shape ``(..., K, 2, 2)`` and ``Phi_sym`` ``(..., 2, 2, 2)``.
    """
    K = data.K
    X = data.C @ Phi_grid
    Y, B0 = iwasawa_factor(X, K)
    Mt = Y.shape[-3]
    out = []
    for j, lam in enumerate(SYM_POINTS):
        Ylam = np.einsum("n,...nij->...ij", lam ** np.arange(Mt), Y)
        F = data.C_sym[j] @ Phi_sym[..., j, :, :] @ Ylam @ dagger(B0)
        out.append(F)
    F = np.stack(out, axis=-3)
    dev = float(np.abs(dagger(F) @ F - ID2).max()) if F.size else 0.0
    if dev > tol:
        raise NonUnitary(f"frame deviates from unitarity by {dev:.2e}")
    return F, dev


def su2_to_vec(f):
    """First column of an SU(2) matrix as a real 4-vector."""
    a, b = f[..., 0, 0], f[..., 1, 0]
    return np.stack([a.real, a.imag, b.real, b.imag], axis=-1)


def vec_to_su2(v):
    a = v[..., 0] + 1j * v[..., 1]
    b = v[..., 2] + 1j * v[..., 3]
    out = np.empty(v.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = a
    out[..., 0, 1] = -np.conj(b)
    out[..., 1, 0] = b
    out[..., 1, 1] = np.conj(a)
    return out


def sym_point_immersion(F, tol=1e-7):
    """``f = F(i) F(-i)^{-1}`` as unit 4-vectors."""
    f = F[..., 0, :, :] @ dagger(F[..., 1, :, :])
    dev = float(np.abs(dagger(f) @ f - ID2).max()) if f.size else 0.0
    if dev > tol:
        raise NonUnitary(f"immersion leaves SU(2) by {dev:.2e}")
    return su2_to_vec(f)


# ---------------------------------------------------------------- symmetry group

def isometry_matrix(U, V):
    """Real 4x4 matrix of ``f -> U f V^{-1}`` on the first-column coordinates."""
    cols = []
    for e in np.eye(4):
        cols.append(su2_to_vec(U @ vec_to_su2(e) @ np.linalg.inv(V)))
    return np.array(cols).T


def generator_isometries(data):
    """The four isometries ``rho_k`` of S^3 (4x4 real matrices)."""
    return np.array([isometry_matrix(data.U_sym[k, 0], data.U_sym[k, 1]) for k in range(4)])


def group_closure(gens, tol=1e-6, max_order=512):
    """All products of the generators (orthogonal matrices), deduplicated."""
    elems = [np.eye(4)]
    frontier = [np.eye(4)]
    while frontier:
        new = []
        for g in frontier:
            for h in gens:
                x = g @ h
                if not any(np.abs(x - e).max() < tol for e in elems):
                    elems.append(x)
                    new.append(x)
                    if len(elems) > max_order:
                        raise NonCompactAngle("symmetry group does not close")
        frontier = new
    return elems


def is_cyclic(elems, tol=1e-6):
    n = len(elems)
    for g in elems:
        x = np.eye(4)
        k = 0
        while True:
            x = x @ g
            k += 1
            if np.abs(x - np.eye(4)).max() < tol:
                break
            if k > n:
                break
        if k == n:
            return True
    return n == 1


# ---------------------------------------------------------------- mesh type

@dataclass
class SurfaceMesh:
    vertices: np.ndarray          # (V, 4) unit vectors
    triangles: np.ndarray         # (F, 3)
    symmetry_order: int = 1
    domain: np.ndarray = None     # (V,) conformal chart coordinate per vertex (optional)
    meta: dict = field(default_factory=dict)

    def merged(self, tol=1e-6):
        return merge_vertices(self, tol)

    def edges(self):
        T = self.triangles
        e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        e = np.sort(e, axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def euler_characteristic(self):
        used = np.unique(self.triangles)
        uniq, _ = self.edges()
        return int(len(used) - len(uniq) + len(self.triangles))

    def boundary_edge_count(self):
        _, counts = self.edges()
        return int(np.sum(counts == 1))

    def is_edge_manifold(self):
        _, counts = self.edges()
        return bool(np.all(counts <= 2))


def merge_vertices(mesh, tol=1e-6):
    """Identify vertices closer than ``tol`` and drop degenerate triangles."""
    V = mesh.vertices
    key = np.round(V / tol).astype(np.int64)
    order = np.lexsort(key.T[::-1])
    rep = np.arange(len(V))
    # sort-based grouping, then a neighbour check across rounding boundaries
    from scipy.spatial import cKDTree
    tree = cKDTree(V)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(V))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    rep = np.array([find(i) for i in range(len(V))])
    del order, key
    uniq, inv = np.unique(rep, return_inverse=True)
    T = inv[mesh.triangles]
    good = (T[:, 0] != T[:, 1]) & (T[:, 1] != T[:, 2]) & (T[:, 0] != T[:, 2])
    T = T[good]
    # drop duplicate triangles (same vertex set) that arise from overlapping copies
    _, first = np.unique(np.sort(T, axis=1), axis=0, return_index=True)
    T = T[np.sort(first)]
    return SurfaceMesh(V[uniq], T, mesh.symmetry_order, None, dict(mesh.meta))


def numeric_area(mesh):
    """Sum of flat triangle areas of the embedded mesh."""
    P = mesh.vertices[mesh.triangles]
    u = P[:, 1] - P[:, 0]
    v = P[:, 2] - P[:, 0]
    uu = np.sum(u * u, axis=1)
    vv = np.sum(v * v, axis=1)
    uv = np.sum(u * v, axis=1)
    return float(0.5 * np.sum(np.sqrt(np.maximum(uu * vv - uv * uv, 0.0))))


def dirichlet_energy(mesh):
    """``int |df|^2`` of the piecewise linear map from the (conformal) chart coordinates."""
    if mesh.domain is None:
        raise InsufficientSamples("mesh carries no chart coordinates")
    w = mesh.domain[mesh.triangles]
    P = mesh.vertices[mesh.triangles]
    e1 = w[:, 1] - w[:, 0]
    e2 = w[:, 2] - w[:, 0]
    area2 = (np.conj(e1) * e2).imag  # twice the signed domain area
    # gradient of the linear interpolant: df = A [dx, dy]
    Jinv = np.stack([np.stack([e2.imag, -e2.real], -1), np.stack([-e1.imag, e1.real], -1)], -2) / area2[:, None, None]
    dP = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=1)  # (F, 2, 4)
    grad = np.einsum("fij,fik->fjk", Jinv, dP)  # (F, 2[x,y], 4)
    return float(np.sum(np.sum(grad ** 2, axis=(1, 2)) * 0.5 * np.abs(area2)))


# ---------------------------------------------------------------- the fundamental piece

def _ring_radius(s, t):
    """``r`` with ``(r^{2t} + r)/2 = s``."""
    if s <= 0:
        return 0.0
    if s >= 1:
        return 1.0
    return brentq(lambda r: 0.5 * (r ** (2 * t) + r) - s, 0.0, 1.0, xtol=1e-300, rtol=1e-15)


def _q1_point(w):
    """Q1 chart: ``z1 = sqrt(i (1+w)/(1-w))`` and ``z1 - p1`` computed without cancellation."""
    zeta = 1j * (1 + w) / (1 - w)
    z1 = np.sqrt(zeta)
    dz = 2j * w / ((1 - w) * (z1 + _P1))
    return z1, dz


def _axis_generator(alpha, beta, a, b, c):
    """``eta`` along ``z = e^{i alpha} tan(beta)`` per unit ``beta``, smooth through infinity."""
    S = np.exp(1j * alpha) * np.sin(beta)
    Cc = np.cos(beta) * np.ones_like(S)
    den = S ** 4 + Cc ** 4
    f = np.exp(1j * alpha) / den
    out = np.empty(np.broadcast(S, a).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = -4 * a * S * Cc * f
    out[..., 1, 1] = -out[..., 0, 0]
    out[..., 0, 1] = 2 * SQRT2 * (b * (S * S - Cc * Cc) - c * (S * S + Cc * Cc)) * f
    out[..., 1, 0] = 2 * SQRT2 * (b * (S * S - Cc * Cc) + c * (S * S + Cc * Cc)) * f
    return out


@dataclass
class PieceFrames:
    """Frames on the quadrant grids: ``Phi[q]`` has shape ``(n_rings, n_theta+1, L, 2, 2)``."""

    rings: np.ndarray           # radii r_1..r_n (the last is 1)
    thetas: np.ndarray
    Phi: np.ndarray             # (4, n_rings, n_theta+1, L, 2, 2)
    apex_Phi: np.ndarray        # (4, n_apex, L, 2, 2) on the spoke near the puncture
    apex_r: np.ndarray


def integrate_frame(data, n_rings, n_theta, apex_r=None, rtol=1e-11):
    """Transport ``Phi`` to every grid vertex of the four quadrants for all spectral samples."""
    if n_theta % 2:
        raise InsufficientSamples("n_theta must be even")
    t = data.t
    lams = data.all_lams()
    L = len(lams)
    a, b, c = _coefficient_values(data.coeffs, lams)
    s_nodes = np.arange(1, n_rings + 1) / n_rings
    rings = np.array([_ring_radius(s, t) for s in s_nodes])
    thetas = 2 * np.pi * np.arange(n_theta + 1) / n_theta
    half = n_theta // 2
    if apex_r is None:
        w0 = 0.5 * rings[0] ** (2 * t)
        apex_r = np.array([(w0 / 2 ** j) ** (1 / (2 * t)) for j in range(3)])
    apex_r = np.asarray(apex_r, dtype=float)
    inner = rings[:-1]
    Q = 4
    kq = np.array(QUAD_TO_K)
    rot = 1j ** np.arange(Q)
    Phi = np.zeros((Q, n_rings, n_theta + 1, L, 2, 2), dtype=complex)

    # spoke: z - p = -p e^{sigma}, from z = 0 (sigma = 0) towards the puncture
    radii = np.concatenate([inner, apex_r])
    dist = np.abs(_q1_point(-radii)[1])
    sig = np.log(dist)
    order = np.argsort(-sig)
    pk = P_ARRAY[kq]

    def spoke_gen(s):
        dz = -pk * np.exp(s)
        return np.stack([eta_local(dz[q], kq[q], a, b, c) for q in range(Q)])

    y0 = np.broadcast_to(ID2, (Q, L, 2, 2))
    sp = batch_flow(spoke_gen, y0, (0.0, float(sig[order][-1])), s_eval=sig[order], rtol=rtol)
    spoke = np.empty_like(sp)
    spoke[order] = sp
    ring_start = spoke[:len(inner)]          # (n_inner, Q, L, 2, 2)
    apex_Phi = np.moveaxis(spoke[len(inner):], 0, 1)

    # ring arcs from theta = pi towards 0 and towards 2 pi
    nI = len(inner)
    s_eval = np.arange(half + 1) / half
    dirs = np.array([-1.0, 1.0])

    def arc_gen(s):
        th = np.pi + dirs[:, None] * np.pi * s          # (2, 1)
        w = inner[None, :] * np.exp(1j * th)             # (2, nI)
        z1, dz1 = _q1_point(w)
        ratio = 1j * (z1 + _P1) / (2 * z1 * (1 - w)) * (dirs[:, None] * np.pi)
        out = np.empty((2, nI, Q, L, 2, 2), dtype=complex)
        for q in range(Q):
            Eq = eta_local((rot[q] * dz1)[..., None], kq[q], a, b, c)  # (2, nI, L, 2, 2)
            out[:, :, q] = Eq * ratio[..., None, None, None]
        return out

    y0 = np.broadcast_to(ring_start[None], (2, nI, Q, L, 2, 2))
    arcs = batch_flow(arc_gen, y0, (0.0, 1.0), s_eval=s_eval, rtol=rtol)  # (half+1, 2, nI, Q, L, 2, 2)
    for q in range(Q):
        for i in range(nI):
            Phi[q, i, half::-1] = arcs[:, 0, i, q]
            Phi[q, i, half:] = arcs[:, 1, i, q]

    # outer ring: axis rays z = e^{i alpha} tan(beta)
    th_up = thetas[1:half]
    betas = np.arctan(np.sqrt(1 / np.tan(th_up / 2)))      # imaginary-axis side, theta in (0, pi)
    bnodes = np.concatenate([np.sort(betas), [np.pi / 2]])
    alphas = np.pi / 2 * np.arange(4)

    def ray_gen(s):
        beta = s * np.pi / 2
        return np.stack([_axis_generator(al, beta, a, b, c) for al in alphas]) * (np.pi / 2)

    y0 = np.broadcast_to(ID2, (4, L, 2, 2))
    rays = batch_flow(ray_gen, y0, (0.0, 1.0), s_eval=bnodes / (np.pi / 2), rtol=rtol)  # (nb, 4, L, 2, 2)
    beta_index = {float(bt): i for i, bt in enumerate(bnodes)}
    for q in range(Q):
        outer = Phi[q, -1]
        outer[half] = ID2
        for j in range(1, half):
            bt = float(np.arctan(np.sqrt(1 / np.tan(thetas[j] / 2))))
            i = min(beta_index, key=lambda x: abs(x - bt))
            outer[j] = rays[beta_index[i], (q + 1) % 4]
            outer[n_theta - j] = rays[beta_index[i], q]
        outer[0] = rays[-1, (q + 1) % 4]
        outer[n_theta] = rays[-1, q]
    return PieceFrames(rings, thetas, Phi, apex_Phi, apex_r)


def _fixed_projection(R, v):
    """Project ``v`` onto the fixed subspace of the orthogonal map ``R`` and normalize."""
    _, s, vh = np.linalg.svd(R - np.eye(4))
    B = vh[s < 1e-4].T
    if B.shape[1] == 0:
        return v / np.linalg.norm(v)
    p = B @ (B.T @ v)
    return p / np.linalg.norm(p)


def _immersion(data, Phi):
    """Map frames of shape ``(..., L, 2, 2)`` (grid then Sym samples) to unit vectors."""
    K = data.K
    F, dev = unitary_frame(Phi[..., :K, :, :], Phi[..., K:, :, :], data)
    return sym_point_immersion(F), dev


def build_piece(data, n_rings=12, n_theta=32, rtol=1e-11):
    """Triangulated fundamental piece (four slit quadrants) with vertices in S^3."""
    fr = integrate_frame(data, n_rings, n_theta, rtol=rtol)
    t = data.t
    R = generator_isometries(data)
    verts, tris, dom = [], [], []
    offset = 0
    max_dev = 0.0
    nt1 = n_theta + 1
    for q in range(4):
        v, dev = _immersion(data, fr.Phi[q])             # (n_rings, nt1, 4)
        va, deva = _immersion(data, fr.apex_Phi[q])      # (n_apex, 4)
        max_dev = max(max_dev, dev, deva)
        # extrapolate along the spoke in w = r^{2t} (quadratic in w), then project to the fixed circle
        w = fr.apex_r ** (2 * t)
        V3 = np.vander(w, 3)
        coef = np.linalg.solve(V3, va)
        apex = _fixed_projection(R[QUAD_TO_K[q]], coef[-1])
        block = np.concatenate([apex[None], v.reshape(-1, 4)])
        # conformal coordinate w^{2t} on the slit disk: the rings are nearly uniform in it
        xi = fr.rings[:, None] ** (2 * t) * np.exp(2j * t * fr.thetas[None, :])
        dom.append(np.concatenate([[0j], xi.ravel()]))
        verts.append(block)
        idx = lambda i, j: offset + 1 + i * nt1 + j
        for j in range(n_theta):
            tris.append((offset, idx(0, j), idx(0, j + 1)))
        for i in range(n_rings - 1):
            for j in range(n_theta):
                tris.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
                tris.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))
        offset += len(block)
    mesh = SurfaceMesh(np.concatenate(verts), np.array(tris), 1, np.concatenate(dom),
                       {"t": t, "n_rings": n_rings, "n_theta": n_theta, "unitarity_dev": max_dev})
    return mesh


def extend_by_symmetry(piece, data, tol=1e-6):
    """Union of the images of the piece under the symmetry group, stitched."""
    t = data.t
    g = genus_from_t(t)
    elems = group_closure(generator_isometries(data))
    n = len(elems)
    V = np.concatenate([piece.vertices @ E.T for E in elems])
    T = np.concatenate([piece.triangles + k * len(piece.vertices) for k in range(n)])
    mesh = SurfaceMesh(V, T, n, None, dict(piece.meta, genus=g, group_order=n, cyclic=is_cyclic(elems)))
    return merge_vertices(mesh, tol)


def surface_area(data, levels=((8, 16), (16, 32)), rtol=1e-11, with_meshes=False):
    """Total area ``(g+1) * area(piece)`` with Richardson extrapolation over two levels.

    For angles that are not of the form 1/(2g+2) the area of the
    quotient-covering surface, ``area(piece) / (2t)``, is reported.
    """
    areas, pieces = [], []
    for nr, nth in levels:
        p = build_piece(data, nr, nth, rtol=rtol)
        pieces.append(p)
        areas.append(numeric_area(p) / (2 * data.t))
    a1, a2 = areas[-2], areas[-1]
    extrap = a2 + (a2 - a1) / 3
    if with_meshes:
        return extrap, areas, pieces
    return extrap, areas


# ---------------------------------------------------------------- cone angles

def cone_angle_at_puncture(data, k=0, n_theta=256, w_levels=(0.02, 0.01, 0.005), rtol=1e-12):
    """Image angle around the puncture ``p_{k+1}`` extrapolated to radius zero.

    On rings ``r = w^{1/(2t)}`` the ratio of the image length to the distance
    from the apex image tends to the cone angle; the ratio is extrapolated
    linearly in ``w``.
    """
    if len(w_levels) < 2:
        raise InsufficientSamples("need at least two rings")
    t = data.t
    q = QUAD_TO_K.index(k)
    rr = np.array([w ** (1 / (2 * t)) for w in w_levels])
    apex_r = np.array([(w_levels[-1] / 2 ** j) ** (1 / (2 * t)) for j in range(1, 4)])
    ratios = []
    fr = _rings_near(data, q, rr, n_theta, apex_r, rtol)
    va, _ = _immersion(data, fr["apex"])
    wa = apex_r ** (2 * t)
    coef = np.linalg.solve(np.vander(wa, 3), va)
    apex = _fixed_projection(generator_isometries(data)[k], coef[-1])
    for i in range(len(rr)):
        v, _ = _immersion(data, fr["rings"][i])
        length = np.sum(np.linalg.norm(np.diff(v, axis=0), axis=1))
        dist = np.mean(2 * np.arcsin(np.clip(np.linalg.norm(v - apex, axis=1) / 2, 0, 1)))
        ratios.append(length / dist)
    w = np.asarray(w_levels)
    A = np.vstack([np.ones_like(w), w]).T
    coef = np.linalg.lstsq(A, np.array(ratios), rcond=None)[0]
    return float(coef[0]), ratios


def _rings_near(data, q, rr, n_theta, apex_r, rtol):
    lams = data.all_lams()
    a, b, c = _coefficient_values(data.coeffs, lams)
    k = QUAD_TO_K[q]
    pk = P_ARRAY[k]
    rot = 1j ** q
    radii = np.concatenate([rr, apex_r])
    dist = np.abs(_q1_point(-radii)[1])
    sig = np.log(dist)
    order = np.argsort(-sig)
    sp = batch_flow(lambda s: eta_local(-pk * np.exp(s), k, a, b, c), np.broadcast_to(ID2, (len(lams), 2, 2)),
                    (0.0, float(sig[order][-1])), s_eval=sig[order], rtol=rtol)
    spoke = np.empty_like(sp)
    spoke[order] = sp
    half = n_theta // 2
    s_eval = np.arange(half + 1) / half
    dirs = np.array([-1.0, 1.0])

    def gen(s):
        th = np.pi + dirs[:, None] * np.pi * s
        w = rr[None, :] * np.exp(1j * th)
        z1, dz1 = _q1_point(w)
        ratio = 1j * (z1 + _P1) / (2 * z1 * (1 - w)) * (dirs[:, None] * np.pi)
        return eta_local((rot * dz1)[..., None], k, a, b, c) * ratio[..., None, None, None]

    y0 = np.broadcast_to(spoke[None, :len(rr)], (2, len(rr), len(lams), 2, 2))
    arcs = batch_flow(gen, y0, (0.0, 1.0), s_eval=s_eval, rtol=rtol)  # (half+1, 2, nr, L, 2, 2)
    rings = []
    for i in range(len(rr)):
        rings.append(np.concatenate([arcs[::-1, 0, i], arcs[1:, 1, i]]))
    return {"rings": rings, "apex": spoke[len(rr):]}


def cone_angle_interior(data, z0, radii=(0.04, 0.02, 0.01), n_theta=128, rtol=1e-12):
    """Image angle around a regular point ``z0`` (expected 2 pi), extrapolated in ``r^2``."""
    lams = data.all_lams()
    a, b, c = _coefficient_values(data.coeffs, lams)
    L = len(lams)

    def seg_gen(s):
        return eta_values(z0 * s, a, b, c) * z0

    P0 = batch_flow(seg_gen, np.broadcast_to(ID2, (L, 2, 2)), rtol=rtol)
    th = 2 * np.pi * np.arange(n_theta + 1) / n_theta
    radii = np.asarray(radii)
    dirs = radii[:, None] * np.exp(1j * th)[None, :]   # (nr, nth+1)

    def rad_gen(s):
        return eta_values((z0 + dirs * s)[..., None], a, b, c) * dirs[..., None, None, None]

    Pr = batch_flow(rad_gen, np.broadcast_to(P0, dirs.shape + (L, 2, 2)), rtol=rtol)
    v0, _ = _immersion(data, P0)
    ratios = []
    for i in range(len(radii)):
        v, _ = _immersion(data, Pr[i])
        length = np.sum(np.linalg.norm(np.diff(v, axis=0), axis=1))
        dist = np.mean(2 * np.arcsin(np.clip(np.linalg.norm(v - v0, axis=1) / 2, 0, 1)))
        ratios.append(length / dist)
    A = np.vstack([np.ones_like(radii), radii ** 2]).T
    coef = np.linalg.lstsq(A, np.array(ratios), rcond=None)[0]
    return float(coef[0]), ratios


# ---------------------------------------------------------------- fixtures and export

def great_sphere_mesh(n=32):
    """The great 2-sphere ``x_4 = 0`` as a latitude-longitude mesh (test fixture)."""
    th = np.linspace(0, np.pi, n + 1)
    ph = np.linspace(0, 2 * np.pi, 2 * n + 1)[:-1]
    V = [[0, 0, 1, 0]]
    for i in range(1, n):
        for p in ph:
            V.append([np.sin(th[i]) * np.cos(p), np.sin(th[i]) * np.sin(p), np.cos(th[i]), 0])
    V.append([0, 0, -1, 0])
    V = np.array(V)
    m = 2 * n
    T = []
    idx = lambda i, j: 1 + (i - 1) * m + (j % m)
    for j in range(m):
        T.append((0, idx(1, j), idx(1, j + 1)))
    for i in range(1, n - 1):
        for j in range(m):
            T.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
            T.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))
    last = len(V) - 1
    for j in range(m):
        T.append((idx(n - 1, j), last, idx(n - 1, j + 1)))
    return SurfaceMesh(V, np.array(T), 1)


def clifford_torus_mesh(n=64):
    """The Clifford torus ``(e^{iu}, e^{iv})/sqrt2`` (test fixture)."""
    u = 2 * np.pi * np.arange(n) / n
    U, W = np.meshgrid(u, u, indexing="ij")
    V = np.stack([np.cos(U), np.sin(U), np.cos(W), np.sin(W)], -1).reshape(-1, 4) / np.sqrt(2)
    T = []
    idx = lambda i, j: (i % n) * n + (j % n)
    for i in range(n):
        for j in range(n):
            T.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
            T.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))
    return SurfaceMesh(V, np.array(T), 1)


def richardson_area(mesh_fn, n):
    """Flat-triangle area of ``mesh_fn(n)`` and ``mesh_fn(2n)`` extrapolated (second order)."""
    a1 = numeric_area(mesh_fn(n))
    a2 = numeric_area(mesh_fn(2 * n))
    return a2 + (a2 - a1) / 3


def _choose_pole(V):
    """A point of S^3 far from all vertices, from a deterministic candidate set."""
    rng = np.random.default_rng(12345)
    cand = rng.normal(size=(400, 4))
    cand = np.concatenate([np.eye(4), -np.eye(4), cand / np.linalg.norm(cand, axis=1)[:, None]])
    from scipy.spatial import cKDTree
    d, _ = cKDTree(V).query(cand)
    return cand[int(np.argmax(d))]


def stereographic(V, pole=None):
    """Stereographic projection from ``pole`` (default: adaptively chosen) to R^3."""
    V = np.asarray(V, dtype=float)
    e4 = np.array([0, 0, 0, 1.0])
    if pole is None:
        pole = e4 if np.min(np.abs(1 - V[:, 3])) >= 1e-6 and np.max(V[:, 3]) < 1 - 1e-6 else _choose_pole(V)
    pole = pole / np.linalg.norm(pole)
    if np.linalg.norm(pole - e4) > 1e-14:
        v = pole - e4
        R = np.eye(4) - 2 * np.outer(v, v) / np.dot(v, v)
        V = V @ R.T
    return V[:, :3] / (1 - V[:, 3])[:, None], pole


def export_obj(mesh, path, t=None, genus=None, area=None, pole=None):
    """Write a Wavefront OBJ of the stereographic image; the header records t, genus and area."""
    X, pole = stereographic(mesh.vertices, pole)
    if not np.all(np.isfinite(X)):
        raise NonUnitary("projection produced non-finite coordinates")
    if area is None:
        area = numeric_area(mesh)
    with open(path, "w") as fh:
        fh.write("# lawson-dpw surface\n")
        fh.write(f"# t {'%.9g' % t if t is not None else 'none'}\n")
        fh.write(f"# genus {genus if genus is not None else 'none'}\n")
        fh.write(f"# area {'%.9g' % area}\n")
        fh.write("# pole " + " ".join("%.9g" % x for x in pole) + "\n")
        for x in X:
            fh.write("v %.9g %.9g %.9g\n" % tuple(x))
        for tri in mesh.triangles:
            fh.write("f %d %d %d\n" % tuple(np.asarray(tri) + 1))


def load_obj(path):
    """Read vertices (R^3), faces and header fields of an OBJ written by ``export_obj``."""
    verts, faces, header = [], [], {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 2:
                    header[parts[0]] = parts[1:] if len(parts) > 2 else parts[1]
            elif line.startswith("v "):
                verts.append([float(x) for x in line.split()[1:4]])
            elif line.startswith("f "):
                faces.append([int(x.split("/")[0]) - 1 for x in line.split()[1:4]])
    return np.array(verts), np.array(faces, dtype=int), header


def inverse_stereographic(X, pole):
    """Inverse of ``stereographic`` for the recorded pole."""
    X = np.asarray(X, dtype=float)
    n2 = np.sum(X * X, axis=1)
    V = np.concatenate([2 * X, (n2 - 1)[:, None]], axis=1) / (n2 + 1)[:, None]
    e4 = np.array([0, 0, 0, 1.0])
    pole = np.asarray(pole, dtype=float)
    if np.linalg.norm(pole - e4) > 1e-14:
        v = pole - e4
        R = np.eye(4) - 2 * np.outer(v, v) / np.dot(v, v)
        V = V @ R.T
    return V


def mesh_from_obj(path):
    X, F, header = load_obj(path)
    pole = np.array([float(x) for x in header.get("pole", ["0", "0", "0", "1"])])
    return SurfaceMesh(inverse_stereographic(X, pole), F, 1), header

import numpy as np
import pytest
from scipy.stats import unitary_group

from lawson_dpw import surface as su
from lawson_dpw.errors import InsufficientSamples, NonCompactAngle, NonUnitary
from lawson_dpw.loopalg import ID2
from lawson_dpw.potential import genus_from_t
from lawson_dpw.solver import area_series


def random_su2(rng):
    X = unitary_group.rvs(2, random_state=rng)
    return X / np.sqrt(np.linalg.det(X))


# ---------------------------------------------------------------- fixtures and mesh primitives

def test_great_sphere_area():
    assert su.richardson_area(su.great_sphere_mesh, 32) == pytest.approx(4 * np.pi, rel=1e-3)
    m = su.great_sphere_mesh(16)
    assert m.euler_characteristic() == 2 and m.boundary_edge_count() == 0 and m.is_edge_manifold()


def test_clifford_torus_area():
    assert su.richardson_area(su.clifford_torus_mesh, 64) == pytest.approx(2 * np.pi ** 2, rel=1e-3)
    m = su.clifford_torus_mesh(16)
    assert m.euler_characteristic() == 0 and m.boundary_edge_count() == 0


def test_merge_vertices_stitches_duplicates():
    m = su.clifford_torus_mesh(8)
    doubled = su.SurfaceMesh(np.concatenate([m.vertices, m.vertices + 1e-9]),
                             np.concatenate([m.triangles, m.triangles + len(m.vertices)]))
    merged = su.merge_vertices(doubled)
    assert len(merged.vertices) == len(m.vertices)


def test_su2_vector_round_trip():
    rng = np.random.default_rng(0)
    U = random_su2(rng)
    assert np.allclose(su.vec_to_su2(su.su2_to_vec(U)), U)
    R = su.isometry_matrix(random_su2(rng), random_su2(rng))
    assert np.allclose(R.T @ R, np.eye(4))


def test_identity_frames_give_unit_point():
    F = np.broadcast_to(ID2, (5, 2, 2, 2))
    assert np.allclose(su.sym_point_immersion(F), [1, 0, 0, 0])


def test_immersion_equivariance():
    rng = np.random.default_rng(1)
    F = np.array([[random_su2(rng), random_su2(rng)] for _ in range(6)])
    U = random_su2(rng)
    f = su.sym_point_immersion(F)
    g = su.sym_point_immersion(U @ F)
    assert np.allclose(g, f @ su.isometry_matrix(U, U).T)


def test_immersion_rejects_non_unitary():
    F = np.broadcast_to(2 * ID2, (1, 2, 2, 2))
    with pytest.raises(NonUnitary):
        su.sym_point_immersion(F)


def test_group_closure_orders():
    rot = lambda a: np.array([[np.cos(a), -np.sin(a), 0, 0], [np.sin(a), np.cos(a), 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    elems = su.group_closure([rot(2 * np.pi / 5)])
    assert len(elems) == 5 and su.is_cyclic(elems)
    with pytest.raises(NonCompactAngle):
        su.group_closure([rot(1.0)], max_order=50)


def test_iwasawa_of_unitary_loop_is_trivial():
    K = 16
    lams = su.offset_grid(K)
    X = np.array([np.diag([l, 1 / l]) for l in lams])
    Y, B0 = su.iwasawa_factor(X, K)
    # X^* X = Id, so the positive part is the identity
    assert np.allclose(Y[0], ID2) and np.allclose(Y[1:], 0, atol=1e-12)
    assert np.allclose(B0, ID2)


def test_fourier_interpolation_exact_for_low_order():
    K = 16
    lams = su.offset_grid(K)
    f = 1 + 0.3 * lams - 0.2j / lams ** 2
    coef = su.fourier_coefficients(f[:, None, None] * ID2, K)
    v = su.fourier_eval(coef, K, 1j)
    assert np.allclose(v, (1 + 0.3j - 0.2j / (1j) ** 2) * ID2)


# ---------------------------------------------------------------- export

def test_obj_round_trip(tmp_path):
    m = su.clifford_torus_mesh(12)
    path = tmp_path / "c.obj"
    area = su.numeric_area(m)
    su.export_obj(m, path, t=0.25, genus=1)
    X, F, header = su.load_obj(path)
    assert len(X) == len(m.vertices) and np.array_equal(F, m.triangles)
    assert float(header["area"]) == float("%.9g" % area)
    assert header["genus"] == "1" and float(header["t"]) == 0.25
    back, _ = su.mesh_from_obj(path)
    assert np.abs(back.vertices - m.vertices).max() < 1e-7


def test_obj_pole_avoidance(tmp_path):
    m = su.great_sphere_mesh(8)
    V = m.vertices.copy()
    V[0] = [0, 0, 0, 1.0]  # a vertex at the default pole
    X, pole = su.stereographic(V)
    assert np.all(np.isfinite(X))
    assert np.min(np.linalg.norm(V - pole, axis=1)) > 0.1
    su.export_obj(su.SurfaceMesh(V, m.triangles), tmp_path / "p.obj")
    X2, _, header = su.load_obj(tmp_path / "p.obj")
    assert np.all(np.isfinite(X2)) and len(header["pole"]) == 4


# ---------------------------------------------------------------- reconstruction at t = 0.02

def test_spectral_data_is_unitarizable(spectral_002):
    d = spectral_002
    assert d.kernel_ratio < 1e-6
    assert np.abs(np.linalg.det(d.H) - 1).max() < 1e-10
    U = d.U_sym
    assert np.abs(np.conj(np.swapaxes(U, -1, -2)) @ U - ID2).max() < 1e-7


def test_holonomy_at_sym_points(spectral_002):
    t = spectral_002.t
    for k in range(4):
        for j in range(2):
            ev = np.sort_complex(np.linalg.eigvals(spectral_002.M_sym[k, j]))
            target = np.sort_complex(np.exp(2j * np.pi * t * np.array([1, -1])))
            assert np.abs(ev - target).max() < 1e-8


def test_frames_have_unit_determinant(spectral_002):
    fr = su.integrate_frame(spectral_002, 4, 8)
    det = np.linalg.det(fr.Phi)
    assert det.size > 1000
    assert np.abs(det - 1).max() < 1e-8


def test_piece_vertices_on_sphere(spectral_002):
    p = su.build_piece(spectral_002, 6, 12)
    assert np.abs(np.linalg.norm(p.vertices, axis=1) - 1).max() < 1e-8
    assert p.is_edge_manifold()
    assert np.ptp(p.vertices, axis=0).max() > 0.1  # nonconstant
    assert p.meta["unitarity_dev"] < 1e-7


def test_symmetry_group_order(spectral_002):
    elems = su.group_closure(su.generator_isometries(spectral_002))
    assert len(elems) == genus_from_t(0.02) + 1 and su.is_cyclic(elems)


def test_extended_mesh_closes(spectral_002):
    m = su.extend_by_symmetry(su.build_piece(spectral_002, 4, 8), spectral_002)
    assert m.symmetry_order == 25
    assert m.boundary_edge_count() == 0 and m.is_edge_manifold()
    assert m.euler_characteristic() == 2 - 2 * 24


def test_area_and_refinement(spectral_002):
    A, areas = su.surface_area(spectral_002, levels=((6, 12), (12, 24), (24, 48)))
    assert abs(areas[2] - areas[1]) < 0.5 * abs(areas[1] - areas[0])
    assert A == pytest.approx(area_series(0.02), rel=1e-3)


def test_area_rotation_invariant(spectral_002):
    p = su.build_piece(spectral_002, 6, 12)
    R = su.group_closure(su.generator_isometries(spectral_002))[1]
    rotated = su.SurfaceMesh(p.vertices @ R.T, p.triangles)
    assert su.numeric_area(rotated) == pytest.approx(su.numeric_area(p), rel=1e-12)


def test_dirichlet_energy_is_twice_area(spectral_002):
    p = su.build_piece(spectral_002, 16, 32)
    assert su.dirichlet_energy(p) == pytest.approx(2 * su.numeric_area(p), rel=2e-2)


def test_cone_angles_small_t(spectral_002):
    angle, ratios = su.cone_angle_at_puncture(spectral_002, 0)
    assert angle == pytest.approx(4 * np.pi * 0.02, rel=2e-2)
    angle1, _ = su.cone_angle_at_puncture(spectral_002, 1)
    assert angle1 == pytest.approx(4 * np.pi * 0.02, rel=2e-2)
    with pytest.raises(InsufficientSamples):
        su.cone_angle_at_puncture(spectral_002, 0, w_levels=(0.01,))


def test_cone_angle_interior(spectral_002):
    angle, _ = su.cone_angle_interior(spectral_002, 0.3 + 0.2j)
    assert angle == pytest.approx(2 * np.pi, rel=1e-2)


def test_cone_angle_t005(spectral_005):
    angle, _ = su.cone_angle_at_puncture(spectral_005, 0)
    assert angle == pytest.approx(4 * np.pi * 0.05, rel=2e-2)

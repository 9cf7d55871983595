"""Fundamental forms, adapted frames, and residual verification tests."""

import math

import numpy as np
import pytest

from helix4.catalog import (PI_12, generate, named_example,
                            round_sphere_patch)
from helix4.surface_analysis import (AdaptedFrame, FrameDiscontinuityError,
                                     ImmersionError, SurfaceJet,
                                     adapted_frame, brioschi_curvature,
                                     fundamental_forms,
                                     frame_rotation_coefficients,
                                     graph_patch_from_jets, parallel_H_test,
                                     patch_from_grid, patch_from_position,
                                     report_csv_rows, sphere_test,
                                     structure_fields, verify_helix,
                                     write_obj)


def flat_jet():
    return SurfaceJet(p=np.zeros(4), p_u=np.eye(4)[0], p_v=np.eye(4)[1],
                      p_uu=np.zeros(4), p_uv=np.zeros(4), p_vv=np.zeros(4))


# ---------------------------------------------------------------------------
# fundamental forms
# ---------------------------------------------------------------------------

def test_flat_graph_forms():
    ff = fundamental_forms(flat_jet())
    assert (ff.E, ff.F, ff.G) == (1.0, 0.0, 1.0)
    assert np.allclose(ff.alpha_11, 0) and np.allclose(ff.alpha_22, 0)


def test_clifford_torus_forms_at_origin():
    jet = named_example("clifford_torus").patch.jet(0.0, 0.0)
    ff = fundamental_forms(jet)
    assert (ff.E, ff.F, ff.G) == pytest.approx((1.0, 0.0, 1.0))
    assert np.allclose(ff.alpha_11, [-1, 0, 0, 0], atol=1e-15)
    assert np.allclose(ff.alpha_22, [0, 0, -1, 0], atol=1e-15)
    assert np.allclose(ff.alpha_12, 0, atol=1e-15)


def test_xy_graph_metric_at_origin():
    patch = generate("graph_poly", f_coeffs=[[0, 0], [0, 1.0]],
                     g_coeffs=[[0.0]]).patch
    ff = fundamental_forms(patch.jet(0.0, 0.0))
    assert ff.E == pytest.approx(1.0)


def test_degenerate_metric_rejected():
    jet = SurfaceJet(p=np.zeros(4), p_u=np.eye(4)[0], p_v=np.eye(4)[0],
                     p_uu=np.zeros(4), p_uv=np.zeros(4), p_vv=np.zeros(4))
    with pytest.raises(ImmersionError):
        fundamental_forms(jet)


def test_alpha_is_normal():
    cs = named_example("orbit_helix")
    rng = np.random.default_rng(2)
    for _ in range(10):
        u = rng.uniform(*cs.patch.u_range)
        v = rng.uniform(*cs.patch.v_range)
        jet = cs.patch.jet(u, v)
        ff = fundamental_forms(jet)
        for a in (ff.alpha_11, ff.alpha_12, ff.alpha_22):
            assert abs(a @ jet.p_u) < 1e-10 * max(1, np.linalg.norm(a))
            assert abs(a @ jet.p_v) < 1e-10 * max(1, np.linalg.norm(a))


# ---------------------------------------------------------------------------
# adapted frames
# ---------------------------------------------------------------------------

def frame_orthonormality_defect(fr: AdaptedFrame) -> float:
    basis = np.stack([fr.T1, fr.T2, fr.xi1, fr.xi2])
    return float(np.max(np.abs(basis @ basis.T - np.eye(4))))


def e_identity_defect(fr: AdaptedFrame) -> float:
    d1 = fr.e1 - (math.cos(fr.theta1) * fr.T1 + math.sin(fr.theta1) * fr.xi1)
    d2 = fr.e2 - (math.cos(fr.theta2) * fr.T2 + math.sin(fr.theta2) * fr.xi2)
    return float(max(np.linalg.norm(d1), np.linalg.norm(d2)))


def test_clifford_frame_directions():
    patch = named_example("clifford_torus").patch
    for phi in (0.3, 1.1, 2.5):
        fr = adapted_frame(patch.jet(phi, 0.7), PI_12)
        assert fr.theta1 == pytest.approx(0.0, abs=1e-12)
        assert fr.theta2 == pytest.approx(math.pi / 2, abs=1e-12)
        t1 = np.array([-math.sin(phi), math.cos(phi), 0, 0])
        assert min(np.linalg.norm(fr.T1 - t1), np.linalg.norm(fr.T1 + t1)) < 1e-12
        assert frame_orthonormality_defect(fr) < 1e-12
        assert e_identity_defect(fr) < 1e-12


def test_degenerate_plane_flagged():
    fr = adapted_frame(flat_jet(), PI_12)
    assert fr.degenerate
    assert frame_orthonormality_defect(fr) < 1e-12


def test_frame_identities_on_generic_graphs():
    rng = np.random.default_rng(5)
    for _ in range(10):
        fc = rng.normal(scale=0.4, size=(3, 3))
        gc = rng.normal(scale=0.4, size=(3, 3))
        patch = generate("graph_poly", f_coeffs=fc, g_coeffs=gc).patch
        u, v = rng.uniform(-0.5, 0.5, size=2)
        fr = adapted_frame(patch.jet(u, v), PI_12)
        assert frame_orthonormality_defect(fr) < 1e-9
        assert e_identity_defect(fr) < 1e-9
        # e1, e2 orthonormal frame of the reference plane
        assert abs(fr.e1 @ fr.e2) < 1e-10
        assert np.linalg.norm(PI_12.project(fr.e1) - fr.e1) < 1e-10


def test_frame_continuity_alignment():
    patch = named_example("clifford_torus").patch
    prev = adapted_frame(patch.jet(0.5, 0.7), PI_12)
    fr = adapted_frame(patch.jet(0.55, 0.7), PI_12, prev=prev)
    assert fr.T1 @ prev.T1 > 0.99
    assert fr.xi1 @ prev.xi1 > 0.99
    assert fr.align_quality > 0.99


def test_frame_rotation_coefficient_limits():
    A, B = frame_rotation_coefficients(0.0, 1.0)
    assert A == pytest.approx(0.0)
    assert B == pytest.approx(1 / math.tan(1.0))
    A, B = frame_rotation_coefficients(0.4, math.pi / 2)
    assert A == pytest.approx(math.tan(0.4))
    assert B == pytest.approx(0.0)
    A, B = frame_rotation_coefficients(0.5, 0.5)
    assert math.isnan(A) and math.isnan(B)


# ---------------------------------------------------------------------------
# structure fields
# ---------------------------------------------------------------------------

def test_product_torus_structure_fields():
    cs = generate("product_circles", r1=1.0, r2=0.5)
    sf = structure_fields(cs.patch, cs.plane, (0.9, 1.7), h=1e-4)
    assert abs(sf.m1) == pytest.approx(2.0, abs=1e-6)   # 1/r2
    assert abs(sf.m2) == pytest.approx(1.0, abs=1e-6)   # 1/r1
    assert abs(sf.dt_T1) < 1e-7 and abs(sf.dt_T2) < 1e-7
    assert abs(sf.dn_T1) < 1e-7 and abs(sf.dn_T2) < 1e-7


def test_totally_geodesic_structure_fields():
    cs = named_example("plane")
    sf = structure_fields(cs.patch, cs.plane, (0.1, 0.2), h=1e-4)
    assert sf.m1 == pytest.approx(0.0, abs=1e-12)
    assert sf.m2 == pytest.approx(0.0, abs=1e-12)


def test_structure_fields_frame_discontinuity_detected():
    # the sphere's adapted frame genuinely jumps across theta2 = pi/2 at the
    # equator: e2 = proj(T2)/cos(theta2) reverses while its norm vanishes
    patch = round_sphere_patch(1.0)
    with pytest.raises(FrameDiscontinuityError):
        structure_fields(patch, PI_12, (0.7, 0.0), h=0.2)
    # away from the degenerate circle the sample is fine
    sf = structure_fields(patch, PI_12, (0.7, 0.3), h=1e-3)
    assert sf.theta1 == pytest.approx(0.0, abs=1e-12)


def test_codazzi_residuals_decay_on_curved_helix():
    cone = named_example("orbit_cone")
    r1 = verify_helix(cone.patch, cone.plane, (15, 15))
    r2 = verify_helix(cone.patch, cone.plane, (29, 29))
    for k in ("codazzi_c1", "codazzi_c3"):
        a, b = r1.residuals[k].max, r2.residuals[k].max
        assert b < 1e-12 or a / b > 3.0


def test_structure_fields_dt_relation_on_cylinder():
    # theta1 = 0 specialization: dt = cot(theta2) dlambda2, i.e. dt(T1) = B m2 = 0
    cs = named_example("helix_cylinder")
    sf = structure_fields(cs.patch, cs.plane, (1.0, 0.3), h=1e-4)
    assert abs(sf.m2) < 1e-8            # R-factor direction is flat
    assert abs(sf.dt_T1) < 1e-8
    assert abs(sf.dt_T2) < 1e-8


# ---------------------------------------------------------------------------
# verify_helix
# ---------------------------------------------------------------------------

def test_small_grid_rejected():
    cs = named_example("clifford_torus")
    with pytest.raises(ValueError):
        verify_helix(cs.patch, cs.plane, (2, 5))


def test_clifford_torus_report():
    cs = named_example("clifford_torus")
    rep = verify_helix(cs.patch, cs.plane, (20, 20))
    assert rep.angle_stats["theta1"][1] < 1e-9
    assert rep.angle_stats["theta2"][1] < 1e-9
    assert rep.angle_stats["theta1"][0] == pytest.approx(0.0, abs=1e-12)
    assert rep.angle_stats["theta2"][0] == pytest.approx(math.pi / 2, abs=1e-12)
    assert rep.residuals["gauss_curvature"].max < 1e-8
    assert rep.residuals["normal_curvature"].max < 1e-8
    for k in ("codazzi_c1", "codazzi_c2", "codazzi_c3", "codazzi_c4"):
        assert rep.residuals[k].max < 1e-10
    assert rep.residuals["alpha_t1t2"].max < 1e-12
    assert max(rep.parallel_h_residuals()) < 1e-6
    assert max(rep.gauss_circle_std) < 1e-9
    assert rep.alpha_theta_max < 1e-10
    assert rep.sphere.ok and rep.sphere.defect < 1e-10
    assert rep.sphere.radius == pytest.approx(math.sqrt(2.0))
    assert np.allclose(rep.sphere.center, 0, atol=1e-10)
    assert rep.sphere_dichotomy is True


def test_cylinder_report():
    cs = named_example("helix_cylinder")
    rep = verify_helix(cs.patch, cs.plane, (25, 25))
    assert rep.angle_stats["theta1"][0] == pytest.approx(0.0, abs=1e-9)
    assert rep.angle_stats["theta2"][0] == pytest.approx(math.pi / 5, abs=1e-9)
    assert rep.angle_stats["theta1"][1] < 1e-9
    assert rep.angle_stats["theta2"][1] < 1e-9
    for k in ("codazzi_c1", "codazzi_c2", "codazzi_c3", "codazzi_c4"):
        assert rep.residuals[k].max < 1e-6
    # products of R with a torsion-carrying helix do not have parallel H:
    # the structure equations force dn(T2) = cot(theta2) m1 != 0
    r1, r2 = rep.parallel_h_residuals()
    assert r1 > 1e-2
    assert r2 < 1e-10


def test_round_sphere_is_not_a_helix():
    rep = verify_helix(round_sphere_patch(1.0), PI_12, (12, 12))
    assert rep.angle_std() > 1e-2
    assert abs(rep.K[5, 5]) == pytest.approx(1.0, rel=1e-6)


def test_structure_residuals_decay_quadratically():
    cs = named_example("clifford_torus")
    r1 = verify_helix(cs.patch, cs.plane, (15, 15))
    r2 = verify_helix(cs.patch, cs.plane, (29, 29))
    a = r1.residuals["structure_tangent"].max
    b = r2.residuals["structure_tangent"].max
    assert a / b > 3.0


def test_zero_angle_specialization_decay():
    cs = named_example("helix_cylinder")
    r1 = verify_helix(cs.patch, cs.plane, (15, 15))
    r2 = verify_helix(cs.patch, cs.plane, (29, 29))
    for key in ("zero_angle_df", "zero_angle_dn", "zero_angle_geodesic"):
        assert key in r1.residuals
        a, b = r1.residuals[key].max, r2.residuals[key].max
        assert b < 1e-10 or a / b > 3.0


def test_brioschi_matches_gauss_equation_exactly_for_quadratics():
    # quadratic f, g make E, F, G quadratic, so the metric differences in the
    # Brioschi formula are exact and the two K computations agree to roundoff
    cs = generate("graph_poly",
                  f_coeffs=[[0, 0, 0.2], [0.1, 0.3, 0], [0.15, 0, 0]],
                  g_coeffs=[[0, 0.1, 0], [0, 0.2, 0], [0.05, 0, 0]])
    rep = verify_helix(cs.patch, cs.plane, (13, 13))
    assert rep.residuals["gauss_brioschi_agreement"].max < 1e-11


def test_brioschi_matches_gauss_equation_at_fd_order():
    # trigonometric metric: the agreement defect is pure FD truncation and
    # must decay at second order under grid refinement
    patch = round_sphere_patch(1.0)
    r1 = verify_helix(patch, PI_12, (11, 11))
    r2 = verify_helix(patch, PI_12, (21, 21))
    a = r1.residuals["gauss_brioschi_agreement"].max
    b = r2.residuals["gauss_brioschi_agreement"].max
    assert a / b > 3.0
    assert b < 1e-2


def test_brioschi_flat_metric():
    E = np.ones((8, 8))
    F = np.zeros((8, 8))
    G = np.ones((8, 8))
    K = brioschi_curvature(E, F, G, 0.1, 0.1)
    assert np.nanmax(np.abs(K)) < 1e-12


def test_fd_position_patch_matches_analytic():
    def pos(u, v):
        return np.array([math.cos(u), math.sin(u), math.cos(v), math.sin(v)])

    patch = patch_from_position(pos, (0.0, 2 * math.pi), (0.0, 2 * math.pi))
    assert patch.jet_source == "fd-position"
    rep = verify_helix(patch, PI_12, (10, 10))
    assert rep.angle_std() < 1e-6
    assert rep.angle_stats["theta2"][0] == pytest.approx(math.pi / 2, abs=1e-6)


def test_grid_patch_snapping():
    us = np.linspace(0, 2, 9)
    vs = np.linspace(0, 1, 5)
    pts = np.zeros((9, 5, 4))
    for i, u in enumerate(us):
        for j, v in enumerate(vs):
            pts[i, j] = [u, v, 0.3 * u * u, 0.1 * u * v]
    patch = patch_from_grid(us, vs, pts)
    jet = patch.jet(us[4], vs[2])
    assert jet.p_u[2] == pytest.approx(0.6 * us[4], abs=1e-10)
    # within 0.4 du of a node the query snaps; beyond that it is rejected
    jet2 = patch.jet(us[4] + 0.3 * (us[1] - us[0]), vs[2])
    assert np.allclose(jet2.p, jet.p)
    with pytest.raises(ValueError):
        patch.jet(us[4] + 0.45 * (us[1] - us[0]), vs[2])
    with pytest.raises(ValueError):
        patch.jet(5.0, 0.0)


# ---------------------------------------------------------------------------
# sphere fits and parallel H
# ---------------------------------------------------------------------------

def test_sphere_test_torus():
    cs = named_example("clifford_torus")
    fit = sphere_test(cs.patch, (12, 12))
    assert fit.ok
    assert fit.radius == pytest.approx(math.sqrt(2.0), abs=1e-10)
    assert fit.defect < 1e-10


def test_sphere_test_plane_has_no_finite_sphere():
    fit = sphere_test(named_example("plane").patch, (8, 8))
    assert not fit.ok
    assert "no finite sphere" in fit.reason


def test_sphere_test_needs_five_points():
    fit = sphere_test(named_example("plane").patch, (2, 2))
    assert not fit.ok


def test_parallel_h_from_report():
    cs = generate("product_circles", r1=1.0, r2=0.7)
    rep = verify_helix(cs.patch, cs.plane, (15, 15))
    assert max(parallel_H_test(rep)) < 1e-6
    cone = named_example("orbit_cone")
    rep2 = verify_helix(cone.patch, cone.plane, (15, 15))
    assert max(parallel_H_test(rep2)) > 1e-2


def test_totally_geodesic_parallel_h():
    cs = named_example("plane")
    rep = verify_helix(cs.patch, cs.plane, (8, 8))
    assert max(parallel_H_test(rep)) < 1e-12


# ---------------------------------------------------------------------------
# report serialization and exports
# ---------------------------------------------------------------------------

def test_report_json_and_csv(tmp_path):
    cs = named_example("clifford_torus")
    rep = verify_helix(cs.patch, cs.plane, (6, 6))
    d = rep.to_json_dict()
    for key in ("angle_stats", "residuals", "gauss_circle_std", "sphere",
                "parallel_h", "grid"):
        assert key in d
    rows = list(report_csv_rows(rep))
    assert rows[0][0] == "u"
    assert len(rows) == 1 + 36

    obj = tmp_path / "mesh.obj"
    write_obj(obj, rep.points, coords=(0, 1, 2))
    text = obj.read_text().splitlines()
    assert text[0].startswith("#") and "dropped" in text[0]
    assert sum(1 for line in text if line.startswith("v ")) == 36
    assert sum(1 for line in text if line.startswith("f ")) == 2 * 25

"""Surface patches in R^4 and verification of the constant-angle structure.

A patch is a map from a parameter rectangle into R^4 together with its 2-jet
(position, first and second partials).  Given a reference plane Pi, every
point carries an adapted frame (T1, T2, xi1, xi2): T1 and T2 are unit tangent
eigen-directions of the projection-to-Pi quadratic form, xi1 and xi2 the
matching unit normals, and

    e1 = cos(theta1) T1 + sin(theta1) xi1,
    e2 = cos(theta2) T2 + sin(theta2) xi2

is an orthonormal frame of Pi.  ``verify_helix`` samples the frame over a
grid, estimates the connection one-forms by finite differences, and reports
residuals of the structure equations, the four Codazzi identities, the Gauss
and normal curvatures, the Gauss-map circle condition, a least-squares sphere
fit, and the parallel-mean-curvature defect.

The frame-propagation pass is sequential (row-major sign alignment); all
residual computations afterwards are pointwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grassmann import Plane, gauss_point, hodge, orthogonal_complement, wedge

__all__ = [
    "SurfaceJet",
    "SurfacePatch",
    "FundamentalForms",
    "AdaptedFrame",
    "StructureFields",
    "StructureReport",
    "SphereFit",
    "ImmersionError",
    "FrameDiscontinuityError",
    "patch_from_position",
    "patch_from_grid",
    "graph_patch_from_jets",
    "fd_d1",
    "fd_d2",
    "fundamental_forms",
    "adapted_frame",
    "structure_fields",
    "frame_rotation_coefficients",
    "verify_helix",
    "parallel_H_test",
    "sphere_test",
    "brioschi_curvature",
    "default_gate",
    "report_csv_rows",
    "write_obj",
]

# below this sine, xi_i is not determined by e_i and is completed from the
# normal space instead
DEG_SIN = 1e-6
# below this cosine, e_i is not determined by T_i (theta_i ~ pi/2)
DEG_COS = 1e-7
# angle coincidence threshold for the swap heuristic during propagation
SWAP_TOL = 1e-6


class ImmersionError(ValueError):
    """The parametrization fails to be an immersion at the queried point."""


class FrameDiscontinuityError(RuntimeError):
    """Adapted frames across a finite-difference stencil could not be aligned."""


@dataclass
class SurfaceJet:
    """2-jet of a parametrized surface at one parameter point."""

    p: np.ndarray
    p_u: np.ndarray
    p_v: np.ndarray
    p_uu: np.ndarray
    p_uv: np.ndarray
    p_vv: np.ndarray


@dataclass
class SurfacePatch:
    """Parameter rectangle plus a jet provider.

    ``jet_source`` records where derivatives come from: "analytic" (closed
    form), "fd-position" (finite differences of a position-only map) or
    "grid" (finite differences of sampled values; evaluation snaps to nodes).
    """

    u_range: tuple[float, float]
    v_range: tuple[float, float]
    jet: Callable[[float, float], SurfaceJet]
    jet_source: str = "analytic"
    name: str = ""


@dataclass
class FundamentalForms:
    """First fundamental form and vector-valued second fundamental form in
    the coordinate basis (p_u, p_v)."""

    E: float
    F: float
    G: float
    alpha_11: np.ndarray
    alpha_12: np.ndarray
    alpha_22: np.ndarray

    @property
    def det(self) -> float:
        return self.E * self.G - self.F * self.F


@dataclass
class AdaptedFrame:
    T1: np.ndarray
    T2: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    theta1: float
    theta2: float
    degenerate: bool = False           # theta1 == theta2 within 1e-9
    align_quality: float = 1.0         # min alignment dot against prev
    # sign-coupling bookkeeping used by the propagation pass
    e1_tied: bool = True
    e2_tied: bool = True
    xi1_tied: bool = True
    xi2_tied: bool = True


@dataclass
class StructureFields:
    """Shape-operator entries and connection one-forms on the adapted frame."""

    m1: float
    m2: float
    dt_T1: float
    dt_T2: float
    dn_T1: float
    dn_T2: float
    df_T1: float
    df_T2: float
    A_const: float
    B_const: float
    theta1: float
    theta2: float


@dataclass
class SphereFit:
    center: np.ndarray | None
    radius: float
    defect: float
    ok: bool
    reason: str = ""


@dataclass
class ResidualStat:
    max: float
    rms: float

    @classmethod
    def of(cls, values: np.ndarray) -> "ResidualStat":
        v = np.abs(np.asarray(values, dtype=float)).ravel()
        v = v[np.isfinite(v)]
        if v.size == 0:
            return cls(math.nan, math.nan)
        return cls(float(v.max()), float(np.sqrt(np.mean(v * v))))


# ---------------------------------------------------------------------------
# jet providers
# ---------------------------------------------------------------------------

def patch_from_position(pos: Callable[[float, float], np.ndarray],
                        u_range: tuple[float, float],
                        v_range: tuple[float, float],
                        h: float | None = None,
                        name: str = "") -> SurfacePatch:
    """Patch with jets estimated by central differences of a position map.

    Step defaults to (domain span) * max(1e-4, cbrt(machine eps)) per
    direction.
    """
    scale = max(1e-4, float(np.finfo(float).eps) ** (1.0 / 3.0))
    hu = h if h is not None else (u_range[1] - u_range[0]) * scale
    hv = h if h is not None else (v_range[1] - v_range[0]) * scale

    def jet(u: float, v: float) -> SurfaceJet:
        c = np.asarray(pos(u, v), dtype=float)
        pu_p = np.asarray(pos(u + hu, v), dtype=float)
        pu_m = np.asarray(pos(u - hu, v), dtype=float)
        pv_p = np.asarray(pos(u, v + hv), dtype=float)
        pv_m = np.asarray(pos(u, v - hv), dtype=float)
        ppp = np.asarray(pos(u + hu, v + hv), dtype=float)
        ppm = np.asarray(pos(u + hu, v - hv), dtype=float)
        pmp = np.asarray(pos(u - hu, v + hv), dtype=float)
        pmm = np.asarray(pos(u - hu, v - hv), dtype=float)
        return SurfaceJet(
            p=c,
            p_u=(pu_p - pu_m) / (2 * hu),
            p_v=(pv_p - pv_m) / (2 * hv),
            p_uu=(pu_p - 2 * c + pu_m) / (hu * hu),
            p_vv=(pv_p - 2 * c + pv_m) / (hv * hv),
            p_uv=(ppp - ppm - pmp + pmm) / (4 * hu * hv),
        )

    return SurfacePatch(u_range, v_range, jet, jet_source="fd-position", name=name)


def fd_d1(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """First derivative along an axis: centered interior, 2nd-order one-sided ends."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def fd_d2(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second derivative along an axis: centered interior, one-sided ends."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / (h * h)
    if v.shape[0] >= 4:
        out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / (h * h)
        out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / (h * h)
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)


def patch_from_grid(us: np.ndarray, vs: np.ndarray, points: np.ndarray,
                    name: str = "") -> SurfacePatch:
    """Patch backed by position samples on a rectangular grid.

    ``points`` has shape (len(us), len(vs), 4).  Jets come from finite
    differences of the samples; queries snap to the nearest node.
    """
    us = np.asarray(us, dtype=float)
    vs = np.asarray(vs, dtype=float)
    points = np.asarray(points, dtype=float)
    if points.shape != (us.size, vs.size, 4):
        raise ValueError("points must have shape (len(us), len(vs), 4)")
    if us.size < 3 or vs.size < 3:
        raise ValueError("grid patches need at least 3 nodes per direction")
    du = us[1] - us[0]
    dv = vs[1] - vs[0]

    p_u = fd_d1(points, du, axis=0)
    p_v = fd_d1(points, dv, axis=1)
    p_uu = fd_d2(points, du, axis=0)
    p_vv = fd_d2(points, dv, axis=1)
    p_uv = fd_d1(p_u, dv, axis=1)

    def jet(u: float, v: float) -> SurfaceJet:
        i = int(round((u - us[0]) / du))
        j = int(round((v - vs[0]) / dv))
        if not (0 <= i < us.size and 0 <= j < vs.size):
            raise ValueError(f"({u}, {v}) outside the sampled grid")
        if abs(us[i] - u) > 0.4 * du or abs(vs[j] - v) > 0.4 * dv:
            raise ValueError(f"({u}, {v}) does not snap to a grid node")
        return SurfaceJet(points[i, j], p_u[i, j], p_v[i, j],
                          p_uu[i, j], p_uv[i, j], p_vv[i, j])

    return SurfacePatch((us[0], us[-1]), (vs[0], vs[-1]), jet,
                        jet_source="grid", name=name)


def graph_patch_from_jets(f_jet, g_jet, x_range, y_range,
                          jet_source: str = "analytic",
                          name: str = "graph") -> SurfacePatch:
    """(x, y) -> (x, y, f, g) patch from scalar 2-jet providers.

    Each provider returns (value, d/dx, d/dy, d2/dx2, d2/dxdy, d2/dy2).
    """

    def jet(x: float, y: float) -> SurfaceJet:
        f, fx, fy, fxx, fxy, fyy = f_jet(x, y)
        g, gx, gy, gxx, gxy, gyy = g_jet(x, y)
        return SurfaceJet(
            p=np.array([x, y, f, g]),
            p_u=np.array([1.0, 0.0, fx, gx]),
            p_v=np.array([0.0, 1.0, fy, gy]),
            p_uu=np.array([0.0, 0.0, fxx, gxx]),
            p_uv=np.array([0.0, 0.0, fxy, gxy]),
            p_vv=np.array([0.0, 0.0, fyy, gyy]),
        )

    return SurfacePatch(x_range, y_range, jet, jet_source=jet_source, name=name)


# ---------------------------------------------------------------------------
# fundamental forms
# ---------------------------------------------------------------------------

def fundamental_forms(jet: SurfaceJet) -> FundamentalForms:
    """First fundamental form and normal parts of the second derivatives."""
    pu, pv = jet.p_u, jet.p_v
    E = float(pu @ pu)
    F = float(pu @ pv)
    G = float(pv @ pv)
    W = E * G - F * F
    if W <= 1e-14:
        raise ImmersionError(f"degenerate metric: EG - F^2 = {W}")

    def normal_part(w: np.ndarray) -> np.ndarray:
        # tangential coefficients from the Gram system
        a = (G * (w @ pu) - F * (w @ pv)) / W
        b = (-F * (w @ pu) + E * (w @ pv)) / W
        return w - a * pu - b * pv

    return FundamentalForms(E, F, G,
                            normal_part(jet.p_uu),
                            normal_part(jet.p_uv),
                            normal_part(jet.p_vv))


# ---------------------------------------------------------------------------
# adapted frames
# ---------------------------------------------------------------------------

def _canonical_sign(v: np.ndarray) -> float:
    k = int(np.argmax(np.abs(v)))
    return 1.0 if v[k] >= 0 else -1.0


def _tangent_frame(jet: SurfaceJet) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent frame, orientation matching (p_u, p_v)."""
    u1 = jet.p_u / np.linalg.norm(jet.p_u)
    w = jet.p_v - (jet.p_v @ u1) * u1
    n = np.linalg.norm(w)
    if n < 1e-12 * max(1.0, np.linalg.norm(jet.p_v)):
        raise ImmersionError("tangent vectors are parallel")
    return u1, w / n


def _normal_frame(u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q, _, _ = np.linalg.svd(np.stack([u1, u2], axis=1), full_matrices=True)
    return q[:, 2], q[:, 3]


def adapted_frame(jet: SurfaceJet, Pi: Plane,
                  prev: AdaptedFrame | None = None) -> AdaptedFrame:
    """Adapted frame (T1, T2, xi1, xi2, e1, e2) at one point.

    T1, T2 are right singular vectors of the cross-Gram between Pi and the
    tangent plane (unit eigendirections of the projection form); e1, e2 the
    matching left singular vectors in Pi.  Angles combine the cosine singular
    values with sine singular values taken against Pi-perp, so both ends of
    [0, pi/2] are accurate.  When ``prev`` is given, signs (and the T1/T2
    labels, for near-coincident angles) are chosen to maximize continuity.
    """
    u1, u2 = _tangent_frame(jet)
    U = np.stack([u1, u2], axis=1)
    B = Pi.frame()
    Np = orthogonal_complement(Pi).frame()

    P, s, Qt = np.linalg.svd(B.T @ U)
    s = np.clip(s, 0.0, 1.0)
    s_perp = np.clip(np.sort(np.linalg.svd(Np.T @ U, compute_uv=False)), 0.0, 1.0)
    theta1 = math.atan2(s_perp[0], s[0])
    theta2 = math.atan2(s_perp[1], s[1])
    degenerate = abs(theta2 - theta1) < 1e-9

    T1 = Qt[0, 0] * u1 + Qt[0, 1] * u2
    T2 = Qt[1, 0] * u1 + Qt[1, 1] * u2
    e1 = P[0, 0] * B[:, 0] + P[1, 0] * B[:, 1]
    e2 = P[0, 1] * B[:, 0] + P[1, 1] * B[:, 1]

    frame = AdaptedFrame(T1, T2, None, None, e1, e2, theta1, theta2, degenerate)
    frame.e1_tied = s[0] > DEG_COS
    frame.e2_tied = s[1] > DEG_COS
    _complete_normals(frame, u1, u2)
    _align_frame(frame, prev)
    return frame


def _complete_normals(fr: AdaptedFrame, u1: np.ndarray, u2: np.ndarray) -> None:
    """Fill xi1, xi2 from e_i where determined, from the normal space otherwise."""
    sin1, sin2 = math.sin(fr.theta1), math.sin(fr.theta2)
    fr.xi1_tied = sin1 > DEG_SIN
    fr.xi2_tied = sin2 > DEG_SIN
    if fr.xi1_tied:
        w = fr.e1 - (fr.e1 @ fr.T1) * fr.T1
        fr.xi1 = w / np.linalg.norm(w)
    if fr.xi2_tied:
        w = fr.e2 - (fr.e2 @ fr.T2) * fr.T2
        fr.xi2 = w / np.linalg.norm(w)
    if fr.xi1_tied and fr.xi2_tied:
        return
    n1, n2 = _normal_frame(u1, u2)
    if not fr.xi1_tied and not fr.xi2_tied:
        fr.xi1, fr.xi2 = n1, n2
        return
    # exactly xi1 missing (theta1 ~ 0 forces theta2 >= theta1 determined)
    anchor = fr.xi2 if fr.xi2 is not None else n2
    z = n1 - (n1 @ anchor) * anchor
    if np.linalg.norm(z) < 0.5:
        z = n2 - (n2 @ anchor) * anchor
    fr.xi1 = z / np.linalg.norm(z)


def _flip_group1(fr: AdaptedFrame) -> None:
    fr.T1 = -fr.T1
    if fr.e1_tied:
        fr.e1 = -fr.e1
        if fr.xi1_tied:
            fr.xi1 = -fr.xi1


def _flip_group2(fr: AdaptedFrame) -> None:
    fr.T2 = -fr.T2
    if fr.e2_tied:
        fr.e2 = -fr.e2
        if fr.xi2_tied:
            fr.xi2 = -fr.xi2


def _swap_labels(fr: AdaptedFrame) -> None:
    fr.T1, fr.T2 = fr.T2, fr.T1
    fr.e1, fr.e2 = fr.e2, fr.e1
    fr.xi1, fr.xi2 = fr.xi2, fr.xi1
    fr.theta1, fr.theta2 = fr.theta2, fr.theta1
    fr.e1_tied, fr.e2_tied = fr.e2_tied, fr.e1_tied
    fr.xi1_tied, fr.xi2_tied = fr.xi2_tied, fr.xi1_tied


def _align_frame(fr: AdaptedFrame, prev: AdaptedFrame | None) -> None:
    if prev is None:
        # deterministic canonical signs
        if _canonical_sign(fr.T1) < 0:
            _flip_group1(fr)
        if _canonical_sign(fr.T2) < 0:
            _flip_group2(fr)
        if not fr.e1_tied and _canonical_sign(fr.e1) < 0:
            fr.e1 = -fr.e1
            if fr.xi1_tied:
                fr.xi1 = -fr.xi1
        if not fr.e2_tied and _canonical_sign(fr.e2) < 0:
            fr.e2 = -fr.e2
            if fr.xi2_tied:
                fr.xi2 = -fr.xi2
        if not fr.xi1_tied and _canonical_sign(fr.xi1) < 0:
            fr.xi1 = -fr.xi1
        if not fr.xi2_tied and _canonical_sign(fr.xi2) < 0:
            fr.xi2 = -fr.xi2
        return

    if abs(fr.theta1 - fr.theta2) < SWAP_TOL:
        straight = abs(fr.T1 @ prev.T1) + abs(fr.T2 @ prev.T2)
        crossed = abs(fr.T1 @ prev.T2) + abs(fr.T2 @ prev.T1)
        if crossed > straight:
            _swap_labels(fr)

    if fr.T1 @ prev.T1 < 0:
        _flip_group1(fr)
    if fr.T2 @ prev.T2 < 0:
        _flip_group2(fr)
    # independent sign groups
    if not fr.e1_tied:
        if fr.e1 @ prev.e1 < 0:
            fr.e1 = -fr.e1
            if fr.xi1_tied:
                fr.xi1 = -fr.xi1
    if not fr.e2_tied:
        if fr.e2 @ prev.e2 < 0:
            fr.e2 = -fr.e2
            if fr.xi2_tied:
                fr.xi2 = -fr.xi2
    if not fr.xi1_tied and fr.xi1 @ prev.xi1 < 0:
        fr.xi1 = -fr.xi1
    if not fr.xi2_tied and fr.xi2 @ prev.xi2 < 0:
        fr.xi2 = -fr.xi2

    fr.align_quality = float(min(fr.T1 @ prev.T1, fr.T2 @ prev.T2,
                                 fr.xi1 @ prev.xi1, fr.xi2 @ prev.xi2))


def frame_rotation_coefficients(theta1: float, theta2: float) -> tuple[float, float]:
    """Constants (A, B) with dt = A dlambda1 + B dlambda2.

    Solving the df-elimination identity: with D = cos(t1)/cos(t2) -
    cos(t2)/cos(t1), A = sin(t1)/(cos(t2) D) and B = sin(t2)/(cos(t1) D).
    Limits: theta1 = 0 gives (0, cot(theta2)); theta2 = pi/2 gives
    (tan(theta1), 0); theta1 = theta2 has no finite value (returns NaN).
    """
    c1, c2 = math.cos(theta1), math.cos(theta2)
    s1, s2 = math.sin(theta1), math.sin(theta2)
    if abs(c1 - c2) < 1e-12:
        return math.nan, math.nan
    if c2 < 1e-9:  # theta2 -> pi/2
        return s1 / c1, 0.0
    D = c1 / c2 - c2 / c1
    return s1 / (c2 * D), s2 / (c1 * D)


# ---------------------------------------------------------------------------
# pointwise structure fields
# ---------------------------------------------------------------------------

def _tangent_coefficients(ff: FundamentalForms, jet: SurfaceJet,
                          X: np.ndarray) -> tuple[float, float]:
    """Coefficients (a, b) with X = a p_u + b p_v for a tangent vector X."""
    ru, rv = float(X @ jet.p_u), float(X @ jet.p_v)
    W = ff.det
    return (ff.G * ru - ff.F * rv) / W, (-ff.F * ru + ff.E * rv) / W


def _alpha_on(ff: FundamentalForms, a: float, b: float,
              c: float, d: float) -> np.ndarray:
    """alpha(X, Y) for X = a p_u + b p_v, Y = c p_u + d p_v."""
    return (a * c * ff.alpha_11 + (a * d + b * c) * ff.alpha_12
            + b * d * ff.alpha_22)


def _shape_entries(ff: FundamentalForms, jet: SurfaceJet,
                   fr: AdaptedFrame) -> tuple[float, float, np.ndarray]:
    """(m1, m2, alpha(T1,T2)) in the adapted frame."""
    a1, b1 = _tangent_coefficients(ff, jet, fr.T1)
    a2, b2 = _tangent_coefficients(ff, jet, fr.T2)
    m1 = float(_alpha_on(ff, a2, b2, a2, b2) @ fr.xi1)
    m2 = float(_alpha_on(ff, a1, b1, a1, b1) @ fr.xi2)
    cross = _alpha_on(ff, a1, b1, a2, b2)
    return m1, m2, cross


def structure_fields(patch: SurfacePatch, Pi: Plane, at: tuple[float, float],
                     h: float, prev: AdaptedFrame | None = None) -> StructureFields:
    """Structure fields at one parameter point from a 5-point frame stencil.

    One-forms dt, dn, df are central differences of the continuously chosen
    frame; m1, m2 come from the second fundamental form at the center.  A
    stencil frame whose alignment dot drops below 0.9 invalidates the sample.
    """
    u, v = at
    jc = patch.jet(u, v)
    fc = adapted_frame(jc, Pi, prev)
    stencil = {}
    for key, (uu, vv) in {"up": (u + h, v), "um": (u - h, v),
                          "vp": (u, v + h), "vm": (u, v - h)}.items():
        fr = adapted_frame(patch.jet(uu, vv), Pi, prev=fc)
        if fr.align_quality < 0.9:
            raise FrameDiscontinuityError(
                f"frame discontinuity at {at} + {key} (dot {fr.align_quality:.3f})")
        stencil[key] = fr

    ff = fundamental_forms(jc)
    m1, m2, _ = _shape_entries(ff, jc, fc)

    def one_form(attr: str, pair: np.ndarray) -> tuple[float, float]:
        d_du = (getattr(stencil["up"], attr) - getattr(stencil["um"], attr)) / (2 * h)
        d_dv = (getattr(stencil["vp"], attr) - getattr(stencil["vm"], attr)) / (2 * h)
        a1, b1 = _tangent_coefficients(ff, jc, fc.T1)
        a2, b2 = _tangent_coefficients(ff, jc, fc.T2)
        on_T1 = float((a1 * d_du + b1 * d_dv) @ pair)
        on_T2 = float((a2 * d_du + b2 * d_dv) @ pair)
        return on_T1, on_T2

    dt_T1, dt_T2 = one_form("T1", fc.T2)
    dn_T1, dn_T2 = one_form("xi1", fc.xi2)
    df_T1, df_T2 = one_form("e1", fc.e2)
    A, B = frame_rotation_coefficients(fc.theta1, fc.theta2)
    return StructureFields(m1, m2, dt_T1, dt_T2, dn_T1, dn_T2, df_T1, df_T2,
                           A, B, fc.theta1, fc.theta2)


# ---------------------------------------------------------------------------
# grid verification
# ---------------------------------------------------------------------------

@dataclass
class StructureReport:
    """Grid samples and residual statistics for one patch and plane."""

    name: str
    jet_source: str
    grid_shape: tuple[int, int]
    u: np.ndarray
    v: np.ndarray
    points: np.ndarray          # (N, M, 4)
    theta1: np.ndarray          # (N, M)
    theta2: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    K: np.ndarray
    K_perp: np.ndarray
    K_brioschi: np.ndarray      # interior, NaN-padded to (N, M)
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    # one-forms on the interior, NaN-padded to (N, M)
    dt_T1: np.ndarray
    dt_T2: np.ndarray
    dn_T1: np.ndarray
    dn_T2: np.ndarray
    df_T1: np.ndarray
    df_T2: np.ndarray
    dm1_T1: np.ndarray
    dm1_T2: np.ndarray
    dm2_T1: np.ndarray
    dm2_T2: np.ndarray
    residuals: dict[str, ResidualStat]
    angle_stats: dict[str, tuple[float, float]]   # name -> (mean, std)
    gauss_circle_std: tuple[float, float]
    alpha_theta_max: float
    sphere: SphereFit
    sphere_dichotomy: bool | None
    degenerate_fraction: float
    min_align_dot: float
    structure_residual: np.ndarray   # per-point max |structure eq| (interior)
    codazzi_residual: np.ndarray     # per-point max |C1..C4| (interior)

    def angle_std(self) -> float:
        return max(self.angle_stats["theta1"][1], self.angle_stats["theta2"][1])

    def helix_pass(self, gate: float) -> bool:
        return self.angle_std() < gate

    def parallel_h_residuals(self) -> tuple[float, float]:
        r1 = np.nanmax(np.abs(np.stack([self.dm2_T1 + self.m1 * self.dn_T1,
                                        self.dm2_T2 + self.m1 * self.dn_T2])))
        r2 = np.nanmax(np.abs(np.stack([self.dm1_T1 - self.m2 * self.dn_T1,
                                        self.dm1_T2 - self.m2 * self.dn_T2])))
        return float(r1), float(r2)

    def to_json_dict(self) -> dict:
        d = {
            "name": self.name,
            "jet_source": self.jet_source,
            "grid": list(self.grid_shape),
            "angle_stats": {k: {"mean": m, "std": s}
                            for k, (m, s) in self.angle_stats.items()},
            "residuals": {k: {"max": r.max, "rms": r.rms}
                          for k, r in sorted(self.residuals.items())},
            "gauss_circle_std": {"plus": self.gauss_circle_std[0],
                                 "minus": self.gauss_circle_std[1]},
            "alpha_theta_cross_max": self.alpha_theta_max,
            "parallel_h": list(self.parallel_h_residuals()),
            "sphere": {
                "ok": self.sphere.ok,
                "reason": self.sphere.reason,
                "radius": self.sphere.radius,
                "defect": self.sphere.defect,
                "center": list(self.sphere.center) if self.sphere.center is not None else None,
            },
            "sphere_dichotomy": self.sphere_dichotomy,
            "degenerate_fraction": self.degenerate_fraction,
            "min_align_dot": self.min_align_dot,
        }
        return d


def default_gate(patch: SurfacePatch, grid_h: float) -> float:
    """Residual gate per jet source: 1e-8 analytic, 5 h^2 for FD-based jets."""
    if patch.jet_source == "analytic":
        return 1e-8
    return 5.0 * grid_h * grid_h


def brioschi_curvature(E: np.ndarray, F: np.ndarray, G: np.ndarray,
                       du: float, dv: float) -> np.ndarray:
    """Gauss curvature from the metric alone (Brioschi formula), interior nodes.

    Metric derivatives are centered differences; the returned array is
    NaN-padded to the input shape.
    """
    Eu, Ev = fd_d1(E, du, 0), fd_d1(E, dv, 1)
    Gu, Gv = fd_d1(G, du, 0), fd_d1(G, dv, 1)
    Fu, Fv = fd_d1(F, du, 0), fd_d1(F, dv, 1)
    Evv = fd_d2(E, dv, 1)
    Guu = fd_d2(G, du, 0)
    Fuv = fd_d1(Fu, dv, 1)

    a00 = -0.5 * Evv + Fuv - 0.5 * Guu
    m1 = _det3(a00, 0.5 * Eu, Fu - 0.5 * Ev,
               Fv - 0.5 * Gu, E, F,
               0.5 * Gv, F, G)
    m2 = _det3(np.zeros_like(E), 0.5 * Ev, 0.5 * Gu,
               0.5 * Ev, E, F,
               0.5 * Gu, F, G)
    W = E * G - F * F
    K = (m1 - m2) / (W * W)
    out = np.full_like(K, np.nan)
    out[1:-1, 1:-1] = K[1:-1, 1:-1]
    return out


def _det3(a, b, c, d, e, f, g, h, i):
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


def _fit_sphere(points: np.ndarray) -> SphereFit:
    pts = points.reshape(-1, 4)
    if pts.shape[0] < 5:
        return SphereFit(None, math.nan, math.nan, False, "fewer than 5 points")
    A = np.concatenate([2.0 * pts, np.ones((pts.shape[0], 1))], axis=1)
    b = np.sum(pts * pts, axis=1)
    sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < 5:
        return SphereFit(None, math.inf, math.nan, False,
                         "no finite sphere (singular normal equations)")
    center, s = sol[:4], sol[4]
    r2 = s + center @ center
    if r2 <= 0:
        return SphereFit(None, math.nan, math.nan, False, "no finite sphere")
    radius = math.sqrt(r2)
    dist = np.linalg.norm(pts - center, axis=1)
    defect = float(np.max(np.abs(dist - radius)) / radius)
    return SphereFit(center, radius, defect, True)


def sphere_test(patch: SurfacePatch, grid: tuple[int, int]) -> SphereFit:
    """Least-squares sphere fit of grid samples of the patch."""
    N, M = grid
    us = np.linspace(*patch.u_range, N)
    vs = np.linspace(*patch.v_range, M)
    pts = np.array([[patch.jet(u, v).p for v in vs] for u in us])
    return _fit_sphere(pts)


def verify_helix(patch: SurfacePatch, Pi: Plane,
                 grid: tuple[int, int]) -> StructureReport:
    """Sample the adapted-frame structure over a grid and report residuals.

    The frame is propagated row-major with sign alignment (sequential), then
    connection one-forms and m-derivatives are estimated by centered
    differences on the interior nodes.
    """
    N, M = grid
    if N < 3 or M < 3:
        raise ValueError("grid must be at least 3x3 for the FD stencil")
    us = np.linspace(*patch.u_range, N)
    vs = np.linspace(*patch.v_range, M)
    du = us[1] - us[0]
    dv = vs[1] - vs[0]

    P = np.empty((N, M, 4))
    E = np.empty((N, M))
    F = np.empty((N, M))
    G = np.empty((N, M))
    a11 = np.empty((N, M, 4))
    a12 = np.empty((N, M, 4))
    a22 = np.empty((N, M, 4))
    jets = [[None] * M for _ in range(N)]
    for i, u in enumerate(us):
        for j, v in enumerate(vs):
            jet = patch.jet(u, v)
            jets[i][j] = jet
            ff = fundamental_forms(jet)
            P[i, j] = jet.p
            E[i, j], F[i, j], G[i, j] = ff.E, ff.F, ff.G
            a11[i, j], a12[i, j], a22[i, j] = ff.alpha_11, ff.alpha_12, ff.alpha_22

    # frame propagation (sequential pass)
    T1 = np.empty((N, M, 4))
    T2 = np.empty((N, M, 4))
    X1 = np.empty((N, M, 4))
    X2 = np.empty((N, M, 4))
    E1 = np.empty((N, M, 4))
    E2 = np.empty((N, M, 4))
    th1 = np.empty((N, M))
    th2 = np.empty((N, M))
    deg = np.zeros((N, M), dtype=bool)
    min_align = 1.0
    frames = [[None] * M for _ in range(N)]
    for i in range(N):
        for j in range(M):
            if j > 0:
                prev = frames[i][j - 1]
            elif i > 0:
                prev = frames[i - 1][0]
            else:
                prev = None
            fr = adapted_frame(jets[i][j], Pi, prev)
            frames[i][j] = fr
            if prev is not None:
                min_align = min(min_align, fr.align_quality)
            T1[i, j], T2[i, j] = fr.T1, fr.T2
            X1[i, j], X2[i, j] = fr.xi1, fr.xi2
            E1[i, j], E2[i, j] = fr.e1, fr.e2
            th1[i, j], th2[i, j] = fr.theta1, fr.theta2
            deg[i, j] = fr.degenerate

    # coordinate vectors as grid arrays (used by the Gram solves below)
    PU = np.empty((N, M, 4))
    PV = np.empty((N, M, 4))
    for i in range(N):
        for j in range(M):
            PU[i, j] = jets[i][j].p_u
            PV[i, j] = jets[i][j].p_v

    # coefficients of T1, T2 in (p_u, p_v): Gram solve, vectorized
    W = E * G - F * F
    t1u = np.einsum("ijk,ijk->ij", T1, PU)
    t1v = np.einsum("ijk,ijk->ij", T1, PV)
    t2u = np.einsum("ijk,ijk->ij", T2, PU)
    t2v = np.einsum("ijk,ijk->ij", T2, PV)
    c1u = (G * t1u - F * t1v) / W
    c1v = (-F * t1u + E * t1v) / W
    c2u = (G * t2u - F * t2v) / W
    c2v = (-F * t2u + E * t2v) / W

    def alpha_on_grid(au, av, bu, bv):
        coef = lambda arr, w: arr * w[..., None]  # noqa: E731
        return (coef(a11, au * bu) + coef(a12, au * bv + av * bu)
                + coef(a22, av * bv))

    aT1T1 = alpha_on_grid(c1u, c1v, c1u, c1v)
    aT1T2 = alpha_on_grid(c1u, c1v, c2u, c2v)
    aT2T2 = alpha_on_grid(c2u, c2v, c2u, c2v)
    m1 = np.einsum("ijk,ijk->ij", aT2T2, X1)
    m2 = np.einsum("ijk,ijk->ij", aT1T1, X2)
    alpha_cross = np.linalg.norm(aT1T2, axis=-1)

    # curvatures from the Gauss / Ricci equations
    K = (np.einsum("ijk,ijk->ij", a11, a22)
         - np.einsum("ijk,ijk->ij", a12, a12)) / W
    h1 = np.empty((N, M, 2, 2))
    h2 = np.empty((N, M, 2, 2))
    h1[..., 0, 0] = np.einsum("ijk,ijk->ij", aT1T1, X1)
    h1[..., 0, 1] = h1[..., 1, 0] = np.einsum("ijk,ijk->ij", aT1T2, X1)
    h1[..., 1, 1] = np.einsum("ijk,ijk->ij", aT2T2, X1)
    h2[..., 0, 0] = np.einsum("ijk,ijk->ij", aT1T1, X2)
    h2[..., 0, 1] = h2[..., 1, 0] = np.einsum("ijk,ijk->ij", aT1T2, X2)
    h2[..., 1, 1] = np.einsum("ijk,ijk->ij", aT2T2, X2)
    comm = h1 @ h2 - h2 @ h1
    K_perp = comm[..., 1, 0]

    K_brioschi = brioschi_curvature(E, F, G, du, dv)

    # Gauss map against the reference plane
    gp_pi = gauss_point(Pi)
    eta_pi = wedge(Pi.b1, Pi.b2)
    star_eta_pi = hodge(eta_pi)
    circ_plus = np.empty((N, M))
    circ_minus = np.empty((N, M))
    cos_theta = np.empty((N, M))
    cos_theta_perp = np.empty((N, M))
    for i in range(N):
        for j in range(M):
            u1, u2 = _tangent_frame(jets[i][j])
            eta = wedge(u1, u2)
            gp = gauss_point(Plane(u1, u2))
            circ_plus[i, j] = gp.plus @ gp_pi.plus
            circ_minus[i, j] = gp.minus @ gp_pi.minus
            cos_theta[i, j] = eta @ eta_pi
            cos_theta_perp[i, j] = eta @ star_eta_pi
    cos_ap = 2.0 * circ_plus
    cos_am = 2.0 * circ_minus
    alpha_theta_cross = np.maximum(np.abs(cos_ap - (cos_theta + cos_theta_perp)),
                                   np.abs(cos_am - (cos_theta - cos_theta_perp)))
    alpha_plus = np.arccos(np.clip(cos_ap, -1.0, 1.0))
    alpha_minus = np.arccos(np.clip(cos_am, -1.0, 1.0))

    def directional(dXdu, dXdv, pair):
        """One-form <D_X field, pair> on X = T1, T2 over the interior."""
        on1 = np.einsum("ijk,ijk->ij",
                        c1u[1:-1, 1:-1, None] * dXdu + c1v[1:-1, 1:-1, None] * dXdv,
                        pair[1:-1, 1:-1])
        on2 = np.einsum("ijk,ijk->ij",
                        c2u[1:-1, 1:-1, None] * dXdu + c2v[1:-1, 1:-1, None] * dXdv,
                        pair[1:-1, 1:-1])
        return on1, on2

    def grid_d(Aarr):
        ddu = (Aarr[2:, 1:-1] - Aarr[:-2, 1:-1]) / (2 * du)
        ddv = (Aarr[1:-1, 2:] - Aarr[1:-1, :-2]) / (2 * dv)
        return ddu, ddv

    dT1du, dT1dv = grid_d(T1)
    dX1du, dX1dv = grid_d(X1)
    dE1du, dE1dv = grid_d(E1)
    dt_T1, dt_T2 = directional(dT1du, dT1dv, T2)
    dn_T1, dn_T2 = directional(dX1du, dX1dv, X2)
    df_T1, df_T2 = directional(dE1du, dE1dv, E2)

    dm1du, dm1dv = grid_d(m1)
    dm2du, dm2dv = grid_d(m2)
    dm1_T1 = c1u[1:-1, 1:-1] * dm1du + c1v[1:-1, 1:-1] * dm1dv
    dm1_T2 = c2u[1:-1, 1:-1] * dm1du + c2v[1:-1, 1:-1] * dm1dv
    dm2_T1 = c1u[1:-1, 1:-1] * dm2du + c1v[1:-1, 1:-1] * dm2dv
    dm2_T2 = c2u[1:-1, 1:-1] * dm2du + c2v[1:-1, 1:-1] * dm2dv

    it = lambda A: A[1:-1, 1:-1]  # noqa: E731  interior view
    ct1, ct2 = np.cos(it(th1)), np.cos(it(th2))
    st1, st2 = np.sin(it(th1)), np.sin(it(th2))
    im1, im2 = it(m1), it(m2)

    # structure equations evaluated on X = T1 and X = T2
    tangent_res = np.stack([
        ct2 * df_T1 - ct1 * dt_T1,
        ct2 * df_T2 - ct1 * dt_T2 + st1 * im1,
        -ct1 * df_T1 + ct2 * dt_T1 + st2 * im2,
        -ct1 * df_T2 + ct2 * dt_T2,
    ])
    normal_res = np.stack([
        st2 * df_T1 - ct1 * im2 - st1 * dn_T1,
        st2 * df_T2 - st1 * dn_T2,
        -st1 * df_T1 + st2 * dn_T1,
        -st1 * df_T2 - ct2 * im1 + st2 * dn_T2,
    ])
    c1_res = im1 * dt_T2 + dm1_T1
    c2_res = im1 * dt_T1 - im2 * dn_T2
    c3_res = im2 * dt_T1 - dm2_T2
    c4_res = im2 * dt_T2 - im1 * dn_T1
    par_h1 = np.stack([dm2_T1 + im1 * dn_T1, dm2_T2 + im1 * dn_T2])
    par_h2 = np.stack([dm1_T1 - im2 * dn_T1, dm1_T2 - im2 * dn_T2])

    sphere = _fit_sphere(P)

    def pad(arr):
        out = np.full((N, M), np.nan)
        out[1:-1, 1:-1] = arr
        return out

    theta1_stats = (float(np.mean(th1)), float(np.std(th1)))
    theta2_stats = (float(np.mean(th2)), float(np.std(th2)))
    angle_stats = {
        "theta1": theta1_stats,
        "theta2": theta2_stats,
        "alpha_plus": (float(np.mean(alpha_plus)), float(np.std(alpha_plus))),
        "alpha_minus": (float(np.mean(alpha_minus)), float(np.std(alpha_minus))),
    }

    residuals = {
        "structure_tangent": ResidualStat.of(tangent_res),
        "structure_normal": ResidualStat.of(normal_res),
        "codazzi_c1": ResidualStat.of(c1_res),
        "codazzi_c2": ResidualStat.of(c2_res),
        "codazzi_c3": ResidualStat.of(c3_res),
        "codazzi_c4": ResidualStat.of(c4_res),
        "gauss_curvature": ResidualStat.of(K),
        "normal_curvature": ResidualStat.of(K_perp),
        "gauss_brioschi_agreement": ResidualStat.of(it(K) - it(K_brioschi)),
        "alpha_t1t2": ResidualStat.of(alpha_cross),
        "parallel_h": ResidualStat.of(np.concatenate([par_h1, par_h2])),
        "alpha_theta_cross": ResidualStat.of(alpha_theta_cross),
    }
    if sphere.ok:
        residuals["sphere_defect"] = ResidualStat(sphere.defect, sphere.defect)

    # redundant one-form identities of the generic case (consequences of the
    # structure system; reported as residuals, not enforced independently)
    mean_t1 = theta1_stats[0]
    mean_t2 = theta2_stats[0]
    if 1e-6 < mean_t1 and mean_t2 < math.pi / 2 - 1e-6:
        dl1 = (im1 * np.einsum("ijk,ijk->ij", it(T1), it(T2)),
               im1 * np.einsum("ijk,ijk->ij", it(T2), it(T2)))
        dl2 = (im2 * np.einsum("ijk,ijk->ij", it(T1), it(T1)),
               im2 * np.einsum("ijk,ijk->ij", it(T2), it(T1)))
        dt = (dt_T1, dt_T2)
        dn = (dn_T1, dn_T2)
        dep1, dep2, dep3 = [], [], []
        for k in (0, 1):
            dep1.append((ct1 / ct2 - ct2 / ct1) * dt[k]
                        - (st1 / ct2) * dl1[k] - (st2 / ct1) * dl2[k])
            dep2.append(-(st1 / st2) * dn[k] + (ct1 / ct2) * dt[k]
                        - (st1 / ct2) * dl1[k] - (ct1 / st2) * dl2[k])
            dep3.append(-(st2 / st1) * dn[k] + (ct1 / ct2) * dt[k]
                        - (st1 / ct2 - ct2 / st1) * dl1[k])
        residuals["dependencia1"] = ResidualStat.of(np.stack(dep1))
        residuals["dependencia2"] = ResidualStat.of(np.stack(dep2))
        residuals["dependencia3"] = ResidualStat.of(np.stack(dep3))
    if mean_t1 < 1e-6 and mean_t2 < math.pi / 2 - 1e-6:
        dl1_T1 = im1 * np.einsum("ijk,ijk->ij", it(T1), it(T2))
        dl1_T2 = im1 * np.einsum("ijk,ijk->ij", it(T2), it(T2))
        tt2 = np.tan(it(th2))
        residuals["zero_angle_df"] = ResidualStat.of(np.stack([
            ct2 * df_T1 - dt_T1, ct2 * df_T2 - dt_T2]))
        residuals["zero_angle_dn"] = ResidualStat.of(np.stack([
            tt2 * dn_T1 - dl1_T1, tt2 * dn_T2 - dl1_T2]))
    if mean_t1 < 1e-6:
        residuals["zero_angle_geodesic"] = ResidualStat.of(dt_T2)

    # angle dichotomy for spherical helix patches: only asserted when the
    # sphere fit succeeds and the surface actually is a (numerical) helix
    sphere_dichotomy = None
    helix_like = max(theta1_stats[1], theta2_stats[1]) < 1e-6
    if sphere.ok and sphere.defect < 1e-6 and helix_like:
        sphere_dichotomy = bool(mean_t1 < 1e-6
                                or abs(mean_t2 - math.pi / 2) < 1e-6)

    return StructureReport(
        name=patch.name,
        jet_source=patch.jet_source,
        grid_shape=(N, M),
        u=us, v=vs, points=P,
        theta1=th1, theta2=th2, m1=m1, m2=m2,
        K=K, K_perp=K_perp, K_brioschi=K_brioschi,
        alpha_plus=alpha_plus, alpha_minus=alpha_minus,
        dt_T1=pad(dt_T1), dt_T2=pad(dt_T2),
        dn_T1=pad(dn_T1), dn_T2=pad(dn_T2),
        df_T1=pad(df_T1), df_T2=pad(df_T2),
        dm1_T1=pad(dm1_T1), dm1_T2=pad(dm1_T2),
        dm2_T1=pad(dm2_T1), dm2_T2=pad(dm2_T2),
        residuals=residuals,
        angle_stats=angle_stats,
        gauss_circle_std=(float(np.std(circ_plus)), float(np.std(circ_minus))),
        alpha_theta_max=float(np.max(alpha_theta_cross)),
        sphere=sphere,
        sphere_dichotomy=sphere_dichotomy,
        degenerate_fraction=float(np.mean(deg)),
        min_align_dot=min_align,
        structure_residual=pad(np.max(np.abs(np.concatenate(
            [tangent_res, normal_res])), axis=0)),
        codazzi_residual=pad(np.max(np.abs(np.stack(
            [c1_res, c2_res, c3_res, c4_res])), axis=0)),
    )


def parallel_H_test(report: StructureReport) -> tuple[float, float]:
    """Max residuals of dm2 + m1 dn and dm1 - m2 dn over the grid interior."""
    return report.parallel_h_residuals()


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def report_csv_rows(report: StructureReport):
    """Iterate CSV rows (u, v, p1..p4, theta1, theta2, K, K_perp,
    structure_residual, codazzi_residual)."""
    yield ("u", "v", "p1", "p2", "p3", "p4", "theta1", "theta2",
           "K", "K_perp", "structure_residual", "codazzi_residual")
    N, M = report.grid_shape
    for i in range(N):
        for j in range(M):
            yield (report.u[i], report.v[j], *report.points[i, j],
                   report.theta1[i, j], report.theta2[i, j],
                   report.K[i, j], report.K_perp[i, j],
                   report.structure_residual[i, j],
                   report.codazzi_residual[i, j])


def write_obj(path, points: np.ndarray, coords: tuple[int, int, int] = (0, 1, 2)):
    """Write the grid as an OBJ mesh projecting to three chosen coordinates.

    The dropped coordinate index is recorded in a comment line.
    """
    N, M, _ = points.shape
    dropped = ({0, 1, 2, 3} - set(coords)).pop()
    names = ["x", "y", "z", "w"]
    with open(path, "w") as fh:
        fh.write(f"# projection to coordinates {coords}; dropped coordinate: "
                 f"{names[dropped]} (index {dropped})\n")
        for i in range(N):
            for j in range(M):
                p = points[i, j]
                fh.write(f"v {p[coords[0]]:.17g} {p[coords[1]]:.17g} "
                         f"{p[coords[2]]:.17g}\n")
        for i in range(N - 1):
            for j in range(M - 1):
                a = i * M + j + 1
                b = a + 1
                c = a + M
                d = c + 1
                fh.write(f"f {a} {b} {d}\n")
                fh.write(f"f {a} {d} {c}\n")

"""Closed-form example surfaces with exact jets.

Every generator returns the patch together with the reference plane it is a
(candidate) helix for and the expected principal angles, so the surfaces
double as ground truth for the residual machinery in
:mod:`helix4.surface_analysis`.

Conventions (see README): the rotation group used by the orbit construction
fixes ``span(e1, e2)`` pointwise and rotates the ``(e3, e4)``-plane.  The
spherical-helix profile with sphere radius R and slope angle beta (angle
between the unit tangent and the e3 axis) is parametrized over the height u:

    tau(u)   = arcsin(u / (R sin beta))
    Theta(u) = tau / cos(beta) - arctan(cos(beta) tan(tau))
    gamma(u) = (r cos Theta, r sin Theta, u, 0),   r = sqrt(R^2 - u^2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grassmann import Plane, PrincipalAngles, orthogonal_complement, principal_angles
from .surface_analysis import SurfaceJet, SurfacePatch, graph_patch_from_jets

__all__ = [
    "CatalogSurface",
    "CurveJet",
    "generate",
    "orbit_surface",
    "line_curve",
    "helix_curve",
    "spherical_helix_curve",
    "round_sphere_patch",
    "named_example",
    "EXAMPLE_NAMES",
]

E4 = np.eye(4)
PI_12 = Plane(E4[0], E4[1])
PI_34 = Plane(E4[2], E4[3])


@dataclass
class CatalogSurface:
    patch: SurfacePatch
    plane: Plane
    expected: PrincipalAngles
    spec: dict = field(default_factory=dict)


@dataclass
class CurveJet:
    c: np.ndarray
    d1: np.ndarray
    d2: np.ndarray


Curve = Callable[[float], CurveJet]


# ---------------------------------------------------------------------------
# product examples
# ---------------------------------------------------------------------------

def _product_circles_patch(r1: float, r2: float) -> SurfacePatch:
    if r1 <= 0 or r2 <= 0:
        raise ValueError("circle radii must be positive")

    def jet(u: float, v: float) -> SurfaceJet:
        cu, su = math.cos(u), math.sin(u)
        cv, sv = math.cos(v), math.sin(v)
        return SurfaceJet(
            p=np.array([r1 * cu, r1 * su, r2 * cv, r2 * sv]),
            p_u=np.array([-r1 * su, r1 * cu, 0.0, 0.0]),
            p_v=np.array([0.0, 0.0, -r2 * sv, r2 * cv]),
            p_uu=np.array([-r1 * cu, -r1 * su, 0.0, 0.0]),
            p_uv=np.zeros(4),
            p_vv=np.array([0.0, 0.0, -r2 * cv, -r2 * sv]),
        )

    return SurfacePatch((0.0, 2 * math.pi), (0.0, 2 * math.pi), jet,
                        name=f"product_circles({r1},{r2})")


def _helix_cylinder_patch(theta: float, radius: float, pitch: float) -> SurfacePatch:
    def jet(s: float, t: float) -> SurfaceJet:
        cs, ss = math.cos(s), math.sin(s)
        return SurfaceJet(
            p=np.array([radius * cs, radius * ss, pitch * s, t]),
            p_u=np.array([-radius * ss, radius * cs, pitch, 0.0]),
            p_v=np.array([0.0, 0.0, 0.0, 1.0]),
            p_uu=np.array([-radius * cs, -radius * ss, 0.0, 0.0]),
            p_uv=np.zeros(4),
            p_vv=np.zeros(4),
        )

    return SurfacePatch((0.0, 4 * math.pi), (-1.0, 1.0), jet,
                        name=f"helix_cylinder(theta={theta:.6g})")


def _plane_patch(p0, a, b) -> SurfacePatch:
    p0 = np.asarray(p0, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)

    def jet(u: float, v: float) -> SurfaceJet:
        return SurfaceJet(p=p0 + u * a + v * b, p_u=a.copy(), p_v=b.copy(),
                          p_uu=np.zeros(4), p_uv=np.zeros(4), p_vv=np.zeros(4))

    return SurfacePatch((-1.0, 1.0), (-1.0, 1.0), jet, name="plane")


# ---------------------------------------------------------------------------
# profile curves for the orbit construction
# ---------------------------------------------------------------------------

def line_curve(p0, d) -> Curve:
    p0 = np.asarray(p0, dtype=float)
    d = np.asarray(d, dtype=float)

    def gamma(s: float) -> CurveJet:
        return CurveJet(p0 + s * d, d.copy(), np.zeros(4))

    return gamma


def helix_curve(a: float, b: float, z0: float = 0.0) -> Curve:
    """Classical helix (a cos s, a sin s, b s + z0, 0)."""

    def gamma(s: float) -> CurveJet:
        cs, ss = math.cos(s), math.sin(s)
        return CurveJet(
            np.array([a * cs, a * ss, b * s + z0, 0.0]),
            np.array([-a * ss, a * cs, b, 0.0]),
            np.array([-a * cs, -a * ss, 0.0, 0.0]),
        )

    return gamma


def spherical_helix_curve(R: float, beta: float) -> Curve:
    """Constant-slope curve on the sphere of radius R (slope angle beta
    against the e3 axis), parametrized by height u in (-R sin beta, R sin beta).

    The unit tangent satisfies <t, e3> = cos(beta) identically and the curve
    lies on the sphere exactly, so revolving it yields the spherical witness
    of the angle dichotomy.
    """
    if not (0.0 < beta < math.pi / 2):
        raise ValueError("slope angle must be in (0, pi/2)")
    sb, cb = math.sin(beta), math.cos(beta)
    umax = R * sb

    def gamma(u: float) -> CurveJet:
        if not (-umax < u < umax):
            raise ValueError(f"height {u} outside (-{umax}, {umax})")
        r2 = R * R - u * u
        r = math.sqrt(r2)
        w2 = R * R * sb * sb - u * u
        w = math.sqrt(w2)
        tau = math.asin(u / (R * sb))
        Theta = tau / cb - math.atan(cb * math.tan(tau))
        dr = -u / r
        d2r = -R * R / (r2 * r)
        dT = w / (r2 * cb)
        d2T = u * (2 * w2 - r2) / (w * r2 * r2 * cb)
        cT, sT = math.cos(Theta), math.sin(Theta)
        c = np.array([r * cT, r * sT, u, 0.0])
        d1 = np.array([dr * cT - r * dT * sT, dr * sT + r * dT * cT, 1.0, 0.0])
        d2 = np.array([
            d2r * cT - 2 * dr * dT * sT - r * d2T * sT - r * dT * dT * cT,
            d2r * sT + 2 * dr * dT * cT + r * d2T * cT - r * dT * dT * sT,
            0.0, 0.0,
        ])
        return CurveJet(c, d1, d2)

    return gamma


# ---------------------------------------------------------------------------
# orbit construction
# ---------------------------------------------------------------------------

def orbit_surface(gamma: Curve, Pi: Plane,
                  s_range: tuple[float, float],
                  phi_range: tuple[float, float] = (0.0, math.pi),
                  name: str = "orbit") -> SurfacePatch:
    """Orbit of a curve under the rotations fixing Pi pointwise.

    The curve must make a constant angle with Pi (checked at 10 samples, tol
    1e-9) and must not touch Pi on the domain (the orbit circle through a
    point of Pi is degenerate).  The s-coordinate lines are geodesics of the
    patch; this is checked on samples as well.
    """
    comp = orthogonal_complement(Pi)
    n1, n2 = comp.b1, comp.b2

    samples = np.linspace(s_range[0], s_range[1], 10)
    angles = []
    for s in samples:
        cj = gamma(s)
        t = cj.d1 / np.linalg.norm(cj.d1)
        angles.append(math.asin(min(1.0, float(np.linalg.norm(
            (t @ n1) * n1 + (t @ n2) * n2)))))
        if np.hypot(cj.c @ n1, cj.c @ n2) < 1e-9:
            raise ValueError(f"curve touches the fixed plane at s = {s}; "
                             "the orbit degenerates there")
    if max(angles) - min(angles) > 1e-9:
        k = int(np.argmax(np.abs(np.asarray(angles) - angles[0])))
        raise ValueError(
            f"curve does not make a constant angle with the plane: angle at "
            f"s = {samples[k]} is {angles[k]}, at s = {samples[0]} is {angles[0]}")

    def jet(s: float, phi: float) -> SurfaceJet:
        cj = gamma(s)
        cphi, sphi = math.cos(phi), math.sin(phi)

        def rot(q: np.ndarray) -> tuple[float, float]:
            x, y = q @ n1, q @ n2
            return x * cphi - y * sphi, x * sphi + y * cphi

        def rot90(q: np.ndarray) -> tuple[float, float]:
            x, y = q @ n1, q @ n2
            return -x * sphi - y * cphi, x * cphi - y * sphi

        def in_plane(q: np.ndarray) -> np.ndarray:
            return Pi.project(q)

        xc, yc = rot(cj.c)
        x1, y1 = rot(cj.d1)
        x2, y2 = rot(cj.d2)
        xq, yq = rot90(cj.c)
        xq1, yq1 = rot90(cj.d1)
        return SurfaceJet(
            p=in_plane(cj.c) + xc * n1 + yc * n2,
            p_u=in_plane(cj.d1) + x1 * n1 + y1 * n2,
            p_v=xq * n1 + yq * n2,
            p_uu=in_plane(cj.d2) + x2 * n1 + y2 * n2,
            p_uv=xq1 * n1 + yq1 * n2,
            p_vv=-(xc * n1 + yc * n2),
        )

    patch = SurfacePatch(s_range, phi_range, jet, name=name)

    # the rotated copies of gamma must be geodesics of the patch
    for s in samples:
        j = patch.jet(s, 0.3 * (phi_range[1] - phi_range[0]) + phi_range[0])
        t = j.p_u / np.linalg.norm(j.p_u)
        w = j.p_v - (j.p_v @ t) * t
        w /= np.linalg.norm(w)
        scale = max(1.0, float(np.linalg.norm(j.p_uu)))
        if abs(j.p_uu @ w) > 1e-9 * scale:
            raise ValueError(f"s-line fails the geodesic check at s = {s}")
    return patch


# ---------------------------------------------------------------------------
# polynomial graphs
# ---------------------------------------------------------------------------

def _poly2d(coeffs: np.ndarray):
    """2-jet evaluator for sum c[i,j] x^i y^j."""
    coeffs = np.asarray(coeffs, dtype=float)
    cx = coeffs[1:] * np.arange(1, coeffs.shape[0])[:, None]
    cy = coeffs[:, 1:] * np.arange(1, coeffs.shape[1])[None, :]
    cxx = cx[1:] * np.arange(1, cx.shape[0])[:, None]
    cxy = cx[:, 1:] * np.arange(1, cx.shape[1])[None, :]
    cyy = cy[:, 1:] * np.arange(1, cy.shape[1])[None, :]

    def ev(c: np.ndarray, x: float, y: float) -> float:
        if c.size == 0:
            return 0.0
        xs = x ** np.arange(c.shape[0])
        ys = y ** np.arange(c.shape[1])
        return float(xs @ c @ ys)

    def jet(x: float, y: float):
        return (ev(coeffs, x, y), ev(cx, x, y), ev(cy, x, y),
                ev(cxx, x, y), ev(cxy, x, y), ev(cyy, x, y))

    return jet


def round_sphere_patch(R: float = 1.0) -> SurfacePatch:
    """Patch of the round sphere S^2(R) in the hyperplane x4 = 0.

    Not a helix surface for any plane; used as a negative control.
    """

    def jet(u: float, v: float) -> SurfaceJet:
        cu, su = math.cos(u), math.sin(u)
        cv, sv = math.cos(v), math.sin(v)
        return SurfaceJet(
            p=np.array([R * cu * cv, R * su * cv, R * sv, 0.0]),
            p_u=np.array([-R * su * cv, R * cu * cv, 0.0, 0.0]),
            p_v=np.array([-R * cu * sv, -R * su * sv, R * cv, 0.0]),
            p_uu=np.array([-R * cu * cv, -R * su * cv, 0.0, 0.0]),
            p_uv=np.array([R * su * sv, -R * cu * sv, 0.0, 0.0]),
            p_vv=np.array([-R * cu * cv, -R * su * cv, -R * sv, 0.0]),
        )

    return SurfacePatch((0.2, 1.2), (-0.5, 0.5), jet, name=f"round_sphere({R})")


# ---------------------------------------------------------------------------
# the generator
# ---------------------------------------------------------------------------

def _derived_expected(patch: SurfacePatch, Pi: Plane) -> PrincipalAngles:
    u = 0.5 * (patch.u_range[0] + patch.u_range[1])
    v = 0.5 * (patch.v_range[0] + patch.v_range[1])
    jet = patch.jet(u, v)
    t1 = jet.p_u / np.linalg.norm(jet.p_u)
    w = jet.p_v - (jet.p_v @ t1) * t1
    tangent = Plane(t1, w / np.linalg.norm(w))
    return principal_angles(tangent, Pi)


def generate(kind: str, **params) -> CatalogSurface:
    """Generate a catalog surface by kind.

    Kinds: ``clifford_torus(r1, r2)``, ``product_circles(r1, r2)``,
    ``product_helix_cylinder(theta[, radius, pitch])``,
    ``revolution_orbit(profile, ...)``, ``plane(...)``,
    ``graph_poly(f_coeffs, g_coeffs, ...)``.
    """
    spec = {"kind": kind, **params}
    if kind in ("clifford_torus", "product_circles"):
        r1 = float(params.get("r1", 1.0))
        r2 = float(params.get("r2", 1.0))
        patch = _product_circles_patch(r1, r2)
        if kind == "clifford_torus":
            patch.name = f"clifford_torus({r1},{r2})"
        return CatalogSurface(patch, PI_12,
                              PrincipalAngles(0.0, math.pi / 2), spec)

    if kind == "product_helix_cylinder":
        theta = float(params["theta"])
        if not (0.0 < theta < math.pi / 2):
            raise ValueError("slope angle must be in (0, pi/2)")
        radius = params.get("radius")
        pitch = params.get("pitch")
        if radius is None and pitch is None:
            radius = math.sin(theta)
            pitch = math.cos(theta)
        elif pitch is None:
            pitch = float(radius) / math.tan(theta)
        elif radius is None:
            radius = float(pitch) * math.tan(theta)
        else:
            implied = math.atan2(float(radius), float(pitch))
            if abs(implied - theta) > 1e-12:
                raise ValueError(
                    f"radius/pitch imply slope {implied}, not {theta}")
        if float(radius) <= 0:
            raise ValueError("cylinder radius must be positive")
        patch = _helix_cylinder_patch(theta, float(radius), float(pitch))
        return CatalogSurface(patch, PI_34, PrincipalAngles(0.0, theta), spec)

    if kind == "revolution_orbit":
        profile = params.get("profile", "line")
        if profile == "line":
            theta = float(params.get("theta", math.pi / 6))
            offset = float(params.get("offset", 1.0))
            d = math.cos(theta) * E4[0] + math.sin(theta) * E4[2]
            gamma = line_curve(offset * E4[2], d)
            s_range = params.get("s_range", (0.2, 1.2))
            attach = PI_12
        elif profile == "helix":
            a = float(params.get("a", 1.0))
            b = float(params.get("b", 0.5))
            z0 = float(params.get("z0", 1.0))
            gamma = helix_curve(a, b, z0)
            s_range = params.get("s_range", (0.0, 2.0))
            attach = PI_12
        elif profile == "spherical_helix":
            R = float(params.get("R", 1.0))
            beta = float(params.get("beta", 1.0))
            gamma = spherical_helix_curve(R, beta)
            umax = R * math.sin(beta)
            s_range = params.get("s_range", (0.25 * umax, 0.75 * umax))
            attach = PI_34
        else:
            raise ValueError(f"unknown orbit profile {profile!r}")
        phi_range = params.get("phi_range", (0.0, math.pi))
        patch = orbit_surface(gamma, PI_12, tuple(s_range), tuple(phi_range),
                              name=f"revolution_orbit({profile})")
        return CatalogSurface(patch, attach, _derived_expected(patch, attach), spec)

    if kind == "plane":
        p0 = params.get("p0", np.zeros(4))
        a = params.get("a", E4[0])
        b = params.get("b", E4[1])
        patch = _plane_patch(p0, a, b)
        return CatalogSurface(patch, PI_12, _derived_expected(patch, PI_12), spec)

    if kind == "graph_poly":
        f_coeffs = np.atleast_2d(np.asarray(params["f_coeffs"], dtype=float))
        g_coeffs = np.atleast_2d(np.asarray(params["g_coeffs"], dtype=float))
        x_range = tuple(params.get("x_range", (-1.0, 1.0)))
        y_range = tuple(params.get("y_range", (-1.0, 1.0)))
        patch = graph_patch_from_jets(_poly2d(f_coeffs), _poly2d(g_coeffs),
                                      x_range, y_range, name="graph_poly")
        return CatalogSurface(patch, PI_12, _derived_expected(patch, PI_12), spec)

    raise ValueError(f"unknown catalog kind {kind!r}")


# named examples for the command line
_EXAMPLES = {
    "clifford_torus": lambda: generate("clifford_torus", r1=1.0, r2=1.0),
    "product_circles": lambda: generate("product_circles", r1=1.0, r2=0.5),
    "helix_cylinder": lambda: generate("product_helix_cylinder", theta=math.pi / 5),
    "orbit_cone": lambda: generate("revolution_orbit", profile="line",
                                   theta=math.pi / 6),
    "orbit_helix": lambda: generate("revolution_orbit", profile="helix"),
    "spherical_helix_revolution": lambda: generate(
        "revolution_orbit", profile="spherical_helix", R=1.0, beta=1.0),
    "plane": lambda: generate("plane"),
}

EXAMPLE_NAMES = tuple(sorted(_EXAMPLES))


def named_example(name: str) -> CatalogSurface:
    try:
        return _EXAMPLES[name]()
    except KeyError:
        raise ValueError(f"unknown example {name!r}; "
                         f"choose from {', '.join(EXAMPLE_NAMES)}") from None

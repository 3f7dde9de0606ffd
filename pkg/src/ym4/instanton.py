"""The explicit one-instanton family and its closed-form curvature.

The connection at scale lam and center p samples

    A_mu(x) = (2 / lam) * f(y) * P_mu(y),     y = (x - p) / lam,
    f(y) = 1 / (1 + |y|^2),

where P_mu(y) are the linear algebra-valued patterns

    P_1 = (-y2, -y3, -y4)   P_2 = (y1, -y4, y3)
    P_3 = (y4, y1, -y2)     P_4 = (-y3, y2, y1)

on the basis (e1, e2, e3).  The factor 2 is forced: the quaternion
units must act through the faithful 2x2 representation (i -> 2*e1,
...) for the curvature to be anti-self-dual; the bare basis
identification i -> e1 does not preserve quaternion products.

Its curvature in closed form (derived by hand and checked symbolically;
see docs/instanton_curvature.md):

    G(x) = lam^2 / (lam^2 + |x - p|^2)^2
    F_12 =  4G e1   F_13 =  4G e2   F_14 =  4G e3
    F_23 = -4G e3   F_24 =  4G e2   F_34 = -4G e1

so |F|^2 = 48 G^2, star F = -F pointwise, and the total energy is
(1/2) * 8 pi^2 = 4 pi^2 at every scale.
"""

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import lattice


def bpst_values(coords, scale, center):
    """Instanton one-form sampled at an arbitrary coordinate array.

    coords has shape (..., 4); the result has shape (..., 4, 3).
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    coords = np.asarray(coords, dtype=float)
    y = (coords - np.asarray(center, dtype=float)) / scale
    c = (2.0 / scale) / (1.0 + np.sum(y * y, axis=-1))
    y1, y2, y3, y4 = (y[..., mu] for mu in range(4))
    A = np.zeros(coords.shape[:-1] + (4, 3))
    A[..., 0, 0], A[..., 0, 1], A[..., 0, 2] = -y2, -y3, -y4
    A[..., 1, 0], A[..., 1, 1], A[..., 1, 2] = y1, -y4, y3
    A[..., 2, 0], A[..., 2, 1], A[..., 2, 2] = y4, y1, -y2
    A[..., 3, 0], A[..., 3, 1], A[..., 3, 2] = -y3, y2, y1
    return A * c[..., None, None]


def bpst(grid, scale, center=None):
    """Sample the instanton connection as a one-form array."""
    p = grid.center if center is None else np.asarray(center, dtype=float)
    return bpst_values(grid.coords, scale, p)


def bpst_curvature_values(coords, scale, center):
    """Exact instanton curvature at an arbitrary coordinate array."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    coords = np.asarray(coords, dtype=float)
    r2 = np.sum((coords - np.asarray(center, dtype=float)) ** 2, axis=-1)
    G4 = 4.0 * scale**2 / (scale**2 + r2) ** 2
    F = np.zeros(coords.shape[:-1] + (6, 3))
    F[..., 0, 0] = G4
    F[..., 1, 1] = G4
    F[..., 2, 2] = G4
    F[..., 3, 2] = -G4
    F[..., 4, 1] = G4
    F[..., 5, 0] = -G4
    return F


def bpst_curvature_closed_form(grid, scale, center=None):
    """Exact sampled curvature of bpst(grid, scale, center)."""
    p = grid.center if center is None else np.asarray(center, dtype=float)
    return bpst_curvature_values(grid.coords, scale, p)


def bpst_energy_within(radius, scale):
    """Closed-form energy of the instanton inside a centered ball.

    The radial energy density integrates to
    4 pi^2 * (1 - 3 (1+t^2)^-2 + 2 (1+t^2)^-3),  t = radius / scale.
    """
    t2 = (radius / scale) ** 2
    u = 1.0 + t2
    return 4.0 * np.pi**2 * (1.0 - 3.0 / u**2 + 2.0 / u**3)


def pullback_dilation(grid, field, scale, center, target_grid=None):
    """Pull a field back along x -> center + scale * x.

    One-forms pick up one factor of scale, two-forms two, scalars none,
    so energies are preserved in the continuum.  Values are resampled
    by multilinear interpolation on the source grid; target nodes whose
    image leaves the source box raise.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    tgt = grid if target_grid is None else target_grid
    center = np.asarray(center, dtype=float)
    pts = center + scale * tgt.coords
    lo = grid.center - grid.half_width
    hi = grid.center + grid.half_width
    pad = 1e-9 * grid.half_width
    if np.any(pts < lo - pad) or np.any(pts > hi + pad):
        raise ValueError("dilation image leaves the source grid")
    pts = np.clip(pts, lo, hi)

    field = np.asarray(field, dtype=float)
    extra = field.shape[4:]
    axes = [grid.axis_coords(mu) for mu in range(4)]
    interp = RegularGridInterpolator(axes, field.reshape(grid.shape + (-1,)))
    out = interp(pts.reshape(-1, 4)).reshape(tgt.shape + extra)
    weight = {0: 1.0, 4: scale, 6: scale**2}[0 if field.ndim == 5 else field.shape[4]]
    return weight * out


def stereographic_weight(grid, eta, center=None):
    """Chart form of the round-sphere comparison weight at a given aperture.

    Two branches meeting continuously at |y| = 1/eta:
    (1+eta^2)^2/eta^2 * (1+|y|^2)^-2 inside, 1/(eta^2 |y|^4) outside.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    p = grid.center if center is None else np.asarray(center, dtype=float)
    r2 = np.sum((grid.coords - p) ** 2, axis=-1)
    inner = (1.0 + eta**2) ** 2 / eta**2 / (1.0 + r2) ** 2
    with np.errstate(divide="ignore"):
        outer = 1.0 / (eta**2 * np.maximum(r2, 1e-300) ** 2)
    return np.where(r2 <= 1.0 / eta**2, inner, outer)

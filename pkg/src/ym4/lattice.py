"""Uniform 4D box grids and discrete calculus for algebra-valued forms.

Fields are plain numpy arrays over the node lattice:

* scalar field:  shape (N, N, N, N, 3)      one algebra value per node
* one-form:      shape (N, N, N, N, 4, 3)   components a_mu in dx^mu
* two-form:      shape (N, N, N, N, 6, 3)   components in the ordered basis
                 (dx1^dx2, dx1^dx3, dx1^dx4, dx2^dx3, dx2^dx4, dx3^dx4)

Derivatives use central differences at interior nodes and second-order
one-sided stencils on the box faces, so d(d(.)) vanishes only at O(h^2);
identities that would be exact in the continuum are therefore tested as
convergence rates, not as exact equalities.  Quadrature is the tensor
product of 1D trapezoidal rules, matching the stencil order.

Reductions go through np.sum on C-ordered arrays (pairwise summation in
a fixed order), so integrals are bit-reproducible run to run.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import su2

# Index pairs (mu, nu), mu < nu, addressing two-form slots 0..5.
PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

# For each axis nu, the slots holding F_{mu nu} for mu != nu, as
# (slot, mu, sign) with F_{mu nu} = sign * comps[slot].
_SLOTS_BY_AXIS = tuple(
    tuple(
        (slot, (p[0] if p[1] == nu else p[1]), (1.0 if p[1] == nu else -1.0))
        for slot, p in enumerate(PAIRS)
        if nu in p
    )
    for nu in range(4)
)

# Hodge star on two-form slots: slot -> (image slot, sign), orientation
# dx1^dx2^dx3^dx4.
_STAR = ((5, 1.0), (4, -1.0), (3, 1.0), (2, 1.0), (1, -1.0), (0, 1.0))


@dataclass(eq=False)
class Grid:
    """Uniform node lattice on the box [center - L, center + L]^4.

    boundary_depth counts how many node layers from each face belong to
    the Dirichlet set; fields "compatible" with the grid vanish there.
    """

    half_width: float
    n: int
    center: np.ndarray = field(default_factory=lambda: np.zeros(4))
    boundary_depth: int = 1

    def __post_init__(self):
        if self.n < 5:
            raise ValueError("need at least 5 points per axis")
        if self.boundary_depth < 1:
            raise ValueError("boundary_depth must be >= 1")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        self.center = np.asarray(self.center, dtype=float)
        if self.center.shape != (4,):
            raise ValueError("center must be a 4-vector")

    @property
    def h(self):
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def shape(self):
        return (self.n,) * 4

    def axis_coords(self, axis):
        """Node coordinates along one axis (endpoints exact)."""
        c = self.center[axis]
        return np.linspace(c - self.half_width, c + self.half_width, self.n)

    @cached_property
    def coords(self):
        """Node coordinates, shape (N, N, N, N, 4)."""
        axes = [self.axis_coords(mu) for mu in range(4)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids, axis=-1)

    @cached_property
    def quad_weights(self):
        """Trapezoidal quadrature weights per node; sum = (2L)^4."""
        w1 = np.full(self.n, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        w = w1
        for _ in range(3):
            w = np.multiply.outer(w, w1)
        return w

    @cached_property
    def interior_mask(self):
        """True off the Dirichlet layers, shape (N, N, N, N)."""
        d = self.boundary_depth
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(d, -d),) * 4] = True
        return mask

    def radius(self, point=None):
        """Distance of every node from `point` (grid center by default)."""
        p = self.center if point is None else np.asarray(point, dtype=float)
        return np.sqrt(np.sum((self.coords - p) ** 2, axis=-1))

    def zeros(self, kind):
        ncomp = {"scalar": 0, "oneform": 4, "twoform": 6}[kind]
        if ncomp == 0:
            return np.zeros(self.shape + (3,))
        return np.zeros(self.shape + (ncomp, 3))

    def compatible(self, u):
        return u.shape[:4] == self.shape


def _check(grid, *fields):
    for u in fields:
        if not grid.compatible(np.asarray(u)):
            raise ValueError("field does not live on this grid")


def diff_axis(grid, values, axis):
    """Partial derivative along one coordinate axis.

    Central differences inside, one-sided second-order stencils on the
    two boundary hyperplanes.  Works for any trailing shape and dtype
    (gauge fields are complex matrices).
    """
    f = np.asarray(values)
    h = grid.h
    out = np.empty_like(f)

    def sl(idx):
        s = [slice(None)] * f.ndim
        s[axis] = idx
        return tuple(s)

    out[sl(slice(1, -1))] = (f[sl(slice(2, None))] - f[sl(slice(None, -2))]) / (2 * h)
    out[sl(0)] = (-3 * f[sl(0)] + 4 * f[sl(1)] - f[sl(2)]) / (2 * h)
    out[sl(-1)] = (3 * f[sl(-1)] - 4 * f[sl(-2)] + f[sl(-3)]) / (2 * h)
    return out


def d(grid, u):
    """Discrete exterior derivative: scalar -> one-form -> two-form."""
    u = np.asarray(u, dtype=float)
    _check(grid, u)
    if u.ndim == 5:  # scalar g-field
        out = grid.zeros("oneform")
        for mu in range(4):
            out[..., mu, :] = diff_axis(grid, u, mu)
        return out
    if u.ndim == 6 and u.shape[4] == 4:
        out = grid.zeros("twoform")
        for slot, (mu, nu) in enumerate(PAIRS):
            out[..., slot, :] = diff_axis(grid, u[..., nu, :], mu) - diff_axis(
                grid, u[..., mu, :], nu
            )
        return out
    raise ValueError("d expects a scalar field or a one-form")


def dstar(grid, u):
    """Flat codifferential: one-form -> scalar, two-form -> one-form."""
    u = np.asarray(u, dtype=float)
    _check(grid, u)
    if u.ndim == 6 and u.shape[4] == 4:
        out = np.zeros(grid.shape + (3,))
        for mu in range(4):
            out -= diff_axis(grid, u[..., mu, :], mu)
        return out
    if u.ndim == 6 and u.shape[4] == 6:
        out = grid.zeros("oneform")
        for nu in range(4):
            acc = np.zeros(grid.shape + (3,))
            for slot, mu, sign in _SLOTS_BY_AXIS[nu]:
                acc += sign * diff_axis(grid, u[..., slot, :], mu)
            out[..., nu, :] = -acc
        return out
    raise ValueError("dstar expects a one-form or a two-form")


def twoform_entry(F, mu, nu):
    """Signed component F_{mu nu} from the upper-triangle slot storage."""
    if mu == nu:
        return np.zeros_like(F[..., 0, :])
    if mu < nu:
        return F[..., PAIRS.index((mu, nu)), :]
    return -F[..., PAIRS.index((nu, mu)), :]


def hodge_star(F):
    """4D Hodge star on two-forms; an involution and an l2 isometry."""
    F = np.asarray(F)
    if F.shape[-2] != 6:
        raise ValueError("hodge_star expects a two-form")
    out = np.empty_like(F)
    for slot, (img, sign) in enumerate(_STAR):
        out[..., img, :] = sign * F[..., slot, :]
    return out


def pointwise_inner(u, v):
    """Sum of algebra inner products over all form components, per node.

    Two-form slots are accumulated in star-orbit pairs (0,5), (1,4),
    (2,3) so the Hodge star is a bitwise-exact isometry (addition
    commutes in floating point even though it does not associate).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.ndim == 5:
        return su2.inner(u, v)
    dots = 0.5 * np.einsum("...ci,...ci->...c", u, v)
    if u.shape[-2] == 6:
        return (
            (dots[..., 0] + dots[..., 5])
            + (dots[..., 1] + dots[..., 4])
            + (dots[..., 2] + dots[..., 3])
        )
    return np.sum(dots, axis=-1)


def l2_inner(grid, u, v, weight=None):
    """Weighted L2 pairing: sum of quad_weight * omega * <u, v> over nodes.

    `weight` is a per-node array (defaults to 1).  u and v must share
    the grid and the component count.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check(grid, u, v)
    if u.shape != v.shape:
        raise ValueError("mismatched field shapes")
    ip = pointwise_inner(u, v)
    w = grid.quad_weights
    if weight is not None:
        w = w * np.asarray(weight, dtype=float)
    return float(np.sum(w * ip))


def l2_norm_sq(grid, u, weight=None):
    return l2_inner(grid, u, u, weight=weight)


def bump_profile(t):
    """C^2 bump (1 - t^2)^3 on [0, 1), zero outside."""
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, (1.0 - np.minimum(t * t, 1.0)) ** 3, 0.0)


def bump_profile_deriv(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, -6.0 * t * (1.0 - np.minimum(t * t, 1.0)) ** 2, 0.0)


def make_bump_oneform(grid, center, radius, direction, algebra_dir):
    """Smooth compactly supported one-form: profile bump times a constant
    algebra value placed in coordinate slot `direction` (1-based).

    The support ball must stay inside the non-Dirichlet region.
    """
    if not 1 <= int(direction) <= 4:
        raise ValueError("direction must be in 1..4")
    center = np.asarray(center, dtype=float)
    margin = grid.half_width - grid.boundary_depth * grid.h
    if np.any(np.abs(center - grid.center) + radius >= margin):
        raise ValueError("bump support exceeds the non-Dirichlet region")
    rho = grid.radius(center)
    out = grid.zeros("oneform")
    out[..., int(direction) - 1, :] = bump_profile(rho / radius)[..., None] * np.asarray(
        algebra_dir, dtype=float
    )
    return out


def ball_mask(grid, R, center=None):
    """Nodes with |x - center| <= R."""
    return grid.radius(center) <= R


def annulus_mask(grid, r, R, center=None):
    """Nodes with r <= |x - center| <= R."""
    if r >= R:
        raise ValueError("annulus needs r < R")
    rho = grid.radius(center)
    return (rho >= r) & (rho <= R)


def cutoff_profile(t):
    """Fixed smooth transition: 1 on [0, 1], 0 on [2, inf), C-infinity.

    Built from the standard exp(-1/u) glue, so every derivative vanishes
    at both ends of the transition interval.
    """
    t = np.asarray(t, dtype=float)
    up = np.clip(t - 1.0, 0.0, 1.0)  # 0 at t<=1, 1 at t>=2
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(up > 0.0, np.exp(-1.0 / np.maximum(up, 1e-300)), 0.0)
        b = np.where(up < 1.0, np.exp(-1.0 / np.maximum(1.0 - up, 1e-300)), 0.0)
    return b / (a + b)


def cutoff_profile_deriv(t):
    """Analytic derivative of `cutoff_profile`; zero outside (1, 2)."""
    t = np.asarray(t, dtype=float)
    up = np.clip(t - 1.0, 0.0, 1.0)
    inside = (up > 0.0) & (up < 1.0)
    u = np.where(inside, up, 0.5)  # placeholder value avoids overflow off-interval
    a = np.exp(-1.0 / u)
    b = np.exp(-1.0 / (1.0 - u))
    val = -a * b * (u**-2 + (1.0 - u) ** -2) / (a + b) ** 2
    return np.where(inside, val, 0.0)


def radial_cutoff(grid, center=None, inner_on=None, outer_on=None):
    """Per-node annular cutoff built from `cutoff_profile`.

    Equals 1 where inner_on <= |x - center| <= outer_on, vanishes
    outside |x - center| in [inner_on/2, 2*outer_on], and its radial
    derivative obeys |dchi| <= C / |x - center| with C independent of
    both radii.  Either radius may be omitted.
    """
    rho = grid.radius(center)
    chi = np.ones(grid.shape)
    if outer_on is not None:
        chi = chi * cutoff_profile(rho / outer_on)
    if inner_on is not None:
        with np.errstate(divide="ignore"):
            chi = chi * cutoff_profile(np.where(rho > 0.0, inner_on / np.maximum(rho, 1e-300), np.inf))
    return chi


def apply_cutoff_profile(grid, a, center=None, inner_on=None, outer_on=None):
    """Multiply a form by the annular cutoff; returns a new array."""
    a = np.asarray(a, dtype=float)
    _check(grid, a)
    if inner_on is not None and outer_on is not None and inner_on >= outer_on:
        raise ValueError("cutoff needs inner_on < outer_on")
    chi = radial_cutoff(grid, center=center, inner_on=inner_on, outer_on=outer_on)
    extra = a.ndim - 4
    return a * chi.reshape(chi.shape + (1,) * extra)


def grad_norm_sq(grid, u, weight=None):
    """Full-gradient Dirichlet energy: sum_mu ||d_mu u||^2 (weighted)."""
    total = 0.0
    for mu in range(4):
        g = diff_axis(grid, u, mu)
        total += l2_inner(grid, g, g, weight=weight)
    return total

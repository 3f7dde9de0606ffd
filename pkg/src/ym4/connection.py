"""Connections as global algebra-valued one-forms.

A connection is held as a single one-form array A on a Grid (global
trivialization; gauges are explicit SU(2) fields, never cocycles).
Curvature, covariant calculus, gauge action, annular cutoff, first
variation, and the Yang-Mills / Bianchi residuals all live here.

Component conventions, fixed once and validated by the exact
polynomial-in-t energy expansion test:

    F_{mu nu}    = d_mu A_nu - d_nu A_mu + [A_mu, A_nu]
    (a ^ a)_{mu nu} = [a_mu, a_nu]
    (d_A a)_{mu nu} = (da)_{mu nu} + [A_mu, a_nu] - [A_nu, a_mu]
    d_A* a       = -sum_mu (d_mu a_mu + [A_mu, a_mu])
    (d_A* G)_nu  = -sum_mu (d_mu G_{mu nu} + [A_mu, G_{mu nu}])
"""

from dataclasses import dataclass

import numpy as np

from . import lattice, su2
from .lattice import PAIRS, diff_axis, l2_inner, twoform_entry


def self_wedge(a):
    """(a ^ a)_{mu nu} = [a_mu, a_nu] on the six ordered slots."""
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape[:-2] + (6, 3))
    for slot, (mu, nu) in enumerate(PAIRS):
        out[..., slot, :] = su2.bracket(a[..., mu, :], a[..., nu, :])
    return out


def curvature(grid, A):
    """F_A = dA + A ^ A as a two-form array."""
    return lattice.d(grid, A) + self_wedge(A)


def ym_energy(grid, A, region_mask=None):
    """Yang-Mills energy (1/2) int |F_A|^2, optionally mask-restricted."""
    F = curvature(grid, A)
    w = None if region_mask is None else region_mask.astype(float)
    return 0.5 * l2_inner(grid, F, F, weight=w)


def cov_d(grid, A, a):
    """Covariant exterior derivative of a one-form: da + [A, a]."""
    a = np.asarray(a, dtype=float)
    if a.shape != A.shape:
        raise ValueError("connection and one-form shapes differ")
    out = lattice.d(grid, a)
    for slot, (mu, nu) in enumerate(PAIRS):
        out[..., slot, :] += su2.bracket(A[..., mu, :], a[..., nu, :])
        out[..., slot, :] -= su2.bracket(A[..., nu, :], a[..., mu, :])
    return out


def cov_grad(grid, A, phi):
    """Covariant derivative of an algebra-valued scalar: d phi + [A, phi]."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != A.shape[:4] + (3,):
        raise ValueError("connection and scalar live on different grids")
    out = np.empty(phi.shape[:4] + (4, 3))
    for mu in range(4):
        out[..., mu, :] = diff_axis(grid, phi, mu) + su2.bracket(A[..., mu, :], phi)
    return out


def cov_dstar(grid, A, u):
    """Covariant codifferential; one-forms -> scalars, two-forms -> one-forms."""
    u = np.asarray(u, dtype=float)
    if u.shape[:4] != A.shape[:4]:
        raise ValueError("connection and field live on different grids")
    out = lattice.dstar(grid, u)
    if u.shape[-2] == 4:
        for mu in range(4):
            out -= su2.bracket(A[..., mu, :], u[..., mu, :])
        return out
    for nu in range(4):
        for mu in range(4):
            if mu != nu:
                out[..., nu, :] -= su2.bracket(A[..., mu, :], twoform_entry(u, mu, nu))
    return out


def _project_algebra(m):
    """Anti-Hermitian traceless part of a matrix stack."""
    anti = 0.5 * (m - np.swapaxes(m, -1, -2).conj())
    tr = np.trace(anti, axis1=-2, axis2=-1)
    return anti - 0.5 * tr[..., None, None] * np.eye(2)


def gauge_transform(grid, A, g, projection_tol=1e-6):
    """Gauge action A -> g^{-1} A g + g^{-1} dg.

    g is an SU(2) field of shape (N, N, N, N, 2, 2).  The derivative dg
    is the lattice stencil applied entrywise, so the result drifts off
    the algebra at O(h^2); it is projected back and the drift checked
    against projection_tol (relative to the largest component), which
    flags a gauge too rough for the grid.
    """
    g = np.asarray(g, dtype=complex)
    ginv = np.swapaxes(g, -1, -2).conj()
    out = np.empty_like(np.asarray(A, dtype=float))
    worst = 0.0
    scale = 0.0
    for mu in range(4):
        amat = su2.to_matrix(A[..., mu, :])
        m = ginv @ amat @ g + ginv @ diff_axis(grid, g, mu)
        p = _project_algebra(m)
        worst = max(worst, float(np.max(np.abs(m - p))))
        scale = max(scale, float(np.max(np.abs(p))))
        out[..., mu, :] = su2.from_matrix(p)
    if worst > projection_tol * max(1.0, scale):
        raise ValueError(
            f"gauge field too rough for this grid: projection drift {worst:.3e}"
        )
    return out


def conjugate(a, g):
    """Pointwise adjoint action g^{-1} a g on any form (exactly algebra-valued)."""
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=complex)
    ginv = np.swapaxes(g, -1, -2).conj()
    out = np.empty_like(a)
    ncomp = a.shape[-2] if a.ndim >= 6 else None
    if ncomp is None:
        return su2.from_matrix(ginv @ su2.to_matrix(a) @ g)
    for c in range(ncomp):
        out[..., c, :] = su2.from_matrix(ginv @ su2.to_matrix(a[..., c, :]) @ g)
    return out


@dataclass
class CutoffReport:
    lhs: float            # ||F_{chi A}|| on the outer ball
    rhs_curvature: float  # ||F_A|| off the inner half-ball
    rhs_sobolev: float    # W^{1,2} norm of A on the transition annulus
    ratio: float
    grad_chi_max: float


def cutoff_connection(grid, A, r, R, center=None):
    """Kill A inside the half-ball of radius r/2 with a linear radial ramp.

    chi = 0 on |x| <= r/2, = 1 on |x| >= r (so on all of the annulus up
    to R), with ||d chi||_inf = 2/r.  Returns (chi * A, report); the
    report compares the cut connection's curvature on B_R against the
    original curvature off the inner half-ball plus the W^{1,2} norm of
    A on the transition annulus, the quantities the cut can create.
    """
    if r >= R:
        raise ValueError("cutoff needs r < R")
    A = np.asarray(A, dtype=float)
    rho = grid.radius(center)
    chi = np.clip((2.0 * rho - r) / r, 0.0, 1.0)
    cut = A * chi[..., None, None]

    ball = lattice.ball_mask(grid, R, center).astype(float)
    shell = (rho >= r / 2).astype(float) * ball
    annulus = ((rho >= r / 2) & (rho <= r)).astype(float)

    Fcut = curvature(grid, cut)
    F = curvature(grid, A)
    lhs = np.sqrt(l2_inner(grid, Fcut, Fcut, weight=ball))
    rhs_curv = np.sqrt(l2_inner(grid, F, F, weight=shell))
    sob = l2_inner(grid, A, A, weight=annulus)
    for mu in range(4):
        da = diff_axis(grid, A, mu)
        sob += l2_inner(grid, da, da, weight=annulus)
    rhs_sob = np.sqrt(sob)
    denom = rhs_curv + rhs_sob
    report = CutoffReport(
        lhs=lhs,
        rhs_curvature=rhs_curv,
        rhs_sobolev=rhs_sob,
        ratio=lhs / denom if denom > 0 else 0.0,
        grad_chi_max=2.0 / r,
    )
    return cut, report


def first_variation(grid, A, a):
    """Directional derivative of the energy: <F_A, d_A a>."""
    F = curvature(grid, A)
    return l2_inner(grid, F, cov_d(grid, A, a))


def ym_residual(grid, A):
    """||d_A* F_A|| over interior nodes; zero in the continuum when A
    is a critical point of the energy."""
    F = curvature(grid, A)
    r = cov_dstar(grid, A, F)
    w = grid.interior_mask.astype(float)
    return np.sqrt(l2_inner(grid, r, r, weight=w))


def bianchi_residual(grid, A):
    """||d_A F_A|| over interior nodes.

    The continuum identity holds for every connection, Yang-Mills or
    not, so this is purely a discretization residual.
    """
    A = np.asarray(A, dtype=float)
    F = curvature(grid, A)
    triples = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    out = np.zeros(grid.shape + (4, 3))
    for c, (mu, nu, lam) in enumerate(triples):
        for p, q, s in ((mu, nu, lam), (nu, lam, mu), (lam, mu, nu)):
            Fqs = twoform_entry(F, q, s)
            out[..., c, :] += diff_axis(grid, Fqs, p)
            out[..., c, :] += su2.bracket(A[..., p, :], Fqs)
    w = grid.interior_mask.astype(float)
    return np.sqrt(l2_inner(grid, out, out, weight=w))

"""Second variation of the energy: quadratic forms and sparse assembly.

q_form is the raw second derivative of the energy at a connection;
calq_form adds the divergence penalty that removes the gauge kernel.
assemble() builds the weak-form stiffness/mass pencil (K, W) over
Dirichlet-interior DOFs so that a^T K a reproduces calq_form(a) by
quadrature; that identity doubles as the sign gate for the curvature
potential term.  coulomb_project splits off the pure-gauge part of a
perturbation by a conjugate-gradient solve on the scalar space.

DOF layout: direction-major, node-major (C order), algebra index last.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from . import connection, lattice
from .lattice import PAIRS, l2_inner, twoform_entry


def q_form(grid, A, a):
    """Second derivative of the energy at A in direction a.

    ||d_A a||^2 + <F_A, [a,a]> with [a,a] twice the wedge square; pure
    quadrature, no matrix assembly.
    """
    F = connection.curvature(grid, A)
    da = connection.cov_d(grid, A, a)
    return l2_inner(grid, da, da) + 2.0 * l2_inner(grid, F, connection.self_wedge(a))


def calq_form(grid, A, a):
    """q_form plus the divergence penalty ||d_A* a||^2."""
    dsa = connection.cov_dstar(grid, A, a)
    return q_form(grid, A, a) + l2_inner(grid, dsa, dsa)


class DofMap:
    """Indexing between one-form fields and Dirichlet-interior vectors.

    A DOF is (direction, node, algebra index); boundary-layer nodes
    carry no DOF and to_field writes zeros there.
    """

    def __init__(self, grid, region_mask=None):
        self.grid = grid
        m = grid.n**4
        keep = grid.interior_mask
        if region_mask is not None:
            region_mask = np.asarray(region_mask)
            if region_mask.shape != grid.shape:
                raise ValueError("region mask does not live on this grid")
            keep = keep & region_mask.astype(bool)
        self.nodes = np.flatnonzero(keep.ravel())
        self.scalar_indices = (self.nodes[:, None] * 3 + np.arange(3)).ravel()
        self.indices = np.concatenate(
            [mu * 3 * m + self.scalar_indices for mu in range(4)]
        )
        self._full = 12 * m

    @property
    def size(self):
        return self.indices.size

    def to_vector(self, field):
        v = np.moveaxis(np.asarray(field, dtype=float), 4, 0).ravel()
        return v[self.indices]

    def to_field(self, vec):
        full = np.zeros(self._full)
        full[self.indices] = vec
        n = self.grid.n
        return np.moveaxis(full.reshape(4, n, n, n, n, 3), 0, 4)

    def scalar_to_vector(self, phi):
        return np.asarray(phi, dtype=float).reshape(-1)[self.scalar_indices]

    def scalar_to_field(self, vec):
        full = np.zeros(self.grid.n**4 * 3)
        full[self.scalar_indices] = vec
        return full.reshape(self.grid.shape + (3,))


@dataclass(eq=False)
class AssembledForm:
    grid: lattice.Grid
    stiffness: sp.csr_matrix
    mass: sp.dia_matrix
    dof_map: DofMap

    @property
    def mass_diagonal(self):
        return self.mass.diagonal()


@lru_cache(maxsize=32)
def _stencil_1d(n, h):
    """1D derivative matrix matching the diff_axis stencils row for row:
    central inside, one-sided second order on the two end rows."""
    r = np.arange(1, n - 1)
    rows = np.concatenate([r, r, [0, 0, 0], [n - 1, n - 1, n - 1]])
    cols = np.concatenate([r - 1, r + 1, [0, 1, 2], [n - 1, n - 2, n - 3]])
    data = np.concatenate(
        [np.full(n - 2, -1.0), np.full(n - 2, 1.0), [-3.0, 4.0, -1.0], [3.0, -4.0, 1.0]]
    ) / (2.0 * h)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


@lru_cache(maxsize=32)
def _partial_matrix(n, h, axis):
    """Sparse partial derivative along one axis on (node, algebra) vectors."""
    d1 = _stencil_1d(n, h)
    eye = sp.identity(n, format="csr")
    out = d1 if axis == 0 else eye
    for ax in range(1, 4):
        out = sp.kron(out, d1 if ax == axis else eye, format="csr")
    return sp.kron(out, sp.identity(3, format="csr"), format="csr")


def _ad_matrix(vals):
    """Block-diagonal adjoint action: per node the cross-product matrix."""
    v = np.asarray(vals, dtype=float).reshape(-1, 3)
    j = 3 * np.arange(v.shape[0])
    rows = np.concatenate([j, j, j + 1, j + 1, j + 2, j + 2])
    cols = np.concatenate([j + 1, j + 2, j, j + 2, j, j + 1])
    data = np.concatenate([-v[:, 2], v[:, 1], v[:, 2], -v[:, 0], -v[:, 1], v[:, 0]])
    m = 3 * v.shape[0]
    return sp.csr_matrix((data, (rows, cols)), shape=(m, m))


def _cov_axis(grid, A, mu):
    return _partial_matrix(grid.n, grid.h, mu) + _ad_matrix(A[..., mu, :])


def weight_values(grid, weight, nodes=None):
    """Normalize a weight argument to a per-node array.

    Accepts None (constant 1), a scalar, a node field, or any object
    with a .values node field (weight types from the neck module).
    Positivity and finiteness are checked on `nodes` (flat indices),
    defaulting to the grid interior.
    """
    if weight is None:
        return np.ones(grid.shape)
    if hasattr(weight, "values"):
        weight = weight.values
    w = np.asarray(weight, dtype=float)
    if w.ndim == 0:
        w = np.full(grid.shape, float(w))
    if w.shape != grid.shape:
        raise ValueError("weight field does not live on this grid")
    sel = w.ravel()[nodes] if nodes is not None else w[grid.interior_mask]
    if not np.all(np.isfinite(sel)):
        raise ValueError("weight field has non-finite entries")
    if np.any(sel <= 0.0):
        raise ValueError("weight must be strictly positive on non-Dirichlet nodes")
    return w


def assemble(
    grid,
    A,
    weight=None,
    include_divergence=True,
    include_potential=True,
    region_mask=None,
):
    """Build the stiffness/mass pencil of the second-variation form.

    K encodes <d_A a, d_A b> + <d_A* a, d_A* b> + <pot(a), b> over
    Dirichlet-interior DOFs, with pot the curvature potential
    pot(a)_nu = sum_mu [F_{mu nu}, a_mu]; W encodes the weighted inner
    product <a, b>_omega.  include_divergence / include_potential drop
    the corresponding term (q-only and pure-Hodge pencils); region_mask
    restricts the DOF set further, realizing Dirichlet conditions on a
    subdomain such as a ball.
    """
    A = np.asarray(A, dtype=float)
    lattice._check(grid, A)
    dof = DofMap(grid, region_mask)
    if dof.size == 0:
        raise ValueError("grid has no interior nodes at this boundary depth")
    wvals = weight_values(grid, weight, nodes=dof.nodes)

    sub = dof.scalar_indices
    covs = [_cov_axis(grid, A, mu).tocsc()[:, sub].tocsr() for mu in range(4)]
    w_half = 0.5 * grid.quad_weights.ravel()
    w_block = np.repeat(w_half, 3)

    blocks = [[None] * 4 for _ in range(6)]
    for slot, (mu, nu) in enumerate(PAIRS):
        blocks[slot][nu] = covs[mu]
        blocks[slot][mu] = -covs[nu]
    dop = sp.bmat(blocks, format="csr")
    K = dop.T @ dop.multiply(np.tile(w_block, 6)[:, None])

    if include_divergence:
        div = sp.bmat([[-c for c in covs]], format="csr")
        K = K + div.T @ div.multiply(w_block[:, None])

    if include_potential:
        F = connection.curvature(grid, A)
        wrow = sp.diags(np.repeat(w_half[dof.nodes], 3))
        pot = [[None] * 4 for _ in range(4)]
        for nu in range(4):
            for mu in range(4):
                if mu != nu:
                    fvals = twoform_entry(F, mu, nu).reshape(-1, 3)[dof.nodes]
                    pot[nu][mu] = wrow @ _ad_matrix(fvals)
        P = sp.bmat(pot, format="csr")
        K = K + 0.5 * (P + P.T)

    K = (0.5 * (K + K.T)).tocsr()
    mdiag = np.tile(np.repeat((w_half * wvals.ravel())[dof.nodes], 3), 4)
    return AssembledForm(grid=grid, stiffness=K, mass=sp.diags(mdiag), dof_map=dof)


def coulomb_project(grid, A, a, tol=1e-10, max_iter=None):
    """Remove the pure-gauge part of a: return a - d_A phi.

    phi solves the weak normal equations G^T W G phi = G^T W a on the
    Dirichlet scalar space (G the covariant gradient), by diagonally
    preconditioned CG at relative residual `tol`.  Raises RuntimeError
    with the achieved residual if CG stalls.
    """
    A = np.asarray(A, dtype=float)
    a = np.asarray(a, dtype=float)
    lattice._check(grid, A, a)
    dof = DofMap(grid)
    if dof.size == 0:
        raise ValueError("grid has no interior nodes at this boundary depth")

    sub = dof.scalar_indices
    G = sp.bmat(
        [[_cov_axis(grid, A, mu).tocsc()[:, sub].tocsr()] for mu in range(4)],
        format="csr",
    )
    w_block = np.tile(np.repeat(0.5 * grid.quad_weights.ravel(), 3), 4)
    Gw = G.multiply(w_block[:, None]).tocsr()
    rhs = Gw.T @ np.moveaxis(a, 4, 0).ravel()
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return a.copy()

    L = (G.T @ Gw).tocsr()
    if max_iter is None:
        max_iter = int(10.0 * np.sqrt(sub.size)) + 1
    precond = sp.diags(1.0 / L.diagonal())
    phi, info = cg(L, rhs, rtol=tol, atol=0.0, maxiter=max_iter, M=precond)
    if info != 0:
        resid = float(np.linalg.norm(L @ phi - rhs)) / rhs_norm
        raise RuntimeError(
            f"coulomb projection CG did not converge in {max_iter} iterations "
            f"(relative residual {resid:.3e})"
        )
    return a - connection.cov_grad(grid, A, dof.scalar_to_field(phi))

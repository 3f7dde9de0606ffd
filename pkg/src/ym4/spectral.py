"""Generalized eigensolvers for the second-variation pencil (K, W).

Counts the Morse index (eigenvalues below -tau), the nullity
(|eigenvalue| <= tau) and their sum, the extended signature.  Small
pencils go through a dense symmetric solver; larger ones through
shift-invert Lanczos (ARPACK) when a sparse factorization is
affordable, and through preconditioned LOBPCG beyond that.  Every
reported pair carries its own residual so counts are auditable.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import secondvar

DENSE_CUTOFF = 3000
FACTORIZE_CUTOFF = 4000
_SEED = 0xEB


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    morse_index: int
    nullity: int
    extended_signature: int
    zero_threshold: float
    solver: str
    iterations: int
    residuals: np.ndarray
    valid: bool
    # closest |eigenvalue| on each side of the threshold, for auditing
    # borderline counts (None when a side is empty)
    gap_below: float = None
    gap_above: float = None

    def summary(self):
        gb = "-" if self.gap_below is None else f"{self.gap_below:.3e}"
        ga = "-" if self.gap_above is None else f"{self.gap_above:.3e}"
        return (
            f"index={self.morse_index} nullity={self.nullity} "
            f"signature={self.extended_signature} tau={self.zero_threshold:.3e} "
            f"gap=({gb}, {ga}) solver={self.solver} valid={self.valid}"
        )


def default_threshold(P):
    """1e-6 times the diagonal scale ratio of the pencil."""
    return 1e-6 * float(np.max(P.stiffness.diagonal()) / np.min(P.mass_diagonal))


def _counts(eigs, tau):
    morse = int(np.sum(eigs < -tau))
    null = int(np.sum(np.abs(eigs) <= tau))
    inside = np.abs(eigs) <= tau
    below = np.abs(eigs[inside])
    above = np.abs(eigs[~inside])
    gap_b = float(below.max()) if below.size else None
    gap_a = float(above.min()) if above.size else None
    return morse, null, gap_b, gap_a


def _residuals(K, W, eigs, vecs):
    out = np.empty(len(eigs))
    for i, lam in enumerate(eigs):
        v = vecs[:, i]
        wv = W @ v
        out[i] = np.linalg.norm(K @ v - lam * wv) / np.linalg.norm(wv)
    return out


def _dense_pairs(P, k):
    d = 1.0 / np.sqrt(P.mass_diagonal)
    B = d[:, None] * P.stiffness.toarray() * d[None, :]
    B = 0.5 * (B + B.T)
    lo = min(k, B.shape[0]) - 1
    vals, vecs = scipy.linalg.eigh(B, subset_by_index=[0, lo])
    return vals, d[:, None] * vecs, 0


def max_eig_estimate(P, iters=30):
    """Largest pencil eigenvalue by power iteration on the scaled form."""
    d = 1.0 / np.sqrt(P.mass_diagonal)
    rng = np.random.default_rng(_SEED)
    v = rng.standard_normal(P.stiffness.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = d * (P.stiffness @ (d * v))
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return abs(lam)


def _gershgorin_floor(P):
    d = 1.0 / np.sqrt(P.mass_diagonal)
    B = sp.diags(d) @ P.stiffness @ sp.diags(d)
    center = B.diagonal()
    radius = np.abs(B).sum(axis=1).A1 - np.abs(center)
    return float(np.min(center - radius))


def _shift_invert_pairs(P, k):
    sigma = -2.0 * abs(_gershgorin_floor(P))
    rng = np.random.default_rng(_SEED)
    v0 = rng.standard_normal(P.stiffness.shape[0])
    vals, vecs = spla.eigsh(
        P.stiffness.tocsc(),
        k=k,
        M=sp.diags(P.mass_diagonal).tocsc(),
        sigma=sigma,
        which="LM",
        v0=v0,
        maxiter=300,
    )
    order = np.argsort(vals)
    return vals[order], vecs[:, order], 300


class _FdmPreconditioner:
    """Exact inverse of the flat per-component Laplacian plus a shift.

    The Dirichlet restriction of the quadrature-weighted stencil
    Laplacian is a Kronecker sum of identical 1D pencils, so one small
    generalized eigendecomposition per axis diagonalizes it exactly;
    applying the inverse is four tensor contractions per direction.
    Region-masked DOF sets are handled by embedding into the product
    interior (zero fill), the standard domain-embedding trick.
    """

    def __init__(self, P):
        grid = P.grid
        n, bd, h = grid.n, grid.boundary_depth, grid.h
        m = n - 2 * bd
        w1 = np.full(n, h)
        w1[0] = w1[-1] = 0.5 * h
        Dr = secondvar._stencil_1d(n, h)[:, bd : n - bd].toarray()
        T = Dr.T @ (w1[:, None] * Dr)
        mvec = w1[bd : n - bd]
        theta, V = scipy.linalg.eigh(T, np.diag(mvec))
        self.V = V
        self.theta = theta
        self.m = m
        shift = max(4.0 * theta[0], 1e-8 * theta[-1])
        t = theta.reshape(-1, 1, 1, 1)
        tsum = t + theta.reshape(1, -1, 1, 1) + theta.reshape(1, 1, -1, 1) + theta
        self.inv_diag = 1.0 / (tsum + shift)

        dof = P.dof_map
        multi = np.array(np.unravel_index(dof.nodes, grid.shape)).T - bd
        self.flat = np.ravel_multi_index(multi.T, (m, m, m, m))
        self.full = self.flat.size == m**4
        self.shape = (P.stiffness.shape[0],) * 2

    def _apply_component(self, x):
        # x: (..., m,m,m,m, 3); into the tensor eigenbasis, scale, back
        V = self.V
        lead = x.ndim - 5
        y = x
        for ax in range(4):
            y = np.moveaxis(np.tensordot(V.T, y, axes=(1, lead + ax)), 0, lead + ax)
        y = y * self.inv_diag[..., None]
        for ax in range(4):
            y = np.moveaxis(np.tensordot(V, y, axes=(1, lead + ax)), 0, lead + ax)
        return y

    def solve_block(self, R):
        # R: (dof, b) column block; batch all columns in one contraction
        m = self.m
        b = R.shape[1]
        blocks = np.ascontiguousarray(R.T).reshape(b, 4, self.flat.size, 3)
        if self.full:
            x = blocks.reshape(b, 4, m, m, m, m, 3)
        else:
            x = np.zeros((b, 4, m**4, 3))
            x[:, :, self.flat] = blocks
            x = x.reshape(b, 4, m, m, m, m, 3)
        y = self._apply_component(x).reshape(b, 4, m**4, 3)
        if not self.full:
            y = y[:, :, self.flat]
        return y.reshape(b, -1).T.copy()

    def solve(self, r):
        return self.solve_block(r.reshape(-1, 1)).ravel()


def _lobpcg_pairs(P, k, maxiter=1500):
    n = P.stiffness.shape[0]
    rng = np.random.default_rng(_SEED)
    # oversample: the trailing block pair converges slowly at exact size
    kb = min(n, k + min(10, max(2, k // 4)))
    X = rng.standard_normal((n, kb))
    fdm = _FdmPreconditioner(P)
    M = spla.LinearOperator(fdm.shape, matvec=fdm.solve, matmat=fdm.solve_block)
    W = sp.diags(P.mass_diagonal)
    K = P.stiffness
    # lobpcg's stop test is ||Kx - lam Wx|| with x normalized in W; aim a
    # notch under the relative residual bar and recheck that bar outside
    tol = 1e-9 * float(np.sqrt(P.mass_diagonal.min()))
    total = 0
    vals = None
    while total < maxiter:
        # short chunks: the external residual bar below is weaker than
        # lobpcg's internal absolute tol, so recheck it often
        step = min(100, maxiter - total)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals, X = spla.lobpcg(
                K, X, B=W, M=M, largest=False, tol=tol, maxiter=step
            )
        total += step
        srt = np.argsort(vals)
        vals, X = vals[srt], X[:, srt]
        res = _residuals(K, W, vals[:k], X[:, :k])
        if np.all(res <= 1e-9 * np.maximum(1.0, np.abs(vals[:k]))):
            break
    return vals[:k], X[:, :k], total


def smallest_eigs(P, k, tau=None, method="auto"):
    """The k smallest generalized eigenvalues of K v = lambda W v.

    method: 'auto' picks dense below 3000 DOF, shift-invert Lanczos
    while a sparse factorization stays affordable, LOBPCG beyond;
    'dense' / 'shift-invert' / 'lobpcg' force a path.  Non-convergence
    is reported through .valid = False, never raised.
    """
    n = P.stiffness.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= {n} eigenvalues, got {k}")
    if tau is None:
        tau = default_threshold(P)
    if tau <= 0:
        raise ValueError("zero threshold must be positive")

    if method == "auto":
        if n < DENSE_CUTOFF:
            method = "dense"
        elif n <= FACTORIZE_CUTOFF and k < n - 1:
            method = "shift-invert"
        else:
            method = "lobpcg"
    if method == "shift-invert" and k >= n - 1:
        method = "dense"

    tried = []
    order = {"dense": [_dense_pairs], "shift-invert": [_shift_invert_pairs, _lobpcg_pairs], "lobpcg": [_lobpcg_pairs]}[method]
    names = {_dense_pairs: "dense", _shift_invert_pairs: "shift-invert", _lobpcg_pairs: "lobpcg"}
    vals = vecs = None
    iters = 0
    used = method
    for solver in order:
        try:
            vals, vecs, iters = solver(P, k)
            used = names[solver]
            break
        except Exception as exc:  # singular factorization, breakdown
            tried.append(f"{names[solver]}: {exc}")
    if vals is None:
        return SpectralReport(
            eigenvalues=np.array([]),
            morse_index=0,
            nullity=0,
            extended_signature=0,
            zero_threshold=tau,
            solver="; ".join(tried),
            iterations=0,
            residuals=np.array([]),
            valid=False,
        )

    W = sp.diags(P.mass_diagonal)
    res = _residuals(P.stiffness, W, vals, vecs)
    scale = np.maximum(1.0, np.abs(vals))
    valid = bool(np.all(res <= 1e-8 * scale))
    morse, null, gap_b, gap_a = _counts(vals, tau)
    return SpectralReport(
        eigenvalues=vals,
        morse_index=morse,
        nullity=null,
        extended_signature=morse + null,
        zero_threshold=tau,
        solver=used,
        iterations=iters,
        residuals=res,
        valid=valid,
        gap_below=gap_b,
        gap_above=gap_a,
    )


@dataclass
class InertiaReport:
    first: SpectralReport
    second: SpectralReport
    consistent: bool

    def summary(self):
        return (
            f"consistent={self.consistent} "
            f"first=({self.first.morse_index},{self.first.nullity}) "
            f"second=({self.second.morse_index},{self.second.nullity})"
        )


def inertia_invariance_check(grid, A, weight1, weight2, k=24, tau=None, region_mask=None):
    """Same K, two mass weights: index and nullity must agree.

    Count mismatches are flagged (consistent=False) with both spectra
    attached, never raised.
    """
    reports = []
    for w in (weight1, weight2):
        P = secondvar.assemble(grid, A, weight=w, region_mask=region_mask)
        reports.append(smallest_eigs(P, k, tau=tau))
    consistent = (
        reports[0].valid
        and reports[1].valid
        and reports[0].morse_index == reports[1].morse_index
        and reports[0].nullity == reports[1].nullity
    )
    return InertiaReport(first=reports[0], second=reports[1], consistent=consistent)


def extended_signature(grid, A, weight=None, k=40, tau=None, region_mask=None, method="auto"):
    """Index + nullity of the augmented form's pencil."""
    P = secondvar.assemble(
        grid, A, weight=weight, include_divergence=True, region_mask=region_mask
    )
    return smallest_eigs(P, min(k, P.dof_map.size), tau=tau, method=method)

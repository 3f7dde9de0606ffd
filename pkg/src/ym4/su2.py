"""The compact Lie algebra su(2) in coefficient form.

Algebra elements are real arrays whose last axis has length 3, holding
coefficients in the basis ``e_i = -(i/2) * sigma_i`` (anti-Hermitian,
traceless).  All operations broadcast over leading axes, so a whole
lattice field of algebra values is just an array of shape ``(..., 3)``.

Group elements are complex arrays of shape ``(..., 2, 2)`` lying in SU(2).

The invariant inner product is ``<X, Y> = -tr(XY)``, which on coefficients
is ``0.5 * sum_i x_i y_i``; any positive multiple would only rescale
energies, this one keeps the quadratic-form identities exact.
"""

import numpy as np

# Basis matrices e_i = -(i/2) sigma_i, used wherever an explicit 2x2
# representation is required (exponential, gauge action).
_E = np.array(
    [
        [[0.0, -0.5j], [-0.5j, 0.0]],
        [[0.0, -0.5], [0.5, 0.0]],
        [[-0.5j, 0.0], [0.0, 0.5j]],
    ],
    dtype=complex,
)


def bracket(x, y):
    """Lie bracket [X, Y] on coefficient triples.

    In this basis the structure constants are the Levi-Civita symbol,
    so the bracket is the ordinary vector cross product.
    """
    return np.cross(x, y)


def inner(x, y):
    """Invariant inner product <X, Y> = -tr(XY) = 0.5 * x . y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * np.einsum("...i,...i->...", x, y)


def norm(x):
    """Pointwise norm sqrt(<X, X>)."""
    return np.sqrt(inner(x, x))


def to_matrix(x):
    """Coefficients (..., 3) to anti-Hermitian traceless matrices (..., 2, 2)."""
    x = np.asarray(x, dtype=float)
    return np.einsum("...i,ijk->...jk", x, _E)


def from_matrix(m):
    """Matrices (..., 2, 2) back to coefficients; inverse of to_matrix.

    x_j = <M, e_j> / <e_j, e_j> = -2 tr(M e_j).
    """
    m = np.asarray(m, dtype=complex)
    coeffs = -2.0 * np.einsum("...jk,ikj->...i", m, _E)
    return np.real(coeffs)


def exp(x):
    """Exponential of an algebra element, as an SU(2) matrix.

    Closed form: with theta = |x|/2 (coefficient-vector length halved),
    exp(X) = cos(theta) I + (sin(theta)/theta) X.  The sinc factor is
    evaluated stably through ``np.sinc`` so x = 0 gives the identity.
    """
    x = np.asarray(x, dtype=float)
    theta = 0.5 * np.sqrt(np.einsum("...i,...i->...", x, x))
    c = np.cos(theta)
    s = np.sinc(theta / np.pi)  # sin(theta)/theta, exact at 0
    eye = np.eye(2, dtype=complex)
    return c[..., None, None] * eye + s[..., None, None] * to_matrix(x)


def quat_to_algebra(q):
    """Imaginary part of a quaternion as algebra coefficients.

    Quaternions are arrays (..., 4) ordered (w, x, y, z); the map sends
    i, j, k to e_1, e_2, e_3 and discards the real part.
    """
    q = np.asarray(q, dtype=float)
    return q[..., 1:].copy()


def quat_mul(p, q):
    """Hamilton product of quaternion arrays (..., 4)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    w = p[..., 0] * q[..., 0] - np.einsum("...i,...i->...", p[..., 1:], q[..., 1:])
    v = (
        p[..., 0:1] * q[..., 1:]
        + q[..., 0:1] * p[..., 1:]
        + np.cross(p[..., 1:], q[..., 1:])
    )
    return np.concatenate([w[..., None], v], axis=-1)


def quat_conj(q):
    """Quaternion conjugate: negate the imaginary part."""
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] *= -1.0
    return out

"""Reference tensor-product Lagrange elements on [-1, 1]^d and Gauss rules."""

from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def lagrange_1d(order: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the 1D Lagrange basis on equispaced nodes.

    Returns arrays of shape ``(len(xi), order + 1)``; node 0 sits at -1.
    """
    xi = np.asarray(xi, dtype=float)
    if order == 1:
        N = np.stack([(1 - xi) / 2, (1 + xi) / 2], axis=-1)
        dN = np.stack([np.full_like(xi, -0.5), np.full_like(xi, 0.5)], axis=-1)
    elif order == 2:
        N = np.stack([xi * (xi - 1) / 2, 1 - xi**2, xi * (xi + 1) / 2], axis=-1)
        dN = np.stack([xi - 0.5, -2 * xi, xi + 0.5], axis=-1)
    else:
        raise ValueError(f"unsupported order {order}")
    return N, dN


def local_multi_indices(order: int, dim: int) -> list[tuple[int, ...]]:
    """Local node multi-indices, first axis fastest."""
    return [tuple(reversed(t)) for t in product(range(order + 1), repeat=dim)]


def tensor_basis(order: int, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product basis at reference ``points`` of shape (npts, d).

    Returns values ``(npts, nloc)`` and reference gradients ``(npts, nloc, d)``.
    """
    points = np.atleast_2d(points)
    npts, dim = points.shape
    one_d = [lagrange_1d(order, points[:, k]) for k in range(dim)]
    idx = local_multi_indices(order, dim)
    N = np.ones((npts, len(idx)))
    dN = np.ones((npts, len(idx), dim))
    for a, mi in enumerate(idx):
        for k in range(dim):
            v, dv = one_d[k][0][:, mi[k]], one_d[k][1][:, mi[k]]
            N[:, a] *= v
            for m in range(dim):
                dN[:, a, m] *= dv if m == k else v
    return N, dN


@lru_cache(maxsize=None)
def volume_rule(dim: int, n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(n)
    pts = np.array([tuple(reversed(t)) for t in product(x, repeat=dim)])
    wts = np.array([np.prod(t) for t in product(w, repeat=dim)])
    return pts, wts


def face_points(dim: int, face: int, pts_lower: np.ndarray) -> np.ndarray:
    """Embed a (dim-1)-dimensional rule on face ``face = 2 * axis + side``."""
    axis, side = divmod(face, 2)
    pts_lower = np.atleast_2d(pts_lower)
    out = np.empty((pts_lower.shape[0], dim))
    free = [k for k in range(dim) if k != axis]
    for j, k in enumerate(free):
        out[:, k] = pts_lower[:, j]
    out[:, axis] = -1.0 if side == 0 else 1.0
    return out

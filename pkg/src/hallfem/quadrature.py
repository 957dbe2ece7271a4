"""Collapsed (conical product) Gauss rules on reference simplices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil, factorial

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    points: np.ndarray  # barycentric, (nq, dim+1)
    weights: np.ndarray  # sum to the reference simplex measure 1/dim!
    degree: int

    @property
    def num_points(self) -> int:
        return len(self.weights)


def _gauss_jacobi_unit(k: int, alpha: float):
    """k-point rule on [0,1] for the weight (1-t)^alpha."""
    x, w = roots_jacobi(k, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> QuadratureRule:
    """Stroud conical product rule, exact for polynomials of total ``degree``."""
    k = max(1, ceil((degree + 1) / 2))
    if dim == 1:
        t, w = _gauss_jacobi_unit(k, 0.0)
        pts = np.stack([1.0 - t, t], axis=1)
        return QuadratureRule(1, pts, w, degree)
    if dim == 2:
        a, wa = _gauss_jacobi_unit(k, 1.0)
        b, wb = _gauss_jacobi_unit(k, 0.0)
        A, B = np.meshgrid(a, b, indexing="ij")
        x = A
        y = B * (1.0 - A)
        w = np.outer(wa, wb).ravel()
        xy = np.stack([x.ravel(), y.ravel()], axis=1)
    elif dim == 3:
        a, wa = _gauss_jacobi_unit(k, 2.0)
        b, wb = _gauss_jacobi_unit(k, 1.0)
        c, wc = _gauss_jacobi_unit(k, 0.0)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        x = A
        y = B * (1.0 - A)
        z = C * (1.0 - A) * (1.0 - B)
        w = np.einsum("i,j,k->ijk", wa, wb, wc).ravel()
        xy = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    else:
        raise ValueError(f"unsupported dimension {dim}")
    bary = np.concatenate([1.0 - xy.sum(axis=1, keepdims=True), xy], axis=1)
    return QuadratureRule(dim, bary, w, degree)


def monomial_integral(exponents) -> float:
    """Exact integral of prod x_i^a_i over the reference simplex."""
    num = np.prod([factorial(a) for a in exponents])
    return num / factorial(sum(exponents) + len(exponents))

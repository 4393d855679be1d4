"""Tensor-product Gauss-Legendre quadrature over a square in the complex plane.

Used as the independent check for every closed-form phase-space integral.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import QuadratureError

__all__ = ["quad2d", "gl_grid"]


@lru_cache(maxsize=16)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_grid(radius: float, nodes: int, center: complex = 0j):
    """Complex nodes and weights of an ``nodes x nodes`` Gauss-Legendre rule
    on the square ``center + [-radius, radius]^2``."""
    x, w = _leggauss(nodes)
    xs = radius * x
    ws = radius * w
    re, im = np.meshgrid(xs + center.real, xs + center.imag, indexing="ij")
    return re + 1j * im, np.outer(ws, ws)


def _apply(f, radius, nodes, center):
    g, wt = gl_grid(radius, nodes, center)
    vals = np.asarray(f(g))
    # einsum keeps a fixed reduction order
    return complex(np.einsum("ij,ij->", wt, vals))


def quad2d(f, radius: float = 8.0, tol: float = 1e-10, nodes: int = 200,
           max_nodes: int = 1600, center: complex = 0j) -> complex:
    """Integrate ``f(gamma) d^2gamma`` over the square of half-width ``radius``.

    ``f`` must accept an array of complex points. The rule is refined
    (node count times 1.5) until two successive estimates agree to ``tol``.
    The box radius must be large enough that the integrand's tail beyond it
    is below ``tol``; that part of the error is not estimated.

    Raises:
        QuadratureError: if ``max_nodes`` is reached without convergence.
    """
    prev = _apply(f, radius, nodes, center)
    n = nodes
    err = np.inf
    while n < max_nodes:
        n = int(n * 1.5)
        cur = _apply(f, radius, n, center)
        err = abs(cur - prev)
        if err <= tol:
            return cur
        prev = cur
    raise QuadratureError(f"quad2d did not converge with {n} nodes per axis", err)

"""Legendre-Gauss collocation coefficients on the unit interval."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def legendre_gauss(degree: int = 3):
    """Collocation data for ``degree`` Legendre-Gauss points.

    Returns ``(tau, D, cont, quad)`` where ``tau`` holds the interpolation
    points ``[0, tau_1 .. tau_d]``, ``D[i, j]`` is the derivative of the
    ``j``-th Lagrange basis polynomial at ``tau_{i+1}`` (shape ``(d, d+1)``),
    ``cont[j]`` is the basis polynomial value at 1 and ``quad`` the Gauss
    quadrature weights on [0, 1].
    """
    roots, weights = np.polynomial.legendre.leggauss(degree)
    tau_c = 0.5 * (roots + 1.0)
    quad = 0.5 * weights
    tau = np.concatenate([[0.0], tau_c])
    basis = [lagrange_basis(tau, j) for j in range(degree + 1)]
    D = np.array([[np.polyval(np.polyder(b), t) for b in basis] for t in tau_c])
    cont = np.array([np.polyval(b, 1.0) for b in basis])
    return tau, D, cont, quad


def lagrange_basis(points, j) -> np.ndarray:
    """Polynomial coefficients (highest power first) of the j-th Lagrange basis."""
    others = np.delete(np.asarray(points, float), j)
    coeffs = np.poly(others)
    return coeffs / np.polyval(coeffs, points[j])


def basis_values(tau_eval, degree: int = 3):
    """Basis values and derivatives at ``tau_eval``; shapes ``(len, d+1)``."""
    tau, *_ = legendre_gauss(degree)
    tau_eval = np.atleast_1d(np.asarray(tau_eval, float))
    L = np.empty((len(tau_eval), degree + 1))
    dL = np.empty_like(L)
    for j in range(degree + 1):
        b = lagrange_basis(tau, j)
        L[:, j] = np.polyval(b, tau_eval)
        dL[:, j] = np.polyval(np.polyder(b), tau_eval)
    return L, dL

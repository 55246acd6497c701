"""Riemann theta function with ellipsoid truncation and Gaussian recentering.

``theta(z) = sum_{m in Z^n} exp(2 pi i <m, z> + pi i <m, tau m>)``.

The summand modulus is ``exp(-pi |L^T (m + c)|^2 + pi c^T Y c)`` with
``Y = Im tau = L L^T`` and ``c = Y^{-1} Im z``, so the sum is taken over
integer points near ``-c`` inside an ellipsoid whose radius follows from a
Gaussian tail bound.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import gamma, gammaincc


class ThetaError(ValueError):
    """Invalid period matrix or insufficient truncation radius."""


def _tail_bound(n: int, R: float, rho: float) -> float:
    """Bound on ``sum exp(-|v|^2)`` over lattice points with ``|v| > R``.

    Lattice-sum estimate in the form used for Riemann theta truncation:
    ``(n/2) (2/rho)^n Gamma(n/2, (R - rho/2)^2)``.
    """
    if R <= rho / 2:
        return math.inf
    x = (R - rho / 2) ** 2
    return 0.5 * n * (2.0 / rho) ** n * gamma(n / 2) * gammaincc(n / 2, x)


class ThetaContext:
    """Precomputed lattice data for a fixed ``tau``."""

    def __init__(self, tau, tol: float = 1e-12, sym_tol: float = 1e-9, max_points: int = 2_000_000):
        tau = np.atleast_2d(np.asarray(tau, dtype=complex))
        if tau.shape[0] != tau.shape[1]:
            raise ThetaError("tau must be square")
        scale = max(1.0, float(np.max(np.abs(tau))))
        if np.max(np.abs(tau - tau.T)) > sym_tol * scale:
            raise ThetaError("tau must be symmetric")
        tau = 0.5 * (tau + tau.T)
        Y = tau.imag
        try:
            L = np.linalg.cholesky(Y)
        except np.linalg.LinAlgError as exc:
            raise ThetaError("Im tau must be positive definite") from exc
        self.tau = tau
        self.n = tau.shape[0]
        self.Y = Y
        self.Yinv = np.linalg.inv(Y)
        self.L = L
        self.tol = tol
        # shortest lattice vector of sqrt(pi) L^T Z^n by small enumeration
        Lt = math.sqrt(math.pi) * L.T
        rho = math.inf
        for k in itertools.product(range(-3, 4), repeat=self.n):
            if any(k):
                rho = min(rho, float(np.linalg.norm(Lt @ np.array(k))))
        self.rho = rho
        R = max(1.0, rho)
        while _tail_bound(self.n, R, rho) > tol:
            R *= 1.1
            if R > 1e3:
                raise ThetaError("could not reach the requested tail tolerance")
        self.radius = R / math.sqrt(math.pi)
        self.tail_bound = _tail_bound(self.n, R, rho)
        self.points = self._enumerate(max_points)

    def _enumerate(self, max_points: int) -> np.ndarray:
        # ellipsoid |L^T k| <= radius + |L^T| sqrt(n)/2 covers every shift in [-1/2, 1/2]^n
        Lt = self.L.T
        pad = np.linalg.norm(Lt, 2) * math.sqrt(self.n) / 2
        Rb = self.radius + pad
        # bounding box from the inverse quadratic form
        bounds = [int(math.ceil(Rb * math.sqrt(self.Yinv[i, i]))) for i in range(self.n)]
        total = np.prod([2 * b + 1 for b in bounds])
        if total > max_points:
            raise ThetaError(
                f"truncation radius {self.radius:.3g} needs {total} lattice points; "
                "Im tau is too small for the requested tolerance"
            )
        grids = np.meshgrid(*[np.arange(-b, b + 1) for b in bounds], indexing="ij")
        K = np.stack([g.ravel() for g in grids], axis=1).astype(float)
        norms = np.linalg.norm(K @ self.L, axis=1)
        return K[norms <= Rb]

    def _shifted_points(self, z: np.ndarray) -> np.ndarray:
        c = z.imag @ self.Yinv.T
        m0 = np.round(-c)
        return self.points[None, :, :] + m0[:, None, :]

    def _exponents(self, z: np.ndarray):
        m = self._shifted_points(z)
        lin = 2j * np.pi * np.einsum("bkn,bn->bk", m, z)
        quad = 1j * np.pi * np.einsum("bkn,nl,bkl->bk", m, self.tau, m)
        return m, lin + quad


def _as_batch(z, n: int):
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if z.shape[1] != n:
        raise ThetaError(f"argument must have length {n}")
    return z, single


def theta(z, ctx: ThetaContext):
    """Theta function at ``z`` (shape ``(n,)`` or ``(N, n)``)."""
    zb, single = _as_batch(z, ctx.n)
    _, ex = ctx._exponents(zb)
    top = ex.real.max(axis=1, keepdims=True)
    vals = np.exp(top[:, 0]) * np.exp(ex - top).sum(axis=1)
    return complex(vals[0]) if single else vals


def theta_dir_deriv(z, d, ctx: ThetaContext):
    """``sum_j d_j d theta / d z_j`` by termwise differentiation."""
    zb, single = _as_batch(z, ctx.n)
    d = np.asarray(d, dtype=complex)
    m, ex = ctx._exponents(zb)
    top = ex.real.max(axis=1, keepdims=True)
    fac = 2j * np.pi * (m @ d)
    vals = np.exp(top[:, 0]) * (fac * np.exp(ex - top)).sum(axis=1)
    return complex(vals[0]) if single else vals


def theta_brute(z, tau, bound: int = 10) -> complex:
    """Plain box sum over ``|m_i| <= bound``; an oracle for tests."""
    tau = np.atleast_2d(np.asarray(tau, dtype=complex))
    z = np.asarray(z, dtype=complex)
    n = tau.shape[0]
    total = 0j
    for m in itertools.product(range(-bound, bound + 1), repeat=n):
        m = np.array(m, dtype=float)
        total += np.exp(2j * np.pi * (m @ z) + 1j * np.pi * (m @ tau @ m))
    return complex(total)

"""Theta-function reconstruction of ``w, u, v`` and its validation.

Conventions
-----------
The divisor data follow the stored lifts of :class:`EllipticState`: the zero
points of ``phi`` are ``nu_hat_k = (nu_k, G(nu_k))`` and the pole points are
``mu_hat_k = (mu_k, -G(mu_k))``.  With the base point at a branch point,

``rho1 = sum_{k<=n} A(mu_hat_k) = -sum_{k<=n} A(mu_k, G(mu_k))``,
``rho2 = sum_{k<=n} A(nu_hat_k)``,

and the ``(n+1)``-th pair enters through the third-kind differential with
residue ``+1`` at ``nu_hat_{n+1}`` and ``-1`` at ``mu_hat_{n+1}``.  Only the
difference ``E = omega0^{inf+} - omega0^{inf-}`` of its normalization
constants enters ``w``.  Along a grid it is updated from the reciprocity law
``E = int_{mu_hat}^{nu_hat} Omega + const``, where ``Omega`` is the
normalized third-kind differential with poles at the two infinities; its
integrals are carried by the Dubrovin integrator.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import curve as cv
from . import dubrovin as db
from .theta import ThetaContext, theta, theta_dir_deriv

__all__ = [
    "ReconstructionError", "DivisorData", "FieldGrid", "ThetaFields", "ResidualReport",
    "omega_infinity_differential", "infinity_path_class", "second_kind_infinity_differential", "divisor_data", "lattice_shift",
    "phi_eval", "phi_forms", "w_from_phi", "phi_asymptotics_check",
    "reconstruct_w", "reconstruct_u_v", "cumulative_integral", "reconstruct_grid",
    "pde_residual", "linear_rho", "dubrovin_rho", "constraint_residual", "manifest_json",
]


class ReconstructionError(RuntimeError):
    """A reconstruction formula degenerates at some node."""


# ---------------------------------------------------------------------------
# differentials tied to the two infinities
# ---------------------------------------------------------------------------

def omega_infinity_differential(pd: cv.PeriodData) -> cv.Differential:
    """``Omega = (lambda**n + sum_l e_l lambda**(l-1)) dlambda / y`` with zero a-periods.

    Its residues are ``+1`` at ``P_inf+`` and ``-1`` at ``P_inf-``.
    """
    n = pd.n
    top = np.zeros((1, n + 1), dtype=complex)
    top[0, n] = 1.0
    a = pd.curve.periods(cv.Differential(top), "a")[0]
    e = -np.linalg.solve(pd.A.T, a)
    D = np.concatenate([e, [1.0]])[None, :]
    return cv.Differential(D)


def infinity_path_class(pd: cv.PeriodData, Omega: cv.Differential | None = None) -> np.ndarray:
    """b-cycle winding ``q`` of the path from ``P_inf-`` to ``P_inf+`` used by the Abel map.

    ``A(inf+) - A(inf-) - b(Omega)/(2 pi i)`` is the lattice vector
    ``p + tau q``; then ``d E / d P = Omega(P) + 2 pi i q . omega(P)`` for the
    third-kind constants ``E`` of a moving pole ``P``.
    """
    Omega = omega_infinity_differential(pd) if Omega is None else Omega
    s = (cv.abel_map_infinity(cv.INF_PLUS, pd) - cv.abel_map_infinity(cv.INF_MINUS, pd)
         - pd.curve.periods(Omega, "b")[0] / (2j * np.pi))
    q = np.linalg.solve(pd.tau.imag, s.imag)
    if pd.lattice_distance(s) > 1e-8 or np.max(np.abs(q - np.round(q))) > 1e-6:
        raise ReconstructionError("reciprocity check failed for the differential at infinity")
    return np.round(q)


def second_kind_infinity_differential(pd: cv.PeriodData) -> cv.Differential:
    """``Psi = (lambda**(n+1) - s1/2 lambda**n + sum_l f_l lambda**(l-1)) dlambda / y``.

    ``s1`` is the sum of the branch points, so ``Psi`` has double poles at
    both infinities and no residues; the ``f_l`` make its a-periods vanish.
    Along moving poles the last third-kind constant obeys
    ``d gamma_n = (Psi(nu_hat) - Psi(mu_hat)) / 2``.
    """
    n = pd.n
    top = np.zeros((1, n + 2), dtype=complex)
    top[0, n + 1] = 1.0
    top[0, n] = -0.5 * sum(pd.spec.branch_points)
    a = pd.curve.periods(cv.Differential(top), "a")[0]
    f = -np.linalg.solve(pd.A.T, a)
    return cv.Differential(np.concatenate([f, top[0, n:]])[None, :])


# ---------------------------------------------------------------------------
# divisor data
# ---------------------------------------------------------------------------

@dataclass
class DivisorData:
    """Theta-side data of one state.

    ``rho1``/``rho2`` are the ``n``-point sums for the pole and zero divisors
    (``rho2`` already shifted by ``-tau @ shift``), ``E`` is
    ``omega0^{inf+} - omega0^{inf-}`` and ``gamma_n`` the last third-kind
    constant.
    """

    mu_hat: list
    nu_hat: list
    rho1: np.ndarray
    rho2: np.ndarray
    K: np.ndarray
    E: complex
    gamma_n: complex
    third_kind: cv.ThirdKindData | None = None
    shift: np.ndarray | None = None


def _third_kind_b_periods(tk: cv.ThirdKindData, pd: cv.PeriodData) -> np.ndarray:
    return pd.curve.periods(tk.differential(), "b")[0]


def lattice_shift(rho1, rho2, tk: cv.ThirdKindData, pd: cv.PeriodData, tol: float = 1e-6) -> np.ndarray:
    """Integer vector ``M`` making ``rho2 - tau M - rho1 + b(omega3)/(2 pi i)`` an integer vector.

    This ties the homology classes of the paths used for ``rho`` and for the
    third-kind normalization together; ``phi`` is single valued only then.
    """
    s = np.asarray(rho2) - np.asarray(rho1) + _third_kind_b_periods(tk, pd) / (2j * np.pi)
    M = np.round(np.linalg.solve(pd.tau.imag, s.imag))
    r = s - pd.tau @ M
    if np.max(np.abs(r - np.round(r.real))) > tol:
        raise ReconstructionError(
            f"divisor sums are not lattice-consistent with the third-kind periods (defect {np.max(np.abs(r - np.round(r.real))):.3e})"
        )
    return M


def divisor_data(state: db.EllipticState, pd: cv.PeriodData, K: np.ndarray | None = None,
                 shift: np.ndarray | None = None) -> DivisorData:
    """Divisor data by direct Abel maps and a fresh third-kind differential."""
    curve = pd.curve
    n = pd.n
    K = cv.riemann_constants(pd) if K is None else K
    mh, nh = state.mu_hat(curve), state.nu_hat(curve)
    rho1 = sum(cv.abel_map(p, pd) for p in mh[:n])
    rho2 = sum(cv.abel_map(p, pd) for p in nh[:n])
    tk = cv.third_kind(nh[n], mh[n], pd)
    if shift is None:
        shift = lattice_shift(rho1, rho2, tk, pd)
    rho2 = rho2 - pd.tau @ shift
    return DivisorData(mh, nh, rho1, rho2, K, tk.omega0_inf_plus - tk.omega0_inf_minus,
                       complex(tk.d[n - 1]), tk, shift)


# ---------------------------------------------------------------------------
# theta formulas
# ---------------------------------------------------------------------------

class ThetaFields:
    """Evaluates the theta representation of ``w`` and of ``(ln u/sqrt(1-w^2))_x``."""

    def __init__(self, pd: cv.PeriodData, K: np.ndarray | None = None, tol: float = 1e-15,
                 pole_tol: float = 1e-12):
        self.pd = pd
        self.K = cv.riemann_constants(pd) if K is None else np.asarray(K, dtype=complex)
        self.ctx = ThetaContext(pd.tau, tol=tol)
        self.A_plus = cv.abel_map_infinity(cv.INF_PLUS, pd)
        self.A_minus = cv.abel_map_infinity(cv.INF_MINUS, pd)
        self.Cn = pd.C_column(pd.n)
        self.pole_tol = pole_tol

    def _thetas(self, rho1, rho2):
        rho1 = np.atleast_2d(rho1)
        rho2 = np.atleast_2d(rho2)
        out = {}
        for key, A in (("+", self.A_plus), ("-", self.A_minus)):
            z1 = self.K - A + rho1
            z2 = self.K - A + rho2
            out["mu" + key] = (theta(z1, self.ctx), theta_dir_deriv(z1, self.Cn, self.ctx))
            out["nu" + key] = (theta(z2, self.ctx), theta_dir_deriv(z2, self.Cn, self.ctx))
        return out

    def w(self, rho1, rho2, E) -> np.ndarray:
        """``w`` from the ratio of the two exponential-theta products."""
        th = self._thetas(rho1, rho2)
        E = np.atleast_1d(np.asarray(E, dtype=complex))
        # divide through by exp(omega0^{inf-}) so only E enters
        p = np.exp(E) * th["nu+"][0] * th["mu-"][0]
        q = th["mu+"][0] * th["nu-"][0]
        den = p - q
        scale = np.maximum(np.abs(p), np.abs(q))
        bad = np.abs(den) <= self.pole_tol * scale
        if np.any(bad):
            raise ReconstructionError(f"pole of w at node {int(np.argmax(bad))}")
        return (p + q) / den

    def log_derivative(self, rho1, rho2, gamma_n) -> np.ndarray:
        """``u_x/u + w w_x/(1-w^2)`` from the theta directional derivatives."""
        th = self._thetas(rho1, rho2)
        gamma_n = np.atleast_1d(np.asarray(gamma_n, dtype=complex))

        def lg(key):
            val, der = th[key]
            return der / val

        return lg("nu-") + lg("nu+") - lg("mu-") - lg("mu+") - 2.0 * gamma_n

    def nonspecial_residual(self, rho, probes: Sequence[cv.SurfacePoint] | None = None) -> float:
        """``min |theta(K - A(P) + rho)| / typical`` over probe points ``P``.

        Values near zero mean the theta function vanishes identically in
        ``P``, i.e. the divisor is special.
        """
        probes = cv.default_probes(self.pd) + [cv.SurfacePoint(p.lam, -p.sheet) for p in cv.default_probes(self.pd)] \
            if probes is None else list(probes)
        z = np.array([self.K - cv.abel_map(p, self.pd) + rho for p in probes])
        vals = np.abs(theta(z, self.ctx))
        # typical size of theta at the same imaginary parts
        typical = np.abs(theta(z.real * 0 + 1j * z.imag, self.ctx))
        shifted = np.abs(theta(z + 0.25, self.ctx))
        ref = np.maximum(typical, shifted)
        return float(np.max(vals / np.maximum(ref, 1e-300)))


def reconstruct_w(tf: ThetaFields, dd: DivisorData | None = None, rho1=None, rho2=None, E=None) -> np.ndarray:
    """``w`` from a :class:`DivisorData` or from arrays of ``rho1, rho2, E``."""
    if dd is not None:
        rho1, rho2, E = dd.rho1, dd.rho2, dd.E
    return tf.w(rho1, rho2, E)


_LAGRANGE_CACHE: dict = {}


def _interval_weights(order: int) -> np.ndarray:
    """Weights integrating a local interpolant over each unit interval of a stencil.

    Row ``j`` holds weights over nodes ``0..order`` for the interval ``[j, j+1]``.
    """
    if order not in _LAGRANGE_CACHE:
        nodes = np.arange(order + 1, dtype=float)
        V = np.vander(nodes, order + 1, increasing=True)
        W = np.empty((order, order + 1))
        for j in range(order):
            # integral of monomials s**p over [j, j+1]
            mom = np.array([((j + 1) ** (p + 1) - j ** (p + 1)) / (p + 1) for p in range(order + 1)])
            W[j] = np.linalg.solve(V.T, mom)
        _LAGRANGE_CACHE[order] = W
    return _LAGRANGE_CACHE[order]


def cumulative_integral(xs: np.ndarray, f: np.ndarray, order: int = 7) -> np.ndarray:
    """``int_{xs[0]}^{xs[i]} f`` on a uniform grid with local degree-``order`` interpolation."""
    xs = np.asarray(xs, dtype=float)
    f = np.asarray(f)
    N = xs.size
    if N < 2:
        return np.zeros_like(f, dtype=complex)
    h = xs[1] - xs[0]
    if np.max(np.abs(np.diff(xs) - h)) > 1e-9 * abs(h):
        raise ValueError("cumulative_integral needs a uniform grid")
    order = min(order, N - 1)
    W = _interval_weights(order)
    half = order // 2
    pieces = np.empty(N - 1, dtype=complex)
    for i in range(N - 1):
        start = min(max(i - half, 0), N - 1 - order)
        pieces[i] = h * (W[i - start] @ f[start:start + order + 1])
    return np.concatenate([[0.0], np.cumsum(pieces)])


def _continuous_log(z: np.ndarray) -> np.ndarray:
    return np.log(np.abs(z)) + 1j * np.unwrap(np.angle(z))


def reconstruct_u_v(xs: np.ndarray, w: np.ndarray, log_derivative: np.ndarray, u_anchor: complex,
                    order: int = 7, degenerate_tol: float = 1e-12):
    """``u`` along one ``x`` slice from the log-derivative, anchored at ``xs[0]``; ``v = (1-w^2)/u``."""
    w = np.asarray(w, dtype=complex)
    one_minus = 1.0 - w * w
    if np.any(np.abs(one_minus) <= degenerate_tol):
        raise ReconstructionError("1 - w^2 vanishes; u and v cannot be separated")
    Q = cumulative_integral(xs, log_derivative, order)
    L = _continuous_log(one_minus)
    u = complex(u_anchor) * np.exp(Q + 0.5 * (L - L[0]))
    v = one_minus / u
    return u, v


# ---------------------------------------------------------------------------
# phi
# ---------------------------------------------------------------------------

def phi_forms(P: cv.SurfacePoint, state: db.EllipticState, curve: cv.Curve) -> tuple:
    """``((y - G)/F, H/(y + G))`` at ``P``."""
    y = curve.sqrtR(P) if np.isfinite(P.lam) else None
    lam = P.lam
    G = np.polyval(state.G_poly(), lam)
    F = np.polyval(state.F_poly(), lam)
    H = np.polyval(state.H_poly(), lam)
    return (y - G) / F, H / (y + G)


def phi_eval(P: cv.SurfacePoint, state: db.EllipticState, curve: cv.Curve, cond_tol: float = 1e-10) -> complex:
    """Meromorphic function ``phi`` choosing the better-conditioned quotient.

    ``(y - G)/F`` is used unless ``F`` is small relative to ``y + G``, in
    which case ``H/(y + G)`` is used.
    """
    lam = P.lam
    y = curve.sqrtR(P)
    G = complex(np.polyval(state.G_poly(), lam))
    F = complex(np.polyval(state.F_poly(), lam))
    H = complex(np.polyval(state.H_poly(), lam))
    scale = max(abs(y), abs(G), 1.0)
    if abs(F) <= cond_tol * scale and abs(y + G) <= cond_tol * scale:
        raise ReconstructionError("both quotient forms of phi are ill-conditioned here")
    if abs(F) * max(abs(H), 1e-300) >= abs(y + G) * max(abs(y - G), 1e-300) * 1e-3 and abs(F) > cond_tol * scale:
        return (y - G) / F
    return H / (y + G)


def _phi_at_large(state: db.EllipticState, curve: cv.Curve, sheet: int, radii, angle: float = 0.3):
    """``phi`` at ``lambda = r e^{i angle}`` on ``sheet`` for each ``r`` (numerically stable form)."""
    out = []
    G = state.G_poly()
    F = state.F_poly()
    H = state.H_poly()
    for r in radii:
        lam = r * np.exp(1j * angle)
        y = sheet * complex(curve.Y(np.array([lam]))[0])
        g = np.polyval(G, lam)
        # pick whichever of y - G and y + G is not a cancellation
        if abs(y + g) >= abs(y - g):
            out.append(np.polyval(H, lam) / (y + g))
        else:
            out.append((y - g) / np.polyval(F, lam))
    return np.array(out)


def phi_asymptotics_check(state: db.EllipticState, curve: cv.Curve, u_x: complex | None = None,
                          w_x: complex | None = None, u: complex | None = None, w: complex | None = None,
                          radii: Sequence[float] = (1e3, 2e3, 4e3, 8e3, 1.6e4), angle: float = 0.3,
                          cond_max: float = 1e8) -> dict:
    """Fit ``phi(zeta) = a + b zeta + c zeta**2`` near each infinity and compare.

    Leading terms are compared with ``-(1+w)/u`` at ``P_inf+`` and
    ``(1-w)/u`` at ``P_inf-``; when ``u_x`` and ``w_x`` are given, the
    ``zeta`` coefficients are compared with ``((1+w)u_x - u w_x)/(2u^2)``
    and ``((1-w)u_x + u w_x)/(2u^2)``.
    """
    u = state.u if u is None else complex(u)
    w = state.w if w is None else complex(w)
    radii = np.asarray(radii, dtype=float)
    zeta = 1.0 / (radii * np.exp(1j * angle))
    V = np.stack([np.ones_like(zeta), zeta, zeta ** 2], axis=1)
    Vs = V / np.abs(V).max(axis=0)
    cond = float(np.linalg.cond(Vs))
    if cond > cond_max:
        raise ReconstructionError(f"asymptotic fit is ill-conditioned (cond {cond:.3e})")
    report = {"cond": cond}
    expected_a = {"+": -(1 + w) / u, "-": (1 - w) / u}
    expected_b = None
    if u_x is not None and w_x is not None:
        expected_b = {"+": ((1 + w) * u_x - u * w_x) / (2 * u * u),
                      "-": ((1 - w) * u_x + u * w_x) / (2 * u * u)}
    for key, sign in (("+", cv.INF_PLUS), ("-", cv.INF_MINUS)):
        vals = _phi_at_large(state, curve, cv.infinity_sheet(sign), radii, angle)
        coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
        a, b = complex(coef[0]), complex(coef[1])
        report[f"a{key}"] = a
        report[f"b{key}"] = b
        report[f"a{key}_expected"] = complex(expected_a[key])
        report[f"a{key}_relerr"] = abs(a - expected_a[key]) / max(abs(expected_a[key]), 1e-300)
        if expected_b is not None:
            report[f"b{key}_expected"] = complex(expected_b[key])
            report[f"b{key}_relerr"] = abs(b - expected_b[key]) / max(abs(expected_b[key]), 1e-300)
    report["product"] = report["a+"] * report["a-"]
    report["product_expected"] = -(1 - w * w) / (u * u)
    return report


def w_from_phi(state: db.EllipticState, curve: cv.Curve, radii=(1e3, 2e3, 4e3, 8e3, 1.6e4)) -> complex:
    """``w = -(a_- + a_+)/(a_- - a_+)`` from the fitted leading terms of ``phi``."""
    rep = phi_asymptotics_check(state, curve, radii=radii)
    ap, am = rep["a+"], rep["a-"]
    return -(am + ap) / (am - ap)


# ---------------------------------------------------------------------------
# grid reconstruction
# ---------------------------------------------------------------------------

@dataclass
class ResidualReport:
    """PDE residuals at interior nodes."""

    m: int
    res_u: np.ndarray
    res_v: np.ndarray

    @property
    def combined(self) -> np.ndarray:
        return np.maximum(np.abs(self.res_u), np.abs(self.res_v))

    @property
    def max(self) -> float:
        return float(np.nanmax(self.combined))

    @property
    def rms(self) -> float:
        c = self.combined
        return float(np.sqrt(np.nanmean(c ** 2)))


@dataclass
class FieldGrid:
    """Fields on an ``(t, x)`` grid; arrays are indexed ``[i_t, i_x]``."""

    x: np.ndarray
    t: np.ndarray
    m: int
    w: np.ndarray
    u: np.ndarray
    v: np.ndarray
    u0: complex
    w_state: np.ndarray | None = None
    u_state: np.ndarray | None = None
    residual: np.ndarray | None = None
    constants: dict = field(default_factory=dict)
    trajectories: list = field(default_factory=list, repr=False)

    def constraint_residual(self) -> float:
        return constraint_residual(self.w, self.u, self.v)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["x", "t", "re_w", "im_w", "re_u", "im_u", "re_v", "im_v", "residual"])
        res = np.full(self.w.shape, np.nan) if self.residual is None else self.residual
        for i, tv in enumerate(self.t):
            for j, xv in enumerate(self.x):
                row = [xv, tv, self.w[i, j].real, self.w[i, j].imag, self.u[i, j].real, self.u[i, j].imag,
                       self.v[i, j].real, self.v[i, j].imag, res[i, j]]
                wr.writerow([f"{float(r):.17g}" for r in row])
        return buf.getvalue()


def constraint_residual(w, u, v) -> float:
    return float(np.max(np.abs(np.asarray(w) ** 2 + np.asarray(u) * np.asarray(v) - 1.0)))


def _track_matrix(pd: cv.PeriodData, Omega: cv.Differential, Psi: cv.Differential) -> np.ndarray:
    """Rows: ``omega_1..omega_n``, ``Omega``, ``Psi`` (numerators, ascending powers)."""
    n = pd.n
    T = np.zeros((n + 2, n + 2), dtype=complex)
    T[:n, :n] = pd.C
    T[n, : n + 1] = Omega.D[0]
    T[n + 1] = Psi.D[0]
    return T


def _initial_integrals(state: db.EllipticState, pd: cv.PeriodData, ncomp: int):
    """Abel maps of every stored point; the remaining tracked components start at zero."""
    curve = pd.curve
    out = []
    for pts, ys in ((state.mu, state.y_mu), (state.nu, state.y_nu)):
        rows = np.zeros((pts.size, ncomp), dtype=complex)
        for k, (l, y) in enumerate(zip(pts, ys)):
            rows[k, : pd.n] = cv.abel_map(cv.SurfacePoint(l, curve.sheet_of(l, y)), pd)
        out.append(rows)
    return out


def reconstruct_grid(pd: cv.PeriodData, s0: db.EllipticState, m: int, xs: Sequence[float],
                     ts: Sequence[float], K: np.ndarray | None = None, rtol: float = 1e-13,
                     atol: float = 1e-13, eps_coll: float = 1e-6, theta_tol: float = 1e-15,
                     quad_order: int = 7, keep_trajectories: bool = False) -> FieldGrid:
    """Reconstruct ``w, u, v`` on ``ts x xs`` starting from ``s0`` at ``(xs[0], ts[0])``.

    The divisor sums are advanced by the Dubrovin integrator, which carries
    the Abel integrals of every point as smooth extra components; the
    ``(n+1)``-th pair feeds the third-kind data.  ``u`` is anchored at
    ``xs[0]`` on each ``t`` slice by ``u = F(0) / prod(-mu_j)``.
    """
    xs = np.asarray(xs, dtype=float)
    ts = np.asarray(ts, dtype=float)
    n = pd.n
    bp = pd.spec.branch_points
    tf = ThetaFields(pd, K, tol=theta_tol)
    Omega = omega_infinity_differential(pd)
    Psi = second_kind_infinity_differential(pd)
    T = _track_matrix(pd, Omega, Psi)
    Im0, In0 = _initial_integrals(s0, pd, T.shape[0])
    # data at the initial node
    mh, nh = s0.mu_hat(pd.curve), s0.nu_hat(pd.curve)
    tk = cv.third_kind(nh[n], mh[n], pd)
    rho1_0 = -Im0[:n, :n].sum(axis=0)
    rho2_0 = In0[:n, :n].sum(axis=0)
    shift = lattice_shift(rho1_0, rho2_0, tk, pd)
    E0 = tk.omega0_inf_plus - tk.omega0_inf_minus
    q = infinity_path_class(pd, Omega)

    def E_of(Im, In):
        # reciprocity, corrected by the b-winding of the path between the infinities
        return (Im[..., n, n] + In[..., n, n]) + 2j * np.pi * ((Im[..., n, :n] + In[..., n, :n]) @ q)

    Eoff = E0 - E_of(Im0, In0)
    g0 = complex(tk.d[n - 1])
    # t direction
    if ts.size > 1 and ts[-1] != ts[0]:
        flow = db.FlowSpec.for_curve(m, bp)
        ttraj = db.integrate_flow(s0, "t", (ts[0], ts[-1]), bp, flow=flow, samples=ts, rtol=rtol,
                                  atol=atol, eps_coll=eps_coll, track=T, track_init=(Im0, In0))
        starts = ttraj.states
        inits = list(zip(ttraj.tracked_mu, ttraj.tracked_nu))
    else:
        starts = [s0] * ts.size
        inits = [(Im0, In0)] * ts.size
    shape = (ts.size, xs.size)
    w = np.empty(shape, dtype=complex)
    u = np.empty(shape, dtype=complex)
    v = np.empty(shape, dtype=complex)
    w_state = np.empty(shape, dtype=complex)
    u_state = np.empty(shape, dtype=complex)
    trajs = []
    for i, (st, init) in enumerate(zip(starts, inits)):
        tr = db.integrate_flow(st, "x", (xs[0], xs[-1]), bp, samples=xs, rtol=rtol, atol=atol,
                               eps_coll=eps_coll, track=T, track_init=init)
        Im, In = tr.tracked_mu, tr.tracked_nu  # (Nx, n+1, n+1)
        rho1 = -Im[:, :n, :n].sum(axis=1)
        rho2 = In[:, :n, :n].sum(axis=1) - pd.tau @ shift
        E = Eoff + E_of(Im, In)
        gam = g0 + 0.5 * (Im[:, n, n + 1] + In[:, n, n + 1])
        w[i] = tf.w(rho1, rho2, E)
        ld = tf.log_derivative(rho1, rho2, gam)
        u[i], v[i] = reconstruct_u_v(xs, w[i], ld, st.u, quad_order)
        w_state[i] = [s.w for s in tr.states]
        u_state[i] = [s.u for s in tr.states]
        if keep_trajectories:
            trajs.append(tr)
    consts = {
        "tau": pd.tau, "K": tf.K, "gamma": tk.gamma, "omega0_inf_plus": tk.omega0_inf_plus,
        "omega0_inf_minus": tk.omega0_inf_minus, "lattice_shift": shift,
        "A_inf_plus": tf.A_plus, "A_inf_minus": tf.A_minus, "infinity_path_class": q,
    }
    return FieldGrid(xs, ts, m, w, u, v, s0.u, w_state, u_state, None, consts, trajs)


# ---------------------------------------------------------------------------
# PDE residuals
# ---------------------------------------------------------------------------

def _dx(f, h, axis=-1):
    out = np.full(f.shape, np.nan, dtype=complex)
    sl = [slice(None)] * f.ndim
    a, b, c = list(sl), list(sl), list(sl)
    a[axis], b[axis], c[axis] = slice(1, -1), slice(2, None), slice(None, -2)
    out[tuple(a)] = (f[tuple(b)] - f[tuple(c)]) / (2 * h)
    return out


def _dxx(f, h):
    out = np.full(f.shape, np.nan, dtype=complex)
    out[:, 1:-1] = (f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]) / (h * h)
    return out


def _dxxx(f, h):
    out = np.full(f.shape, np.nan, dtype=complex)
    out[:, 2:-2] = (f[:, 4:] - 2 * f[:, 3:-1] + 2 * f[:, 1:-3] - f[:, :-4]) / (2 * h ** 3)
    return out


def pde_residual(x, t, u, v, w, m: int) -> ResidualReport:
    """Central-difference residuals of the ``t_1`` or ``t_2`` flow.

    ``m = 1``: ``u_t - (u_xx w - u w_xx)/2`` and ``v_t - (w_xx v - w v_xx)/2``.
    ``m = 2``: ``u_t - u_xxx/4 - 3/8 (u (u_x v_x + w_x^2))_x`` and the ``v`` analogue.
    Boundary nodes are ``nan``.
    """
    u, v, w = (np.asarray(a, dtype=complex) for a in (u, v, w))
    hx = float(x[1] - x[0])
    ht = float(t[1] - t[0])
    ut = _dx(u, ht, axis=0)
    vt = _dx(v, ht, axis=0)
    if m == 1:
        ru = ut - 0.5 * (_dxx(u, hx) * w - u * _dxx(w, hx))
        rv = vt - 0.5 * (_dxx(w, hx) * v - w * _dxx(v, hx))
    elif m == 2:
        ux, vx, wx = _dx(u, hx), _dx(v, hx), _dx(w, hx)
        q = ux * vx + wx ** 2
        ru = ut - 0.25 * _dxxx(u, hx) - 0.375 * _dx(u * q, hx)
        rv = vt - 0.25 * _dxxx(v, hx) - 0.375 * _dx(v * q, hx)
    else:
        raise ValueError("residuals are implemented for m = 1 and m = 2")
    return ResidualReport(m, ru, rv)


# ---------------------------------------------------------------------------
# divisor motion: two routes
# ---------------------------------------------------------------------------

def linear_rho(rho0: np.ndarray, pd: cv.PeriodData, x, t, x0: float = 0.0, t0: float = 0.0,
               flow: db.FlowSpec | None = None) -> np.ndarray:
    """``rho1`` (all ``n+1`` stored points) from the straight-line flow."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = rho0 + np.outer(x - x0, db.slope_x(pd))
    if flow is not None:
        out = out + np.outer(t - t0, db.slope_t(pd, flow))
    return out


def dubrovin_rho(traj: db.Trajectory, pd: cv.PeriodData, reference: np.ndarray | None = None) -> tuple:
    """Abel sums of an integrated trajectory, unwrapped to a continuous lift."""
    r = [db.abel_jacobi_coords(s, pd) for s in traj.states]
    r1 = np.array([a for a, _ in r])
    r2 = np.array([b for _, b in r])
    ref1 = ref2 = None
    if reference is not None:
        ref1, ref2 = reference
    return db.unwrap_lattice(r1, pd, ref1), db.unwrap_lattice(r2, pd, ref2)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return cv.json_complex(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return float(f"{f:.17g}") if math.isfinite(f) else str(f)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def manifest_json(grid: FieldGrid, pd: cv.PeriodData, extra: dict | None = None) -> str:
    """JSON manifest with curve data and all derived constants (17 significant digits)."""
    doc = {
        "curve": {"branch_points": list(pd.spec.branch_points), "genus": pd.n,
                  "base_point": pd.base_point},
        "m": grid.m,
        "u0": grid.u0,
        "grid": {"x": [float(grid.x[0]), float(grid.x[-1]), int(grid.x.size)],
                 "t": [float(grid.t[0]), float(grid.t[-1]), int(grid.t.size)]},
        "constants": grid.constants,
    }
    if extra:
        doc.update(extra)
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True)

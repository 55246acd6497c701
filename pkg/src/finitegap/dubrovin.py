"""Dubrovin-type flows of the elliptic variables and their Abel-Jacobi images.

The zeros ``mu_k`` of ``F`` and ``nu_k`` of ``H`` are carried together with
``y = G(mu_k)`` and ``y = G(nu_k)``; the pair ``(lambda, y)`` moves smoothly
on the curve, so no sheet bookkeeping is needed between steps.  For the
``t_m`` flow

``mu_k' = 2 P_m(mu_k) y_k / prod_{j != k}(mu_k - mu_j)``,
``y_k'  = R'(mu_k) P_m(mu_k) / prod_{j != k}(mu_k - mu_j)``

with ``P_m = V12^(m) / u``; the ``nu`` family has the opposite sign and uses
``V21^(m) / v``.  The ``x`` flow is ``m = 0`` with ``P_0(lambda) = lambda``.
Because ``P_m`` only involves symmetric functions of the same family, the
potentials ``u, v`` cancel and the system is closed.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import curve as cv
from .ode import CollisionError, integrate

__all__ = [
    "CollisionError", "EllipticState", "FlowSpec", "Trajectory", "beta_coeffs",
    "elementary_symmetric", "flow_polynomial", "V12_coefficients", "gamma_F_orthogonality",
    "initial_state", "x_flow_rhs", "t_flow_rhs", "integrate_flow", "abel_jacobi_coords",
    "slope_x", "slope_t", "unwrap_lattice", "linear_fit_residual", "lagrange_identity",
]

lagrange_identity = cv.lagrange_identity


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def beta_coeffs(alphas: Sequence, kmax: int) -> list:
    """``[beta_-1, beta_0, ..., beta_kmax]`` with ``beta_k = -sum_j alpha_j beta_{k-1-j}``."""
    if len(alphas) < kmax + 1:
        raise ValueError(f"need at least {kmax + 1} alphas, got {len(alphas)}")
    exact = all(isinstance(a, (int, Fraction)) for a in alphas[: kmax + 1])
    one = Fraction(1) if exact else 1.0
    betas = [one]  # beta_{-1}
    for k in range(kmax + 1):
        acc = 0
        for j in range(k + 1):
            acc = acc + alphas[j] * betas[k - j]  # betas[k-j] is beta_{k-1-j}
        betas.append(-acc)
    return betas


def elementary_symmetric(points: Sequence, k: int):
    return cv.elementary_symmetric(list(points), k)


@dataclass(frozen=True)
class FlowSpec:
    """Flow index ``m`` and the constants ``alpha_l = c_l(Lambda)``, ``beta_l``."""

    m: int
    alphas: tuple
    betas: tuple

    @classmethod
    def for_curve(cls, m: int, branch_points: Sequence) -> "FlowSpec":
        if m < 0:
            raise ValueError("flow index must be nonnegative")
        alphas = tuple(cv.series_c(l, branch_points) for l in range(m + 1))
        return cls(m, alphas, tuple(beta_coeffs(alphas, m)))

    @classmethod
    def x_flow(cls) -> "FlowSpec":
        return cls(0, (0.0,), (1.0,))

    def beta(self, k: int):
        """``beta_k`` for ``k >= -1``."""
        return self.betas[k + 1]


def V12_coefficients(mu: Sequence, u, flow: FlowSpec) -> list:
    """``[V12_{-1}, ..., V12_{m-1}]`` from ``V12_k = sum_j beta_{j-1} F_{k-j}``.

    ``F_l = (-1)**(l+1) u e_{l+1}(mu)`` are the coefficients of
    ``F = u prod(lambda - mu_j)``.
    """
    def F(l):
        return (-1) ** (l + 1) * u * elementary_symmetric(mu, l + 1)

    out = []
    for k in range(-1, flow.m):
        out.append(sum(flow.beta(j - 1) * F(k - j) for j in range(k + 2)))
    return out


def flow_polynomial(points: np.ndarray, flow: FlowSpec) -> np.ndarray:
    """Coefficients (highest power first) of ``P_m(lambda) = V12^(m)(lambda) / u``.

    ``np.poly(points)[l+1] = F_l / u``, so the ``V12_k / u`` are a truncated
    convolution of the ``beta`` with these coefficients.
    """
    c = np.poly(np.asarray(points, dtype=complex))
    b = np.asarray(flow.betas[: flow.m + 1], dtype=complex)
    head = np.convolve(b, c)[: flow.m + 1]
    return np.concatenate([head, [0.0]])


def gamma_F_orthogonality(mu: Sequence, kmax: int, u=1) -> list:
    """``sum_{j1+j2=k} Gamma_{j1} F_{j2-1}`` for ``k = 1..kmax`` (all zero)."""
    def F(l):
        return (-1) ** (l + 1) * u * elementary_symmetric(mu, l + 1)

    return [sum(cv.complete_homogeneous(mu, j1) * F(k - j1 - 1) for j1 in range(k + 1))
            for k in range(1, kmax + 1)]


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EllipticState:
    """Elliptic variables with their ``G`` values and the potential ``u``.

    ``y_mu[k] = G(mu_k)`` and ``y_nu[k] = G(nu_k)``; both satisfy
    ``y**2 = R``.  The divisor points of ``phi`` are ``(nu_k, y_nu[k])``
    (zeros) and ``(mu_k, -y_mu[k])`` (poles).
    """

    mu: np.ndarray
    y_mu: np.ndarray
    nu: np.ndarray
    y_nu: np.ndarray
    u: complex
    x: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        for name in ("mu", "y_mu", "nu", "y_nu"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=complex).copy())
        object.__setattr__(self, "u", complex(self.u))
        if not (self.mu.shape == self.y_mu.shape == self.nu.shape == self.y_nu.shape):
            raise ValueError("mu, nu and their y values must have equal length")

    @property
    def n(self) -> int:
        return self.mu.size - 1

    def vector(self) -> np.ndarray:
        return np.concatenate([self.mu, self.y_mu, self.nu, self.y_nu])

    @classmethod
    def from_vector(cls, z: np.ndarray, u, x=0.0, t=0.0) -> "EllipticState":
        N = z.size // 4
        return cls(z[:N], z[N:2 * N], z[2 * N:3 * N], z[3 * N:4 * N], u, x, t)

    def mu_hat(self, curve: cv.Curve) -> list:
        """Pole points ``(mu_k, -G(mu_k))`` of ``phi``."""
        return [cv.SurfacePoint(l, -curve.sheet_of(l, y)) for l, y in zip(self.mu, self.y_mu)]

    def nu_hat(self, curve: cv.Curve) -> list:
        """Zero points ``(nu_k, G(nu_k))`` of ``phi``."""
        return [cv.SurfacePoint(l, curve.sheet_of(l, y)) for l, y in zip(self.nu, self.y_nu)]

    def sheets(self, curve: cv.Curve):
        """Sheet labels of ``(mu_k, G(mu_k))`` and ``(nu_k, G(nu_k))``."""
        sm = [curve.sheet_of(l, y) for l, y in zip(self.mu, self.y_mu)]
        sn = [curve.sheet_of(l, y) for l, y in zip(self.nu, self.y_nu)]
        return sm, sn

    # -- polynomials --------------------------------------------------------
    def F_poly(self) -> np.ndarray:
        return self.u * np.poly(self.mu)

    def G_poly(self) -> np.ndarray:
        """``G`` of degree ``n+1`` through all ``2n+2`` lift conditions (least squares)."""
        pts = np.concatenate([self.mu, self.nu])
        vals = np.concatenate([self.y_mu, self.y_nu])
        V = np.vander(pts, self.n + 2)
        coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
        return coef

    def G_residual(self) -> float:
        pts = np.concatenate([self.mu, self.nu])
        vals = np.concatenate([self.y_mu, self.y_nu])
        res = np.polyval(self.G_poly(), pts) - vals
        return float(np.max(np.abs(res)) / max(1.0, np.max(np.abs(vals))))

    @property
    def w(self) -> complex:
        return complex(self.G_poly()[0])

    @property
    def v(self) -> complex:
        return (1 - self.w ** 2) / self.u

    def H_poly(self) -> np.ndarray:
        return self.v * np.poly(self.nu)

    def invariants(self) -> tuple:
        """``F(0), G(0), H(0)``; constant along every flow of the hierarchy."""
        return (complex(self.F_poly()[-1]), complex(self.G_poly()[-1]), complex(self.H_poly()[-1]))


def initial_state(branch_points: Sequence, mu: Sequence, mu_hat_sheets: Sequence[int], u0, w0,
                  x: float = 0.0, t: float = 0.0) -> EllipticState:
    """Complete a state from the pole divisor, ``u(x0,t0)`` and ``w(x0,t0)``.

    ``mu_hat_sheets[k]`` is the sheet of the pole point ``(mu_k, -G(mu_k))``.
    ``G = w0 prod(lambda - mu_j) + sum_k G(mu_k) l_k(lambda)`` interpolates
    these lifts, ``H = (R - G**2) / F``, and the ``nu_k`` are the roots of ``H``.
    """
    mu_sheets = [-int(s) for s in mu_hat_sheets]
    mu = np.asarray(mu, dtype=complex)
    N = len(branch_points) // 2
    if mu.size != N:
        raise ValueError(f"mu: need {N} points for genus {N - 1}, got {mu.size}")
    if len(mu_sheets) != N:
        raise ValueError("mu_hat_sheets: one sheet per point")
    u0, w0 = complex(u0), complex(w0)
    if u0 == 0:
        raise ValueError("u0 must be nonzero")
    curve = cv.Curve(cv.CurveSpec(tuple(branch_points)))
    y = np.array([curve.sqrtR(cv.SurfacePoint(l, s)) for l, s in zip(mu, mu_sheets)])
    G = w0 * np.poly(mu)
    for k in range(N):
        others = np.delete(mu, k)
        lk = np.poly(others) / np.prod(mu[k] - others)
        G = G + y[k] * np.concatenate([[0.0], lk])
    F = u0 * np.poly(mu)
    R = np.poly(curve.points)
    num = np.polysub(R, np.polymul(G, G))
    H, rem = np.polydiv(num, F)
    if np.max(np.abs(rem)) > 1e-8 * max(1.0, np.max(np.abs(num))):
        raise ValueError("R - G^2 is not divisible by F; check the mu lifts")
    nu = np.roots(H)
    # Newton polish
    dH = np.polyder(H)
    for _ in range(3):
        nu = nu - np.polyval(H, nu) / np.polyval(dH, nu)
    nu = np.sort_complex(nu)
    y_nu = np.polyval(G, nu)
    return EllipticState(mu, y, nu, y_nu, u0, x, t)


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def _horner(coeffs, z):
    acc = np.full_like(z, coeffs[0])
    for c in coeffs[1:]:
        acc = acc * z + c
    return acc


def _family_rhs(pts, ys, flow: FlowSpec, sign: float, dR_coeffs):
    diff = pts[:, None] - pts[None, :]
    np.fill_diagonal(diff, 1.0)
    prod = diff.prod(axis=1)
    if flow.m == 0:
        P = pts / prod
    else:
        P = _horner(flow_polynomial(pts, flow), pts) / prod
    return sign * 2.0 * P * ys, sign * _horner(dR_coeffs, pts) * P, P


class _Rhs:
    """Vector field on ``(mu, y_mu, nu, y_nu, tracked integrals)``."""

    def __init__(self, branch_points, flow: FlowSpec, track: np.ndarray | None = None):
        self.flow = flow
        self.R = np.poly(np.asarray(branch_points, dtype=complex))
        self.dR = np.polyder(self.R)
        # track: (ncomp, deg) numerator coefficients, lambda**(l-1) ordering
        self.track = None if track is None else np.atleast_2d(np.asarray(track, dtype=complex))

    def core(self, z):
        N = z.size // 4
        mu, ymu, nu, ynu = z[:N], z[N:2 * N], z[2 * N:3 * N], z[3 * N:4 * N]
        dmu, dymu, Pm = _family_rhs(mu, ymu, self.flow, 1.0, self.dR)
        dnu, dynu, Pn = _family_rhs(nu, ynu, self.flow, -1.0, self.dR)
        return np.concatenate([dmu, dymu, dnu, dynu]), (mu, Pm, nu, Pn)

    def __call__(self, t, z):
        if self.track is None:
            return self.core(z)[0]
        N = self._N
        d, (mu, Pm, nu, Pn) = self.core(z[: 4 * N])
        deg = self.track.shape[1]
        # d/ds int^{(mu, y)} num dl / y = num(mu) * mu' / y = 2 num(mu) P(mu) / prod
        vm = (mu[:, None] ** np.arange(deg)[None, :]) @ self.track.T * (2.0 * Pm)[:, None]
        vn = (nu[:, None] ** np.arange(deg)[None, :]) @ self.track.T * (-2.0 * Pn)[:, None]
        return np.concatenate([d, vm.ravel(), vn.ravel()])

    def with_size(self, N):
        self._N = N
        return self

    def project(self, z, N=None):
        """One Newton step pulling every ``y`` back onto ``y**2 = R(lambda)``.

        The flow conserves ``y**2 - R`` exactly, so a defect made during an
        excursion towards infinity (where ``|y|`` is large) would otherwise
        persist and move the points along a neighbouring curve.
        """
        N = z.size // 4 if N is None else N
        z = z.copy()
        for lo in (0, 2 * N):
            lam, y = z[lo:lo + N], z[lo + N:lo + 2 * N]
            r = _horner(self.R, lam) - y * y
            ok = np.abs(r) < 0.01 * np.abs(y) ** 2
            z[lo + N:lo + 2 * N] = np.where(ok, y + r / np.where(ok, 2.0 * y, 1.0), y)
        return z


def x_flow_rhs(s: EllipticState, branch_points, eps_coll: float = 1e-6) -> np.ndarray:
    """``d/dx`` of ``(mu, y_mu, nu, y_nu)``."""
    _check_collisions(s.vector(), branch_points, eps_coll)
    return _Rhs(branch_points, FlowSpec.x_flow()).core(s.vector())[0]


def t_flow_rhs(s: EllipticState, flow: FlowSpec, branch_points, eps_coll: float = 1e-6) -> np.ndarray:
    """``d/dt_m`` of ``(mu, y_mu, nu, y_nu)``."""
    _check_collisions(s.vector(), branch_points, eps_coll)
    return _Rhs(branch_points, flow).core(s.vector())[0]


def _check_collisions(z, branch_points, eps_coll, t=None, branch_margin=None):
    scale = max(abs(complex(p)) for p in branch_points)
    N = z.size // 4
    for name, pts in (("mu", z[:N]), ("nu", z[2 * N:3 * N])):
        for i in range(N):
            for j in range(i):
                if abs(pts[i] - pts[j]) <= eps_coll * scale:
                    raise CollisionError(
                        f"{name}_{j + 1} and {name}_{i + 1} collide (|diff| = {abs(pts[i] - pts[j]):.3e})",
                        pair=(name, j, i), at=t)
        if branch_margin is not None:
            for i in range(N):
                d = min(abs(pts[i] - complex(e)) for e in branch_points)
                if d <= branch_margin * scale:
                    raise CollisionError(f"{name}_{i + 1} reached a branch point", pair=(name, i, None), at=t)


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Sampled states, and optionally the integrals of tracked differentials.

    ``tracked_mu[i, k]`` is ``int num dl / y`` from the start of the run to
    ``(mu_k, G(mu_k))`` at sample ``i`` (likewise ``tracked_nu``), added to
    the supplied initial values.
    """

    which: str
    samples: np.ndarray
    states: list
    tracked_mu: np.ndarray | None = None
    tracked_nu: np.ndarray | None = None
    n_steps: int = 0
    solution: object = field(default=None, repr=False)

    def to_csv(self, rho: np.ndarray | None = None) -> str:
        """Columns: sample, Re/Im of each mu_k and nu_k, sheets, rho components."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        s0 = self.states[0]
        N = s0.mu.size
        head = [self.which]
        for fam in ("mu", "nu"):
            for k in range(N):
                head += [f"re_{fam}{k + 1}", f"im_{fam}{k + 1}"]
        for fam in ("mu", "nu"):
            for k in range(N):
                head.append(f"sheet_{fam}{k + 1}")
        if rho is not None:
            for l in (1, 2):
                for j in range(rho.shape[-1]):
                    head += [f"re_rho{l}_{j + 1}", f"im_rho{l}_{j + 1}"]
        wr.writerow(head)
        for i, s in enumerate(self.states):
            row = [_fmt(self.samples[i])]
            for arr in (s.mu, s.nu):
                for z in arr:
                    row += [_fmt(z.real), _fmt(z.imag)]
            for sh in self._sheets[i]:
                row.append(str(sh))
            if rho is not None:
                for l in range(2):
                    for z in rho[i, l]:
                        row += [_fmt(z.real), _fmt(z.imag)]
            wr.writerow(row)
        return buf.getvalue()

    def attach_sheets(self, curve: cv.Curve):
        self._sheets = []
        for s in self.states:
            sm, sn = s.sheets(curve)
            self._sheets.append(sm + sn)
        return self


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def integrate_flow(s0: EllipticState, which: str, span: Sequence[float], branch_points,
                   flow: FlowSpec | None = None, samples: Sequence[float] | None = None,
                   rtol: float = 1e-9, atol: float = 1e-9, eps_coll: float = 1e-6,
                   branch_margin: float | None = None, track: np.ndarray | None = None,
                   track_init: tuple | None = None, project: bool = True) -> Trajectory:
    """Integrate the ``x`` flow (``which="x"``) or the ``t_m`` flow (``which="t"``).

    ``samples`` default to the two endpoints.  ``track`` is an optional
    ``(ncomp, deg)`` array of numerator coefficients ``num(l) = sum_j c_j l**j``
    whose integrals ``int num dl / y`` along each moving point are carried
    as extra smooth state components.  ``project`` keeps every lift on the
    curve after each accepted step.
    """
    if which not in ("x", "t"):
        raise ValueError("which must be 'x' or 't'")
    if which == "t" and flow is None:
        raise ValueError("the t flow needs a FlowSpec")
    fl = FlowSpec.x_flow() if which == "x" else flow
    a, b = float(span[0]), float(span[1])
    samples = np.array([a, b] if samples is None else samples, dtype=float)
    rhs = _Rhs(branch_points, fl, track)
    N = s0.mu.size
    z0 = s0.vector()
    if track is not None:
        ncomp = rhs.track.shape[0]
        if track_init is None:
            im = np.zeros((N, ncomp), dtype=complex)
            inn = np.zeros((N, ncomp), dtype=complex)
        else:
            im, inn = (np.asarray(v, dtype=complex).reshape(N, ncomp) for v in track_init)
        z0 = np.concatenate([z0, im.ravel(), inn.ravel()])
        rhs.with_size(N)

    def guard(t, z):
        _check_collisions(z[: 4 * N], branch_points, eps_coll, t, branch_margin)

    project = project and b != a
    proj = (lambda z: rhs.project(z, N)) if project else None
    sol = integrate(rhs, (a, b), z0, rtol=rtol, atol=atol, guard=guard, project=proj)
    Z = sol(samples)
    if project:
        Z = np.array([rhs.project(zi, N) for zi in Z])
    F0 = s0.invariants()[0]
    states = []
    for i, tv in enumerate(samples):
        mu = Z[i, :N]
        u = F0 / np.prod(-mu)
        xs, ts = (tv, s0.t) if which == "x" else (s0.x, tv)
        states.append(EllipticState.from_vector(Z[i, : 4 * N], u, xs, ts))
    traj = Trajectory(which, samples, states, n_steps=len(sol.steps), solution=sol)
    if track is not None:
        ncomp = rhs.track.shape[0]
        traj.tracked_mu = Z[:, 4 * N: 4 * N + N * ncomp].reshape(len(samples), N, ncomp)
        traj.tracked_nu = Z[:, 4 * N + N * ncomp:].reshape(len(samples), N, ncomp)
    return traj


# ---------------------------------------------------------------------------
# Abel-Jacobi coordinates
# ---------------------------------------------------------------------------

def abel_jacobi_coords(s: EllipticState, pd: cv.PeriodData) -> tuple:
    """``rho1 = sum_k A(mu_k, G(mu_k))`` and ``rho2 = sum_k A(nu_k, G(nu_k))``.

    These are the images of the lifted points carrying ``y = G``; with this
    choice ``d rho1/dx = 2 C_n`` and ``d rho2/dx = -2 C_n``.
    """
    curve = pd.curve
    avoid = tuple(s.mu) + tuple(s.nu)
    rho = []
    for pts, ys in ((s.mu, s.y_mu), (s.nu, s.y_nu)):
        total = np.zeros(pd.n, dtype=complex)
        for lam, y in zip(pts, ys):
            sheet = curve.sheet_of(lam, y)
            others = tuple(p for p in avoid if p != lam)
            total = total + cv.abel_map(cv.SurfacePoint(lam, sheet), pd, others)
        rho.append(total)
    return rho[0], rho[1]


def unwrap_lattice(values: np.ndarray, pd: cv.PeriodData, reference: np.ndarray | None = None) -> np.ndarray:
    """Remove lattice jumps between consecutive samples of a Jacobian-valued curve.

    Without ``reference`` each increment is reduced to the fundamental cell,
    which needs samples closer than half a period.  With ``reference`` (a
    continuous lift such as ODE-tracked integrals) the lattice vector that
    brings each sample nearest to the reference is removed instead.
    """
    values = np.asarray(values, dtype=complex)
    out = values.copy()
    if reference is not None:
        reference = np.asarray(reference, dtype=complex)
        base = values[0] - reference[0]
        for i in range(len(values)):
            out[i] = reference[i] + base + pd.reduce(values[i] - reference[i] - base)
        return out
    for i in range(1, len(values)):
        step = values[i] - out[i - 1]
        out[i] = out[i - 1] + pd.reduce(step)
    return out


def slope_x(pd: cv.PeriodData) -> np.ndarray:
    """``d rho1 / dx = 2 C_n``."""
    return 2.0 * pd.C_column(pd.n)


def slope_t(pd: cv.PeriodData, flow: FlowSpec) -> np.ndarray:
    """``d rho1 / dt_m = 2 sum_{l=0}^{m} beta_{l-1} C_{n-m+l}`` (``C_k = 0`` for ``k < 1``)."""
    n, m = pd.n, flow.m
    return 2.0 * sum(flow.beta(l - 1) * pd.C_column(n - m + l) for l in range(m + 1))


def linear_fit_residual(samples: np.ndarray, values: np.ndarray) -> tuple:
    """Least-squares affine fit per component; returns ``(slopes, max residual)``."""
    X = np.stack([np.ones_like(samples), samples], axis=1)
    coef, *_ = np.linalg.lstsq(X, values, rcond=None)
    res = values - X @ coef
    return coef[1], float(np.max(np.abs(res)))

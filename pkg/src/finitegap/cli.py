"""Command-line front end: ``finitegap {derive,curve,flow,reconstruct,verify,pipeline}``.

Every command reads one JSON configuration (``--config``; the built-in
genus-1 demo otherwise) and writes deterministic text artifacts into
``--out``.  Exit codes: 0 when every enabled check passes, 1 when a check
fails, 2 for an invalid configuration, 3 when a stage raises.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import curve as cv
from . import diffpoly as dp
from . import dubrovin as db
from . import reconstruct as rc
from .theta import ThetaContext, theta, theta_dir_deriv

log = logging.getLogger("finitegap")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2, 3

DEMO_CONFIG = {
    "branch_points": [-1.0, -0.5, 0.5, 1.0],
    "m": 1,
    "divisor": {"mu": [[-0.75, 0.25], [0.7, 0.15]], "sheets": [1, 1]},
    "u0": [1.0, 0.0],
    "w0": [0.0, 0.2],
    "grid": {"x": [0.0, 0.5, 101], "t": [0.0, 0.1, 21]},
    "flow": {"span": 1.0, "samples": 101},
    "derive": {"m_max": 2},
    "tolerances": {
        "ode": 1e-13,
        "theta": 1e-15,
        "linear_fit": 1e-6,
        "constraint": 1e-10,
        "residual": 1e-4,
        "phi_asymptotics": 1e-3,
        "routes": 1e-5,
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.exc = exc


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _parse_complex(value, name: str) -> complex:
    if isinstance(value, (int, float, complex)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return complex(value[0], value[1])
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigError(f"{name}: expected a number, [re, im] pair or complex string, got {value!r}")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    """Validated run configuration."""

    branch_points: tuple
    genus: int
    m: int
    mu: tuple
    sheets: tuple
    u0: complex
    w0: complex
    x_grid: tuple
    t_grid: tuple
    flow_span: float
    flow_samples: int
    m_max: int
    tolerances: dict
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict, tolerance_scale: float = 1.0) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = set(data) - set(DEMO_CONFIG) - {"genus", "comment"}
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown configuration key")
        d = _merge(DEMO_CONFIG, data)
        bps = d["branch_points"]
        if not isinstance(bps, list):
            raise ConfigError("branch_points: expected a list")
        bps = tuple(_parse_complex(b, f"branch_points[{i}]") for i, b in enumerate(bps))
        if len(bps) < 4 or len(bps) % 2:
            raise ConfigError(f"branch_points: need an even number >= 4 of points, got {len(bps)}")
        genus = len(bps) // 2 - 1
        if "genus" in data and data["genus"] != genus:
            raise ConfigError(f"genus: {data['genus']} does not match {len(bps)} branch points (genus {genus})")
        try:
            cv.CurveSpec(bps)
        except cv.CurveError as exc:
            raise ConfigError(str(exc)) from None
        if "branch_points" in data and "divisor" not in data:
            raise ConfigError("divisor: required when branch_points are given")
        m = d["m"]
        if not isinstance(m, int) or isinstance(m, bool) or m < 1 or m > 2:
            raise ConfigError(f"m: flow index must be 1 or 2, got {m!r}")
        div = d["divisor"]
        if not isinstance(div, dict) or "mu" not in div or "sheets" not in div:
            raise ConfigError("divisor: expected an object with 'mu' and 'sheets'")
        mu = tuple(_parse_complex(z, f"divisor.mu[{i}]") for i, z in enumerate(div["mu"]))
        if len(mu) != genus + 1:
            raise ConfigError(f"divisor.mu: need {genus + 1} points for genus {genus}, got {len(mu)}")
        sheets = tuple(div["sheets"])
        if len(sheets) != genus + 1 or any(s not in (1, -1) for s in sheets):
            raise ConfigError("divisor.sheets: need one sheet (+1 or -1) per point")
        u0 = _parse_complex(d["u0"], "u0")
        if u0 == 0:
            raise ConfigError("u0: must be nonzero")
        w0 = _parse_complex(d["w0"], "w0")
        grid = d["grid"]
        xg = cls._grid(grid.get("x"), "grid.x")
        tg = cls._grid(grid.get("t"), "grid.t")
        fl = d["flow"]
        span = fl.get("span")
        if not isinstance(span, (int, float)) or span <= 0:
            raise ConfigError("flow.span: must be a positive number")
        samples = fl.get("samples")
        if not isinstance(samples, int) or samples < 3:
            raise ConfigError("flow.samples: must be an integer >= 3")
        m_max = d["derive"].get("m_max")
        if not isinstance(m_max, int) or not 1 <= m_max <= 3:
            raise ConfigError("derive.m_max: must be 1, 2 or 3")
        tol = dict(d["tolerances"])
        for k, v in tol.items():
            if k not in DEMO_CONFIG["tolerances"]:
                raise ConfigError(f"tolerances.{k}: unknown tolerance")
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise ConfigError(f"tolerances.{k}: must be positive")
        if not tolerance_scale > 0:
            raise ConfigError("--tolerance-scale: must be positive")
        for k in ("linear_fit", "constraint", "residual", "phi_asymptotics", "routes"):
            tol[k] = tol[k] * tolerance_scale
        return cls(bps, genus, m, mu, sheets, u0, w0, xg, tg, float(span), samples, m_max, tol, d)

    @staticmethod
    def _grid(g, name):
        if not (isinstance(g, list) and len(g) == 3):
            raise ConfigError(f"{name}: expected [start, stop, count]")
        a, b, n = g
        if not all(isinstance(v, (int, float)) for v in (a, b)) or not isinstance(n, int):
            raise ConfigError(f"{name}: expected [start, stop, count]")
        if n < 5 or not b > a:
            raise ConfigError(f"{name}: need stop > start and count >= 5")
        return float(a), float(b), int(n)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(*self.x_grid)

    @property
    def ts(self) -> np.ndarray:
        return np.linspace(*self.t_grid)

    def digest(self) -> str:
        text = json.dumps([[z.real, z.imag] for z in self.branch_points])
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path: str | None, tolerance_scale: float = 1.0) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({}, tolerance_scale)
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    return RunConfig.from_dict(data, tolerance_scale)


# ---------------------------------------------------------------------------
# check bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.6g} (threshold {self.threshold:.3g})"


class Checks:
    def __init__(self):
        self.items: list[Check] = []

    def add(self, name: str, value: float, threshold: float, lower_is_better: bool = True) -> Check:
        ok = bool(np.isfinite(value)) and (value <= threshold if lower_is_better else value >= threshold)
        c = Check(name, float(value), float(threshold), bool(ok))
        self.items.append(c)
        return c

    def flag(self, name: str, ok: bool) -> Check:
        c = Check(name, 0.0 if ok else 1.0, 0.0, bool(ok))
        self.items.append(c)
        return c

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.items)

    def text(self) -> str:
        return "\n".join(c.line() for c in self.items) + "\n"

    def as_dict(self) -> dict:
        return {c.name: {"value": c.value, "threshold": c.threshold, "pass": c.passed} for c in self.items}


def _stage(name: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, StageError):
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
        raise StageError(name, exc) from exc


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def run_derive(cfg: RunConfig, out: Path) -> Checks:
    """Hierarchy members, Hamiltonians and symbolic verdicts."""
    checks = Checks()
    lines = ["# Heisenberg ferromagnet hierarchy", "# spectral problem U = lambda [[w, u], [v, -w]], w^2 + u v = 1", ""]
    for m in range(0, cfg.m_max + 1):
        ut, vt = dp.hierarchy_rhs(m)
        lines += [f"flow t_{m}:", f"  u_t = {ut}", f"  v_t = {vt}"]
        if m >= 1:
            lines.append(f"  H_{m} = {dp.hamiltonian(m)}")
        lines.append("")
    W, U, V = dp.w(), dp.u(), dp.v()
    wxx = dp.D(W, 2)
    ut, vt = dp.hierarchy_rhs(1)
    checks.flag("t1 flow equals (u_xx w - u w_xx)/2, (w_xx v - w v_xx)/2",
                ut == (dp.D(U, 2) * W - U * wxx) / 2 and vt == (wxx * V - W * dp.D(V, 2)) / 2)
    if cfg.m_max >= 2:
        ut, vt = dp.hierarchy_rhs(2)
        q = dp.D(U) * dp.D(V) + dp.D(W) ** 2
        checks.flag("t2 flow equals u_xxx/4 + 3/8 (u (u_x v_x + w_x^2))_x and v analogue",
                    ut == dp.D(U, 3) / 4 + Fraction(3, 8) * dp.D(U * q)
                    and vt == dp.D(V, 3) / 4 + Fraction(3, 8) * dp.D(V * q))
    for n in range(1, min(cfg.m_max, 2) + 1):
        H, L = dp.hamiltonian(n), dp.lenard(n)
        checks.flag(f"variational derivative of H_{n} equals (c_{n}, b_{n})",
                    dp.variational_derivative(H, "u") == L.c and dp.variational_derivative(H, "v") == L.b)
    for m in range(1, cfg.m_max + 1):
        checks.flag(f"zero curvature t_{m}", dp.zero_curvature_residual(m).is_zero())
    rec = dp.homogeneous_recursion(min(cfg.m_max, 3))
    checks.flag("homogeneous recursion matches Lenard", rec.matches_lenard and rec.first_order_relations_hold)
    checks.flag("degree law deg = k + 1", rec.degree_law_holds)
    lines += ["# verdicts", checks.text()]
    _write(out / "hierarchy.txt", "\n".join(lines))
    return checks


def _period_data(cfg: RunConfig, out: Path, use_cache: bool) -> cv.PeriodData:
    spec = cv.CurveSpec(cfg.branch_points)
    if not use_cache:
        return cv.period_matrices(spec)
    path = out / "cache" / f"periods-{cfg.digest()}.txt"
    if path.exists():
        log.info("period data loaded from cache %s", path)
        return cv.PeriodData.from_text(path.read_text())
    pd = cv.period_matrices(spec)
    _write(path, pd.to_text())
    # reload so that a cached rerun sees exactly the same numbers
    return cv.PeriodData.from_text(path.read_text())


def run_curve(cfg: RunConfig, out: Path, use_cache: bool = False):
    pd = _period_data(cfg, out, use_cache)
    K = cv.riemann_constants(pd)
    checks = Checks()
    a_norm = pd.curve.periods(pd.normalized(), "a")
    checks.add("a-normalization |oint_a omega - I|", float(np.max(np.abs(a_norm - np.eye(pd.n)))), 1e-10)
    checks.add("tau symmetry", float(np.max(np.abs(pd.tau - pd.tau.T))), 1e-10)
    checks.add("min eigenvalue of Im tau", float(np.linalg.eigvalsh(pd.tau.imag).min()), 0.0, lower_is_better=False)
    _write(out / "periods.txt", pd.to_text())
    doc = {
        "branch_points": list(pd.spec.branch_points), "genus": pd.n, "base_point": pd.base_point,
        "tau": pd.tau, "C": pd.C, "K": K,
        "A_inf_plus": cv.abel_map_infinity(cv.INF_PLUS, pd), "A_inf_minus": cv.abel_map_infinity(cv.INF_MINUS, pd),
        "checks": checks.as_dict(),
    }
    _write(out / "curve.json", json.dumps(rc._jsonable(doc), indent=2, sort_keys=True))
    return pd, K, checks


def _initial_state(cfg: RunConfig) -> db.EllipticState:
    return db.initial_state(cfg.branch_points, cfg.mu, cfg.sheets, cfg.u0, cfg.w0)


def run_flow(cfg: RunConfig, out: Path, pd: cv.PeriodData):
    """Integrate the x and t_m flows and test the straight-line motion."""
    s0 = _initial_state(cfg)
    checks = Checks()
    samples = np.linspace(0.0, cfg.flow_span, cfg.flow_samples)
    flow = db.FlowSpec.for_curve(cfg.m, cfg.branch_points)
    report = ["# linearization of the Abel-Jacobi coordinates"]
    for which, expected in (("x", db.slope_x(pd)), ("t", db.slope_t(pd, flow))):
        tr = db.integrate_flow(s0, which, (0.0, cfg.flow_span), cfg.branch_points,
                               flow=flow if which == "t" else None, samples=samples,
                               rtol=cfg.tolerances["ode"], atol=cfg.tolerances["ode"], track=pd.C)
        tr.attach_sheets(pd.curve)
        a1, a2 = db.abel_jacobi_coords(s0, pd)
        ref1 = a1 + tr.tracked_mu.sum(axis=1)
        ref2 = a2 + tr.tracked_nu.sum(axis=1)
        r1, r2 = rc.dubrovin_rho(tr, pd, reference=(ref1, ref2))
        rho = np.stack([r1, r2], axis=1)
        _write(out / f"trajectory_{which}.csv", tr.to_csv(rho))
        label = "x" if which == "x" else f"t_{cfg.m}"
        for l, (r, sign) in enumerate(((r1, 1.0), (r2, -1.0)), start=1):
            slope, res = db.linear_fit_residual(samples, r)
            checks.add(f"rho{l} affine in {label} (fit residual)", res, cfg.tolerances["linear_fit"])
            checks.add(f"rho{l} slope in {label} vs formula", float(np.max(np.abs(slope - sign * expected))),
                       cfg.tolerances["linear_fit"])
            report.append(f"rho{l} slope in {label}: " + " ".join(f"{z.real:.17g}{z.imag:+.17g}j" for z in slope))
        report.append(f"expected slope in {label}: " + " ".join(f"{z.real:.17g}{z.imag:+.17g}j" for z in expected))
    report += ["", checks.text()]
    _write(out / "linearization.txt", "\n".join(report))
    return checks


def run_reconstruct(cfg: RunConfig, out: Path, pd: cv.PeriodData, K: np.ndarray):
    s0 = _initial_state(cfg)
    grid = rc.reconstruct_grid(pd, s0, cfg.m, cfg.xs, cfg.ts, K=K, rtol=cfg.tolerances["ode"],
                               atol=cfg.tolerances["ode"], theta_tol=cfg.tolerances["theta"])
    res = rc.pde_residual(grid.x, grid.t, grid.u, grid.v, grid.w, cfg.m)
    grid.residual = res.combined.real
    checks = Checks()
    checks.add("w^2 + u v - 1", grid.constraint_residual(), cfg.tolerances["constraint"])
    checks.add(f"max PDE residual (t_{cfg.m} flow)", res.max, cfg.tolerances["residual"])
    scale_w = np.maximum(np.abs(grid.w_state), 1.0)
    checks.add("theta w vs algebraic w (relative)", float(np.max(np.abs(grid.w - grid.w_state) / scale_w)),
               cfg.tolerances["routes"])
    # phi asymptotics at the grid centre, x-derivatives by central differences
    it, ix = grid.t.size // 2, grid.x.size // 2
    h = grid.x[1] - grid.x[0]
    ux = (grid.u[it, ix + 1] - grid.u[it, ix - 1]) / (2 * h)
    wx = (grid.w[it, ix + 1] - grid.w[it, ix - 1]) / (2 * h)
    state = _state_at(cfg, s0, grid.x[ix], grid.t[it])
    rep = rc.phi_asymptotics_check(state, pd.curve, ux, wx, u=grid.u[it, ix], w=grid.w[it, ix])
    checks.add("phi leading term at inf+ (relative)", rep["a+_relerr"], cfg.tolerances["phi_asymptotics"])
    checks.add("phi leading term at inf- (relative)", rep["a-_relerr"], cfg.tolerances["phi_asymptotics"])
    checks.add("phi first-order term at inf+ (relative)", rep["b+_relerr"], cfg.tolerances["phi_asymptotics"])
    checks.add("phi first-order term at inf- (relative)", rep["b-_relerr"], cfg.tolerances["phi_asymptotics"])
    w_phi = rc.w_from_phi(state, pd.curve)
    checks.add("theta w vs w from phi asymptotics (relative)",
               abs(w_phi - grid.w[it, ix]) / max(abs(grid.w[it, ix]), 1.0), cfg.tolerances["routes"])
    _write(out / "fields.csv", grid.to_csv())
    extra = {"tolerances": cfg.tolerances, "residual": {"max": res.max, "rms": res.rms},
             "checks": checks.as_dict(), "status": "ok" if checks.ok else "FAILED"}
    _write(out / "manifest.json", rc.manifest_json(grid, pd, extra))
    _write(out / "residual.txt", f"m {cfg.m}\nmax {res.max:.17g}\nrms {res.rms:.17g}\n" + checks.text())
    return grid, checks


def _state_at(cfg: RunConfig, s0: db.EllipticState, x: float, t: float) -> db.EllipticState:
    s = s0
    if t != 0.0:
        flow = db.FlowSpec.for_curve(cfg.m, cfg.branch_points)
        s = db.integrate_flow(s, "t", (0.0, t), cfg.branch_points, flow=flow, rtol=1e-13, atol=1e-13).states[-1]
    if x != 0.0:
        s = db.integrate_flow(s, "x", (0.0, x), cfg.branch_points, rtol=1e-13, atol=1e-13).states[-1]
    return s


def run_theta_checks(pd: cv.PeriodData, checks: Checks, seed: int = 7):
    ctx = ThetaContext(pd.tau)
    rng = np.random.default_rng(seed)
    z = rng.uniform(-0.5, 0.5, (20, pd.n)) + 1j * rng.uniform(-0.3, 0.3, (20, pd.n))
    t0 = theta(z, ctx)
    scale = np.maximum(np.abs(t0), 1e-300)
    checks.add("theta parity", float(np.max(np.abs(theta(-z, ctx) - t0) / scale)), 1e-10)
    e = np.eye(pd.n)
    per = max(float(np.max(np.abs(theta(z + e[j], ctx) - t0) / scale)) for j in range(pd.n))
    checks.add("theta periodicity", per, 1e-10)
    qp = 0.0
    for j in range(pd.n):
        factor = np.exp(-2j * np.pi * z[:, j] - 1j * np.pi * pd.tau[j, j])
        qp = max(qp, float(np.max(np.abs(theta(z + pd.tau[:, j], ctx) - factor * t0) / np.abs(factor * t0))))
    checks.add("theta quasi-periodicity", qp, 1e-10)
    d = pd.C_column(pd.n)
    hh = 1e-5
    fd = (theta(z + hh * d, ctx) - theta(z - hh * d, ctx)) / (2 * hh)
    checks.add("theta directional derivative vs central difference",
               float(np.max(np.abs(theta_dir_deriv(z, d, ctx) - fd) / np.maximum(np.abs(fd), 1.0))), 1e-7)


def run_verify(cfg: RunConfig, out: Path, use_cache: bool = False) -> Checks:
    """Full property suite on the configured curve and divisor."""
    all_checks = Checks()
    all_checks.items += _stage("derive", run_derive, cfg, out).items
    pd, K, cchecks = _stage("curve", run_curve, cfg, out, use_cache)
    all_checks.items += cchecks.items
    lams = [Fraction(1, 2), Fraction(-3, 4), Fraction(2), Fraction(5, 3)]
    worst = max(abs(sum(cv.series_c_exact(k - l - 1, lams) * cv.series_chat_exact(l - 1, lams)
                        for l in range(k + 1))) for k in range(1, 11))
    all_checks.flag("series identity sum c_{k-l-1} chat_{l-1} = 0 (exact)", worst == 0)
    _stage("theta", run_theta_checks, pd, all_checks)
    all_checks.items += _stage("flow", run_flow, cfg, out, pd).items
    grid, rchecks = _stage("reconstruct", run_reconstruct, cfg, out, pd, K)
    all_checks.items += rchecks.items
    all_checks.items += _stage("routes", _route_checks, cfg, pd).items
    _write(out / "verify.txt", all_checks.text())
    return all_checks


def _route_checks(cfg: RunConfig, pd: cv.PeriodData) -> Checks:
    """Straight-line motion of rho vs Dubrovin integration plus Abel maps."""
    checks = Checks()
    s0 = _initial_state(cfg)
    flow = db.FlowSpec.for_curve(cfg.m, cfg.branch_points)
    r10, _ = db.abel_jacobi_coords(s0, pd)
    xs = np.linspace(cfg.x_grid[0], cfg.x_grid[1], 21)
    trx = db.integrate_flow(s0, "x", (xs[0], xs[-1]), cfg.branch_points, samples=xs, rtol=1e-13, atol=1e-13)
    r1, _ = rc.dubrovin_rho(trx, pd)
    lin = rc.linear_rho(r10, pd, xs, 0.0, x0=xs[0])
    worst = float(np.max(np.abs(r1 - lin)))
    ts = np.linspace(cfg.t_grid[0], cfg.t_grid[1], 21)
    trt = db.integrate_flow(s0, "t", (ts[0], ts[-1]), cfg.branch_points, flow=flow, samples=ts,
                            rtol=1e-13, atol=1e-13)
    r1t, _ = rc.dubrovin_rho(trt, pd)
    lin_t = rc.linear_rho(r10, pd, 0.0, ts, t0=ts[0], flow=flow)
    worst = max(worst, float(np.max(np.abs(r1t - lin_t))))
    checks.add("linear rho flow vs Dubrovin + Abel map", worst, cfg.tolerances["routes"])
    return checks


# ---------------------------------------------------------------------------
# plotting
# ---------------------------------------------------------------------------

PLOT_SCRIPT = '''"""Plot the CSV outputs of a finitegap run.

Usage: python plot_outputs.py [OUTPUT_DIR]
"""
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def plot_fields(out):
    head, data = read_csv(out / "fields.csv")
    col = {h: i for i, h in enumerate(head)}
    x = np.unique(data[:, col["x"]])
    t = np.unique(data[:, col["t"]])
    fig, axes = plt.subplots(2, 3, figsize=(12, 6), constrained_layout=True)
    for ax, name in zip(axes.ravel(), ["re_w", "im_w", "re_u", "im_u", "re_v", "im_v"]):
        z = data[:, col[name]].reshape(t.size, x.size)
        im = ax.pcolormesh(x, t, z, shading="auto", cmap="viridis")
        ax.set_title(name.replace("_", " "))
        ax.set_xlabel("x")
        ax.set_ylabel("t")
        fig.colorbar(im, ax=ax)
    fig.savefig(out / "fields.png", dpi=120)
    plt.close(fig)


def plot_trajectory(out, which):
    path = out / f"trajectory_{which}.csv"
    if not path.exists():
        return
    head, data = read_csv(path)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
    for fam, ax in zip(("mu", "nu"), axes):
        k = 1
        while f"re_{fam}{k}" in head:
            ax.plot(data[:, head.index(f"re_{fam}{k}")], data[:, head.index(f"im_{fam}{k}")], label=f"{fam}_{k}")
            k += 1
        ax.set_xlabel("Re")
        ax.set_ylabel("Im")
        ax.set_title(f"{fam} along {which}")
        ax.legend()
    fig.savefig(out / f"trajectory_{which}.png", dpi=120)
    plt.close(fig)


def main(out):
    out = Path(out)
    if (out / "fields.csv").exists():
        plot_fields(out)
    for which in ("x", "t"):
        plot_trajectory(out, which)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")
'''


def write_plot_script(out: Path, render: bool = True) -> bool:
    """Write the generic plot script; render PNGs too when matplotlib is importable."""
    path = out / "plot_outputs.py"
    _write(path, PLOT_SCRIPT)
    if not render:
        return False
    try:
        import matplotlib  # noqa: F401
    except ImportError:
        log.info("matplotlib not installed; figures not rendered")
        return False
    namespace: dict = {"__name__": "finitegap_plot"}
    exec(compile(PLOT_SCRIPT, str(path), "exec"), namespace)  # noqa: S102 - our own script
    namespace["main"](out)
    return True


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def run_pipeline(cfg: RunConfig, out: Path, use_cache: bool = False, render: bool = True) -> Checks:
    checks = Checks()
    try:
        pd, K, c = _stage("curve", run_curve, cfg, out, use_cache)
        checks.items += c.items
        checks.items += _stage("flow", run_flow, cfg, out, pd).items
        _, c = _stage("reconstruct", run_reconstruct, cfg, out, pd, K)
        checks.items += c.items
        _stage("plot", write_plot_script, out, render)
    except StageError as exc:
        doc = {"status": "FAILED", "stage": exc.stage, "error": str(exc.exc), "checks": checks.as_dict()}
        _write(out / "manifest.json", json.dumps(rc._jsonable(doc), indent=2, sort_keys=True))
        raise
    _write(out / "checks.txt", checks.text())
    return checks


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finitegap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("derive", "hierarchy equations and symbolic verdicts"),
                        ("curve", "period matrices, Riemann constants, Abel map at infinity"),
                        ("flow", "Dubrovin trajectories and linearization test"),
                        ("reconstruct", "theta-function fields on the (x, t) grid"),
                        ("verify", "run the full property suite"),
                        ("pipeline", "curve, flow, reconstruct and plots")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", metavar="PATH", help="JSON configuration (default: genus-1 demo)")
        sp.add_argument("--out", metavar="DIR", default="finitegap-out", help="output directory")
        sp.add_argument("--cache", action="store_true", help="reuse period data stored under OUT/cache")
        sp.add_argument("--tolerance-scale", metavar="FACTOR", type=float, default=1.0,
                        help="multiply every verification threshold by FACTOR")
        sp.add_argument("--no-figures", action="store_true", help="only write the plot script")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.tolerance_scale)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        if args.command == "derive":
            checks = _stage("derive", run_derive, cfg, out)
        elif args.command == "curve":
            checks = _stage("curve", run_curve, cfg, out, args.cache)[2]
        elif args.command == "flow":
            pd = _stage("curve", _period_data, cfg, out, args.cache)
            checks = _stage("flow", run_flow, cfg, out, pd)
        elif args.command == "reconstruct":
            pd = _stage("curve", _period_data, cfg, out, args.cache)
            K = _stage("curve", cv.riemann_constants, pd)
            checks = _stage("reconstruct", run_reconstruct, cfg, out, pd, K)[1]
            _stage("plot", write_plot_script, out, not args.no_figures)
        elif args.command == "verify":
            checks = run_verify(cfg, out, args.cache)
        else:
            checks = run_pipeline(cfg, out, args.cache, not args.no_figures)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    log.info("finished in %.1f s", time.perf_counter() - start)
    sys.stdout.write(checks.text())
    failed = [c.name for c in checks.items if not c.passed]
    if failed:
        print(f"failed check: {failed[0]}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

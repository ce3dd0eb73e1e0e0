"""Entropy-aware loss assembly: weighted characteristic residual, initial and
boundary mismatches, and the jump-condition penalty."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Var, vabs, vmean, vsqrt, vsum
from .conservation import GAMMA

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "residual_weight",
    "rh_indicator",
    "detect_shock_location",
    "characteristic_residual",
    "rh_loss",
    "assemble_loss",
    "NonFiniteComponentError",
]


class NonFiniteComponentError(FloatingPointError):
    pass


@dataclass
class LossWeights:
    """Balancing factors and jump-detection thresholds.

    ``entropy_weight_on`` switches the compression-sensitive interior
    weight; vanilla training runs with it off (weight identically one).
    """

    eps_i: float = 10.0
    eps_b: float = 10.0
    eps_r: float = 100.0
    eps_lambda: float = 5.0
    eps_jump: float = 0.2
    eps1: float = 0.2
    eps2: float = 0.2
    eps_d: float = 10.0
    entropy_weight_on: bool = True

    def __post_init__(self):
        for name in ("eps_i", "eps_b", "eps_r", "eps_lambda", "eps_jump",
                     "eps1", "eps2", "eps_d"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def vanilla(self):
        return replace(self, eps_r=0.0, entropy_weight_on=False)


@dataclass
class LossBreakdown:
    interior: float
    ic: float
    bc: float
    rh: float
    data: float = 0.0
    total: float = 0.0

    def as_row(self):
        return [self.interior, self.ic, self.bc, self.rh, self.data, self.total]


def residual_weight(divergence, eps_lambda=5.0):
    """1 / (eps*( |div u| - div u ) + 1): in (0, 1], equal to 1 in expansions."""
    d = np.asarray(divergence, dtype=np.float64)
    return 1.0 / (eps_lambda * (np.abs(d) - d) + 1.0)


def _residual_weight_var(div, eps_lambda):
    return 1.0 / ((vabs(div) - div) * eps_lambda + 1.0)


def rh_indicator(family, probe_a, probe_b, weights=None):
    """Jump filter at probe pairs.

    Burgers: |u1-u2| where above the jump threshold, else 0.
    Euler: probes are (p, u) pairs; |(p1-p2)(u1-u2)| where both pressure
    and velocity jumps exceed their thresholds, else 0.
    """
    w = weights or LossWeights()
    if family == "burgers":
        jump = np.abs(np.asarray(probe_a, dtype=np.float64)
                      - np.asarray(probe_b, dtype=np.float64))
        return np.where(jump > w.eps_jump, jump, 0.0)
    p1, u1 = (np.asarray(v, dtype=np.float64) for v in probe_a)
    p2, u2 = (np.asarray(v, dtype=np.float64) for v in probe_b)
    dp = np.abs(p1 - p2)
    du = np.abs(u1 - u2)
    return np.where((dp > w.eps1) & (du > w.eps2), dp * du, 0.0)


def _refine_jump(model, t, lo, hi, u_lo, u_hi, iters=52):
    """Bisect to the mid-value crossing inside the bracketing scan cells."""
    mid_val = 0.5 * (u_lo + u_hi)
    rising = u_hi > u_lo
    for _ in range(iters):
        x_mid = 0.5 * (lo + hi)
        u_mid = float(model.eval_values(np.array([[x_mid, t]]))[0, 0])
        if (u_mid < mid_val) == rising:
            lo = x_mid
        else:
            hi = x_mid
        if hi - lo <= 1e-14 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def detect_shock_location(model, t, x_grid, threshold=0.2, refine=True):
    """Largest-jump scan of a scalar field at time t; None below threshold.

    The max-jump scan cell is refined by bisection to the mid-value
    crossing, so step profiles are located to machine precision.
    """
    x = np.asarray(x_grid, dtype=np.float64)
    pts = np.column_stack([x, np.full(x.size, float(t))])
    u = model.eval_values(pts)[:, 0]
    jumps = np.abs(u[2:] - u[:-2])
    i = int(np.argmax(jumps))
    if jumps[i] <= threshold:
        return None
    if not refine:
        return float(x[i + 1])
    return float(_refine_jump(model, t, float(x[i]), float(x[i + 2]),
                              float(u[i]), float(u[i + 2])))


def detect_two_shocks(model, t, x_grid, threshold=0.2, min_sep=3,
                      refine=True):
    """Top-two separated jump locations (for merge-time prediction)."""
    x = np.asarray(x_grid, dtype=np.float64)
    pts = np.column_stack([x, np.full(x.size, float(t))])
    u = model.eval_values(pts)[:, 0]
    jumps = np.abs(u[2:] - u[:-2])
    order = np.argsort(jumps)[::-1]
    picks = []
    for i in order:
        if jumps[i] <= threshold:
            break
        if all(abs(i - j) >= min_sep for j in picks):
            picks.append(i)
        if len(picks) == 2:
            break
    if len(picks) < 2:
        return None
    if not refine:
        return sorted(float(x[i + 1]) for i in picks)
    return sorted(
        _refine_jump(model, t, float(x[i]), float(x[i + 2]),
                     float(u[i]), float(u[i + 2]))
        for i in picks)


# ---------------------------------------------------------------------------
# taped loss pieces
# ---------------------------------------------------------------------------

def _mean_sq(var_2d, n):
    return vsum(var_2d * var_2d) * (1.0 / n)


def _interior_var(model, points, family, weights):
    n = points.shape[0]
    U, Ux, Ut = model.tape_values_and_derivs(points)
    if family == "burgers":
        u = U[:, 0]
        ux = Ux[:, 0]
        r = Ut[:, 0] + u * ux
        div = ux
        sq = r * r
    else:
        rho, m, E = U[:, 0], U[:, 1], U[:, 2]
        rho_x, m_x, E_x = Ux[:, 0], Ux[:, 1], Ux[:, 2]
        u = m / rho
        q = u * u * 0.5
        p = (E - m * u * 0.5) * (GAMMA - 1.0)
        H = (E + p) / rho
        g = GAMMA
        r1 = Ut[:, 0] + m_x
        r2 = Ut[:, 1] + (g - 3.0) * q * rho_x + (3.0 - g) * u * m_x \
            + (g - 1.0) * E_x
        r3 = Ut[:, 2] + u * ((g - 1.0) * q - H) * rho_x \
            + (H - 2.0 * (g - 1.0) * q) * m_x + g * u * E_x
        div = (m_x - u * rho_x) / rho
        sq = r1 * r1 + r2 * r2 + r3 * r3
    if weights.entropy_weight_on:
        lam = _residual_weight_var(div, weights.eps_lambda)
        sq = lam * lam * sq
    return vsum(sq) * (1.0 / n)


def characteristic_residual(model, points, family, weights=None):
    """Weighted mean-square characteristic residual (plain number)."""
    w = weights or LossWeights()
    pts = np.asarray(points, dtype=np.float64)
    val = float(_interior_var(model, pts, family, w).value)
    if not np.isfinite(val):
        raise NonFiniteComponentError("interior residual is not finite")
    return val


def _ic_var(model, problem, x_points, ic_time=0.0, ic_target=None):
    x = np.asarray(x_points, dtype=np.float64)
    pts = np.column_stack([x, np.full(x.size, ic_time)])
    U = model.tape_values(pts)
    if ic_target is None:
        phi = problem.initial_condition(x)
        if problem.family == "burgers":
            phi = phi[:, None]
        ic_target = phi
    diff = U - ic_target
    return _mean_sq(diff, x.size)


def _bc_var(model, problem, boundary_pts):
    x_lo, x_hi = problem.domain
    if problem.bc_kind == "periodic":
        t = np.unique(boundary_pts[:, 1])
        lo = np.column_stack([np.full(t.size, x_lo), t])
        hi = np.column_stack([np.full(t.size, x_hi), t])
        diff = model.tape_values(lo) - model.tape_values(hi)
        return _mean_sq(diff, t.size)
    left, right = problem.boundary_values()
    target = np.where((boundary_pts[:, 0] == x_lo)[:, None], left, right)
    diff = model.tape_values(boundary_pts) - target
    return _mean_sq(diff, boundary_pts.shape[0])


def _primitive_on_tape(U):
    rho = U[:, 0]
    m = U[:, 1]
    u = m / rho
    p = (U[:, 2] - m * u * 0.5) * (GAMMA - 1.0)
    return rho, u, p


def _rh_var_euler(model, colloc, weights):
    pts = colloc.rh_points
    if pts.shape[0] == 0:
        return Var(np.asarray(0.0)), 0.0
    dx = colloc.dx_probe
    plus = pts + np.array([dx, 0.0])
    minus = pts - np.array([dx, 0.0])
    U1 = model.tape_values(plus)
    U2 = model.tape_values(minus)
    rho1, u1, p1 = _primitive_on_tape(U1)
    rho2, u2, p2 = _primitive_on_tape(U2)
    lam = rh_indicator("euler", (p1.value, u1.value), (p2.value, u2.value),
                       weights)
    lam2 = lam * lam
    e1 = p1 / ((GAMMA - 1.0) * rho1)
    e2 = p2 / ((GAMMA - 1.0) * rho2)
    du = u1 - u2
    drho = rho1 - rho2
    r1 = rho1 * rho2 * (du * du) - (p1 - p2) * drho
    r2 = rho1 * rho2 * (e1 - e2) - 0.5 * (p1 + p2) * drho
    total = vsum(lam2 * (r1 * r1 + r2 * r2)) * (1.0 / pts.shape[0])
    return total, float(np.max(lam, initial=0.0))


def _rh_var_burgers(model, colloc, problem, weights, shock_cache=None):
    """Jump penalty: detected shock must move at the averaged probe speed.

    Shock positions come from slice scans (held constant inside the loss);
    the gradient flows through the probe-averaged shock speed only.
    """
    ts = colloc.rh_points[:, 1]
    if ts.size == 0:
        return Var(np.asarray(0.0)), {}
    x_lo, x_hi = problem.domain
    scan_x = getattr(colloc, "scan_x", None)
    if scan_x is None:
        scan_x = np.linspace(x_lo, x_hi, 200)
    dx = colloc.dx_probe
    dt = colloc.dt_probe

    if shock_cache is None:
        shock_cache = {}
    if "x1" not in shock_cache:
        x1 = np.full(ts.size, np.nan)
        x2 = np.full(ts.size, np.nan)
        for j, t in enumerate(ts):
            a = detect_shock_location(model, t, scan_x, weights.eps_jump)
            b = detect_shock_location(model, t + dt, scan_x, weights.eps_jump)
            if a is not None and b is not None:
                x1[j], x2[j] = a, b
        shock_cache["x1"] = x1
        shock_cache["x2"] = x2
    x1 = shock_cache["x1"]
    x2 = shock_cache["x2"]

    ok = np.isfinite(x1) & np.isfinite(x2)
    if not ok.any():
        return Var(np.asarray(0.0)), shock_cache
    xs1, xs2, tj = x1[ok], x2[ok], ts[ok]
    plus = np.column_stack([np.clip(xs1 + dx, x_lo, x_hi), tj])
    minus = np.column_stack([np.clip(xs1 - dx, x_lo, x_hi), tj])
    up = model.tape_values(plus)[:, 0]
    um = model.tape_values(minus)[:, 0]
    lam = rh_indicator("burgers", up.value, um.value, weights)
    speed = (up + um) * 0.5
    r = speed * dt + (xs1 - xs2)
    total = vsum((lam * lam) * (r * r)) * (1.0 / ts.size)
    return total, shock_cache


def rh_loss(model, colloc, problem, weights=None, shock_cache=None):
    """Jump-condition penalty (plain number)."""
    w = weights or LossWeights()
    if problem.family == "euler":
        total, _ = _rh_var_euler(model, colloc, w)
    else:
        total, _ = _rh_var_burgers(model, colloc, problem, w, shock_cache)
    return float(total.value)


def _data_var(model, problem, observation, n_fields):
    pt = np.array([[observation.x, observation.t]])
    U = model.tape_values(pt)
    if problem.family == "euler":
        rho, u, p = _primitive_on_tape(U)
        target = np.asarray(observation.value, dtype=np.float64)
        diff2 = (rho - target[0]) ** 2 + (u - target[1]) ** 2 \
            + (p - target[2]) ** 2
        return vsqrt(vsum(diff2))
    diff = U[:, 0] - float(np.atleast_1d(observation.value)[0])
    return vsqrt(vsum(diff * diff))


def assemble_loss(model, problem, colloc, weights=None, observation=None,
                  ic_target=None, ic_time=0.0, shock_cache=None):
    """Total loss and its breakdown.

    Returns ``(total_var, LossBreakdown)``; the breakdown holds plain
    floats and satisfies total = interior + eps_i*ic + eps_b*bc + eps_r*rh
    (+ eps_d*data when an observation is supplied).
    """
    w = weights or LossWeights()
    interior = _interior_var(model, colloc.interior, problem.family, w)
    ic = _ic_var(model, problem, colloc.initial, ic_time, ic_target)
    bc = _bc_var(model, problem, colloc.boundary)
    if w.eps_r > 0:
        if problem.family == "euler":
            rh, _ = _rh_var_euler(model, colloc, w)
        else:
            rh, _ = _rh_var_burgers(model, colloc, problem, w, shock_cache)
    else:
        rh = Var(np.asarray(0.0))

    total = interior + w.eps_i * ic + w.eps_b * bc + w.eps_r * rh
    breakdown = [float(interior.value), float(ic.value), float(bc.value),
                 float(rh.value)]
    data_val = 0.0
    if observation is not None:
        data = _data_var(model, problem, observation, problem.n_fields)
        total = total + w.eps_d * data
        data_val = float(data.value)

    names = ("interior", "ic", "bc", "rh")
    for name, val in zip(names, breakdown):
        if not np.isfinite(val):
            raise NonFiniteComponentError(f"{name} loss is not finite: {val}")
    bd = LossBreakdown(*breakdown, data=data_val, total=float(total.value))
    return total, bd

"""First-order Godunov finite-volume reference solver.

Burgers interfaces use the exact scalar Riemann flux; Euler interfaces use
the exact Riemann solver sampled along x/t = 0.  Time steps are CFL-limited
and clipped to land exactly on the requested output times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conservation import (GAMMA, EulerState, conserved_to_primitive,
                           primitive_to_conserved)
from .riemann import euler_exact_riemann, star_region

__all__ = ["GridSolution", "godunov_reference", "burgers_interface_flux"]


@dataclass
class GridSolution:
    """Cell-centred solution stored at selected time levels."""

    x: np.ndarray          # (nx,) cell centres, strictly increasing
    t: np.ndarray          # (nt,) stored times, strictly increasing
    values: np.ndarray     # (nt, nx, n_fields)

    def __post_init__(self):
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.t) < 0):
            raise ValueError("grids must be increasing")
        if not np.isfinite(self.values).all():
            raise ValueError("non-finite values in grid solution")

    def at_time(self, t):
        i = int(np.argmin(np.abs(self.t - t)))
        if not np.isclose(self.t[i], t, atol=1e-12):
            raise KeyError(f"time {t} not stored (nearest {self.t[i]})")
        return self.values[i]

    def interp_at(self, t, x):
        """Linear interpolation in x at a stored time level."""
        vals = self.at_time(t)
        out = np.empty(np.shape(x) + (vals.shape[1],))
        for c in range(vals.shape[1]):
            out[..., c] = np.interp(x, self.x, vals[:, c])
        return out


def burgers_interface_flux(ul, ur):
    """Exact Godunov flux for the scalar Burgers equation."""
    ul = np.asarray(ul, dtype=np.float64)
    ur = np.asarray(ur, dtype=np.float64)
    shock_speed = 0.5 * (ul + ur)
    shock_state = np.where(shock_speed > 0.0, ul, ur)
    rare_state = np.where(ul >= 0.0, ul, np.where(ur <= 0.0, ur, 0.0))
    u_star = np.where(ul >= ur, shock_state, rare_state)
    return 0.5 * u_star * u_star


_G1 = (GAMMA - 1.0) / (2.0 * GAMMA)
_G2 = (GAMMA + 1.0) / (2.0 * GAMMA)
_G3 = 2.0 * GAMMA / (GAMMA - 1.0)
_G4 = 2.0 / (GAMMA - 1.0)
_G5 = 2.0 / (GAMMA + 1.0)
_G6 = (GAMMA - 1.0) / (GAMMA + 1.0)
_G7 = (GAMMA - 1.0) / 2.0


def _side_f_vec(p, rho_k, p_k, c_k):
    shock = p > p_k
    a = _G5 / rho_k
    b = _G6 * p_k
    sq = np.sqrt(a / (p + b))
    f_s = (p - p_k) * sq
    df_s = sq * (1.0 - 0.5 * (p - p_k) / (p + b))
    pr = np.maximum(p, 1e-300) / p_k
    f_r = _G4 * c_k * (pr ** _G1 - 1.0)
    df_r = (1.0 / (rho_k * c_k)) * pr ** (-_G2)
    return np.where(shock, f_s, f_r), np.where(shock, df_s, df_r)


def _star_pressure_vec(rl, ul, pl, rr, ur, pr, tol=1e-12, max_iter=100):
    """Vectorised star pressure/velocity (Newton with bisection fallback)."""
    cl = np.sqrt(GAMMA * pl / rl)
    cr = np.sqrt(GAMMA * pr / rr)
    du = ur - ul
    if np.any(_G4 * (cl + cr) <= du):
        raise ValueError("vacuum-generating interface data")

    p = np.maximum(1e-10,
                   0.5 * (pl + pr) - 0.125 * du * (rl + rr) * (cl + cr))
    lo = np.full_like(p, 1e-14)
    hi = np.full_like(p, np.inf)
    for _ in range(max_iter):
        fl, dfl = _side_f_vec(p, rl, pl, cl)
        fr, dfr = _side_f_vec(p, rr, pr, cr)
        val = fl + fr + du
        if np.all(np.abs(val) <= tol):
            break
        pos = val > 0
        hi = np.where(pos, np.minimum(hi, p), hi)
        lo = np.where(pos, lo, np.maximum(lo, p))
        with np.errstate(divide="ignore", invalid="ignore"):
            p_new = p - val / (dfl + dfr)
        bad = ~((p_new > lo) & (p_new < hi))
        mid = np.where(np.isfinite(hi), 0.5 * (lo + hi), 2.0 * lo)
        p = np.where(bad, mid, p_new)
    fl, _ = _side_f_vec(p, rl, pl, cl)
    fr, _ = _side_f_vec(p, rr, pr, cr)
    u = 0.5 * (ul + ur) + 0.5 * (fr - fl)
    return p, u


def _euler_interface_flux(left_cons, right_cons):
    """Exact-Riemann Godunov flux at each interface (sampled at xi=0)."""
    rl, ul, pl = conserved_to_primitive(left_cons)
    rr, ur, pr = conserved_to_primitive(right_cons)
    cl = np.sqrt(GAMMA * pl / rl)
    cr = np.sqrt(GAMMA * pr / rr)
    ps, us = _star_pressure_vec(rl, ul, pl, rr, ur, pr)

    rho = np.empty_like(ps)
    u = np.empty_like(ps)
    p = np.empty_like(ps)

    left_side = us >= 0.0
    # left of contact: shock or rarefaction branch
    pratio = ps / pl
    sl = ul - cl * np.sqrt(_G2 * pratio + _G1)
    rho_star_s = rl * (pratio + _G6) / (_G6 * pratio + 1.0)
    c_star = cl * pratio ** _G1
    head, tail = ul - cl, us - c_star
    rho_star_r = rl * pratio ** (1.0 / GAMMA)
    base = np.clip(_G5 + _G6 * ul / cl, 1e-300, None)
    in_fan = left_side & (ps <= pl) & (head < 0) & (tail > 0)
    use_l = left_side & np.where(ps > pl, sl > 0, head > 0)
    use_star = left_side & ~use_l & ~in_fan
    rho = np.where(use_l, rl, np.where(
        in_fan, rl * base ** _G4,
        np.where(ps > pl, rho_star_s, rho_star_r)))
    u = np.where(use_l, ul, np.where(in_fan, _G5 * (cl + _G7 * ul), us))
    p = np.where(use_l, pl, np.where(in_fan, pl * base ** _G3, ps))

    # right of contact
    pratio_r = ps / pr
    sr = ur + cr * np.sqrt(_G2 * pratio_r + _G1)
    rho_star_sr = rr * (pratio_r + _G6) / (_G6 * pratio_r + 1.0)
    c_star_r = cr * pratio_r ** _G1
    head_r, tail_r = ur + cr, us + c_star_r
    rho_star_rr = rr * pratio_r ** (1.0 / GAMMA)
    base_r = np.clip(_G5 - _G6 * ur / cr, 1e-300, None)
    in_fan_r = ~left_side & (ps <= pr) & (tail_r < 0) & (head_r > 0)
    use_r = ~left_side & np.where(ps > pr, sr < 0, head_r < 0)
    use_star_r = ~left_side & ~use_r & ~in_fan_r
    rho = np.where(use_r, rr, np.where(
        in_fan_r, rr * base_r ** _G4,
        np.where(use_star_r, np.where(ps > pr, rho_star_sr, rho_star_rr), rho)))
    u = np.where(use_r, ur, np.where(in_fan_r, _G5 * (-cr + _G7 * ur),
                                     np.where(use_star_r, us, u)))
    p = np.where(use_r, pr, np.where(in_fan_r, pr * base_r ** _G3,
                                     np.where(use_star_r, ps, p)))

    E = 0.5 * rho * u * u + p / (GAMMA - 1.0)
    return np.stack([rho * u, rho * u * u + p, u * (E + p)], axis=-1)


def godunov_reference(problem, nx, cfl=0.9, store_times=None):
    """First-order Godunov solution of ``problem`` on ``nx`` cells.

    ``store_times`` defaults to 11 uniform levels including 0 and the
    horizon; each step is clipped so stored levels are hit exactly.
    """
    if nx < 16:
        raise ValueError("nx must be at least 16")
    if not 0.0 < cfl <= 1.0:
        raise ValueError("cfl must be in (0, 1]")
    x_lo, x_hi = problem.domain
    T = problem.horizon
    if store_times is None:
        store_times = np.linspace(0.0, T, 11)
    store_times = np.sort(np.unique(np.asarray(store_times, dtype=np.float64)))
    if store_times[0] < 0 or store_times[-1] > T + 1e-12:
        raise ValueError("store times outside [0, horizon]")

    dx = (x_hi - x_lo) / nx
    x = x_lo + dx * (np.arange(nx) + 0.5)
    scalar = problem.family == "burgers"

    u0 = problem.initial_condition(x)
    U = u0[:, None].copy() if scalar else u0.copy()
    nf = U.shape[1]

    periodic = problem.bc_kind == "periodic"
    if not periodic:
        bl, br = problem.boundary_values()

    stored = []
    t_now = 0.0
    if np.isclose(store_times[0], 0.0):
        stored.append(U.copy())
        remaining = store_times[1:]
    else:
        remaining = store_times

    for t_target in remaining:
        while t_now < t_target - 1e-14:
            if scalar:
                smax = np.max(np.abs(U[:, 0]))
            else:
                rho, u, p = conserved_to_primitive(U)
                smax = np.max(np.abs(u) + np.sqrt(GAMMA * p / rho))
            dt = cfl * dx / max(smax, 1e-12)
            dt = min(dt, t_target - t_now)

            if periodic:
                Ug = np.vstack([U[-1:], U, U[:1]])
            else:
                Ug = np.vstack([bl[None, :], U, br[None, :]])

            if scalar:
                F = burgers_interface_flux(Ug[:-1, 0], Ug[1:, 0])[:, None]
            else:
                F = _euler_interface_flux(Ug[:-1], Ug[1:])
            U = U - (dt / dx) * (F[1:] - F[:-1])
            t_now += dt
        stored.append(U.copy())

    return GridSolution(x=x, t=store_times, values=np.stack(stored))

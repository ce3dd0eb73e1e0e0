"""Exact Riemann solver for the 1D Euler equations (ideal gas).

Star-region pressure is found by a Newton iteration safeguarded with
bisection, driven to machine-level residuals so the sampled solution can
serve as the error oracle for the shock-tube cases.
"""

from __future__ import annotations

import numpy as np

from .conservation import GAMMA, EulerState

__all__ = ["VacuumError", "star_region", "euler_exact_riemann", "wave_speeds"]

_G1 = (GAMMA - 1.0) / (2.0 * GAMMA)
_G2 = (GAMMA + 1.0) / (2.0 * GAMMA)
_G3 = 2.0 * GAMMA / (GAMMA - 1.0)
_G4 = 2.0 / (GAMMA - 1.0)
_G5 = 2.0 / (GAMMA + 1.0)
_G6 = (GAMMA - 1.0) / (GAMMA + 1.0)
_G7 = (GAMMA - 1.0) / 2.0


class VacuumError(ValueError):
    pass


def _sound_speed(state):
    return np.sqrt(GAMMA * state.p / state.rho)


def _side_function(p, state, c):
    """f_K(p) and its derivative for one side of the star equations."""
    rho_k, _, p_k = state.as_tuple()
    if p > p_k:  # shock branch
        a = _G5 / rho_k
        b = _G6 * p_k
        sq = np.sqrt(a / (p + b))
        f = (p - p_k) * sq
        df = sq * (1.0 - 0.5 * (p - p_k) / (p + b))
    else:  # rarefaction branch
        pr = p / p_k
        f = _G4 * c * (pr ** _G1 - 1.0)
        df = (1.0 / (rho_k * c)) * pr ** (-_G2)
    return f, df


def star_region(left, right, tol=1e-12, max_iter=200):
    """Star pressure and velocity between two states.

    Newton from the primitive-variable guess, falling back to bisection
    whenever an iterate leaves the current bracket.
    """
    cl, cr = _sound_speed(left), _sound_speed(right)
    du = right.u - left.u
    if _G4 * (cl + cr) <= du:
        raise VacuumError("initial states generate vacuum")

    def g(p):
        fl, dfl = _side_function(p, left, cl)
        fr, dfr = _side_function(p, right, cr)
        return fl + fr + du, dfl + dfr

    # primitive-variable (PV) initial guess, clipped positive
    p_pv = 0.5 * (left.p + right.p) - 0.125 * du * (left.rho + right.rho) * (cl + cr)
    p = max(1e-8, p_pv)

    lo, hi = 1e-14, None
    glo, _ = g(lo)
    if glo > 0:
        raise VacuumError("pressure function positive at lower bound")
    p_hi = max(left.p, right.p)
    while True:
        ghi, _ = g(p_hi)
        if ghi >= 0:
            hi = p_hi
            break
        p_hi *= 10.0
        if p_hi > 1e16:
            raise VacuumError("no upper bracket for star pressure")

    for _ in range(max_iter):
        val, dval = g(p)
        if abs(val) <= tol:
            break
        if val > 0:
            hi = p
        else:
            lo = p
        step = val / dval if dval != 0 else np.inf
        p_new = p - step
        if not (lo < p_new < hi):
            p_new = 0.5 * (lo + hi)
        p = p_new
    else:
        raise RuntimeError("star-region iteration did not converge")

    fl, _ = _side_function(p, left, cl)
    fr, _ = _side_function(p, right, cr)
    u = 0.5 * (left.u + right.u) + 0.5 * (fr - fl)
    return p, u


def wave_speeds(left, right):
    """Characteristic speeds of the wave pattern, left to right.

    Returns a dict with the left wave (shock speed or rarefaction
    head/tail), the contact speed, and the right wave.
    """
    cl, cr = _sound_speed(left), _sound_speed(right)
    p_star, u_star = star_region(left, right)
    out = {"contact": u_star}
    if p_star > left.p:
        out["left"] = ("shock",
                       left.u - cl * np.sqrt(_G2 * p_star / left.p + _G1))
    else:
        c_star = cl * (p_star / left.p) ** _G1
        out["left"] = ("fan", left.u - cl, u_star - c_star)
    if p_star > right.p:
        out["right"] = ("shock",
                        right.u + cr * np.sqrt(_G2 * p_star / right.p + _G1))
    else:
        c_star = cr * (p_star / right.p) ** _G1
        out["right"] = ("fan", u_star + c_star, right.u + cr)
    return out


def euler_exact_riemann(left, right, xi):
    """Self-similar solution sampled at xi = x/t; returns an EulerState.

    ``xi`` may be a scalar or an array.
    """
    shape = np.shape(xi)
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    cl, cr = _sound_speed(left), _sound_speed(right)
    p_star, u_star = star_region(left, right)

    rho = np.empty(xi.shape)
    u = np.empty(xi.shape)
    p = np.empty(xi.shape)

    left_side = xi <= u_star
    # -- left of the contact ------------------------------------------------
    if p_star > left.p:  # left shock
        s = left.u - cl * np.sqrt(_G2 * p_star / left.p + _G1)
        rho_star = left.rho * ((p_star / left.p + _G6)
                               / (_G6 * p_star / left.p + 1.0))
        pre = left_side & (xi < s)
        post = left_side & ~(xi < s)
        rho[pre], u[pre], p[pre] = left.rho, left.u, left.p
        rho[post], u[post], p[post] = rho_star, u_star, p_star
    else:  # left rarefaction
        head = left.u - cl
        c_star = cl * (p_star / left.p) ** _G1
        tail = u_star - c_star
        rho_star = left.rho * (p_star / left.p) ** (1.0 / GAMMA)
        outer = left_side & (xi < head)
        fan = left_side & (xi >= head) & (xi < tail)
        inner = left_side & (xi >= tail)
        rho[outer], u[outer], p[outer] = left.rho, left.u, left.p
        base = _G5 + _G6 * (left.u - xi[fan]) / cl
        rho[fan] = left.rho * base ** _G4
        u[fan] = _G5 * (cl + _G7 * left.u + xi[fan])
        p[fan] = left.p * base ** _G3
        rho[inner], u[inner], p[inner] = rho_star, u_star, p_star

    right_side = ~left_side
    # -- right of the contact -----------------------------------------------
    if p_star > right.p:  # right shock
        s = right.u + cr * np.sqrt(_G2 * p_star / right.p + _G1)
        rho_star = right.rho * ((p_star / right.p + _G6)
                                / (_G6 * p_star / right.p + 1.0))
        post = right_side & (xi <= s)
        pre = right_side & ~(xi <= s)
        rho[post], u[post], p[post] = rho_star, u_star, p_star
        rho[pre], u[pre], p[pre] = right.rho, right.u, right.p
    else:  # right rarefaction
        head = right.u + cr
        c_star = cr * (p_star / right.p) ** _G1
        tail = u_star + c_star
        rho_star = right.rho * (p_star / right.p) ** (1.0 / GAMMA)
        inner = right_side & (xi <= tail)
        fan = right_side & (xi > tail) & (xi < head)
        outer = right_side & (xi >= head)
        rho[inner], u[inner], p[inner] = rho_star, u_star, p_star
        base = _G5 - _G6 * (right.u - xi[fan]) / cr
        rho[fan] = right.rho * base ** _G4
        u[fan] = _G5 * (-cr + _G7 * right.u + xi[fan])
        p[fan] = right.p * base ** _G3
        rho[outer], u[outer], p[outer] = right.rho, right.u, right.p

    return EulerState(rho.reshape(shape), u.reshape(shape), p.reshape(shape))

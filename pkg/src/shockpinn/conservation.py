"""Conservation-law cases: fluxes, Jacobians, conversions, exact solutions.

Burgers cases use the closed-form viscosity solutions; the smooth-start case
and the two gas-dynamics shock tubes have no closed form and are served by
the reference solvers instead (``godunov``, ``riemann``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GAMMA = 1.4

BURGERS_CASES = ("B1S", "B2S", "BSm", "BR", "BRS")
EULER_CASES = ("Sod", "Lax")

__all__ = [
    "GAMMA",
    "BURGERS_CASES",
    "EULER_CASES",
    "EulerState",
    "ProblemSpec",
    "NonPhysicalStateError",
    "UnsupportedCaseError",
    "make_problem",
    "flux_and_jacobian",
    "primitive_to_conserved",
    "conserved_to_primitive",
    "internal_energy",
    "enthalpy",
    "euler_jacobian",
    "exact_solution",
    "exact_solution_derivatives",
    "singularities",
]


class NonPhysicalStateError(ValueError):
    pass


class UnsupportedCaseError(ValueError):
    pass


@dataclass
class EulerState:
    """Primitive gas state; density and pressure must stay positive."""

    rho: np.ndarray
    u: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if np.any(self.rho <= 0) or np.any(self.p <= 0):
            raise NonPhysicalStateError(
                f"non-physical state rho={self.rho}, p={self.p}")

    def as_tuple(self):
        return self.rho, self.u, self.p


# ---------------------------------------------------------------------------
# variable conversions and fluxes
# ---------------------------------------------------------------------------

def primitive_to_conserved(rho, u, p):
    """(rho, u, p) -> (rho, rho*u, E) with E = rho*u^2/2 + p/(gamma-1)."""
    rho = np.asarray(rho, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    return np.stack(
        [rho, rho * u, 0.5 * rho * u * u + p / (GAMMA - 1.0)], axis=-1)


def conserved_to_primitive(cons):
    """Inverse of :func:`primitive_to_conserved`; rejects vacuum states."""
    cons = np.asarray(cons, dtype=np.float64)
    rho = cons[..., 0]
    u = cons[..., 1] / rho
    p = (GAMMA - 1.0) * (cons[..., 2] - 0.5 * cons[..., 1] * u)
    if np.any(rho <= 0) or np.any(p <= 0):
        raise NonPhysicalStateError("negative density or pressure")
    return rho, u, p


def internal_energy(state: EulerState):
    """Specific internal energy for an ideal gas, e = p / ((gamma-1) rho)."""
    return state.p / ((GAMMA - 1.0) * state.rho)


def enthalpy(state: EulerState):
    rho, u, p = state.as_tuple()
    E = 0.5 * rho * u * u + p / (GAMMA - 1.0)
    return (E + p) / rho


def euler_jacobian(u, H):
    """Flux Jacobian of the 1D Euler system in conserved variables.

    Row convention (with q = u^2/2):
        [        0                  1            0      ]
        [ (gamma-3) q        (3-gamma) u     gamma-1    ]
        [ u((gamma-1)q - H)  H - 2(gamma-1)q  gamma u   ]
    """
    u = np.asarray(u, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    q = 0.5 * u * u
    g = GAMMA
    z = np.zeros_like(u)
    o = np.ones_like(u)
    A = np.stack([
        np.stack([z, o, z], axis=-1),
        np.stack([(g - 3.0) * q, (3.0 - g) * u, (g - 1.0) * o], axis=-1),
        np.stack([u * ((g - 1.0) * q - H), H - 2.0 * (g - 1.0) * q, g * u],
                 axis=-1),
    ], axis=-2)
    return A


def flux_and_jacobian(family, state):
    """Flux F(U) and characteristic speed F'(U) for one state.

    Burgers: scalar u -> (u^2/2, u).  Euler: :class:`EulerState` ->
    (3-vector flux, 3x3 Jacobian in conserved variables).
    """
    if family == "burgers":
        u = np.asarray(state, dtype=np.float64)
        return 0.5 * u * u, u
    if family == "euler":
        if not isinstance(state, EulerState):
            state = EulerState(*state)
        rho, u, p = state.as_tuple()
        E = 0.5 * rho * u * u + p / (GAMMA - 1.0)
        F = np.stack([rho * u, rho * u * u + p, u * (E + p)], axis=-1)
        return F, euler_jacobian(u, (E + p) / rho)
    raise UnsupportedCaseError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# problem catalogue
# ---------------------------------------------------------------------------

@dataclass
class ProblemSpec:
    case: str
    mu: tuple
    domain: tuple
    horizon: float
    bc_kind: str
    family: str = field(init=False)

    def __post_init__(self):
        if self.case in BURGERS_CASES:
            self.family = "burgers"
        elif self.case in EULER_CASES:
            self.family = "euler"
        else:
            raise UnsupportedCaseError(f"unknown case {self.case!r}")
        self.mu = tuple(float(m) for m in np.atleast_1d(self.mu))
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError(f"bad domain {self.domain}")
        if not self.horizon > 0:
            raise ValueError(f"bad horizon {self.horizon}")
        dom = mu_domain(self.case)
        if len(self.mu) != len(dom):
            raise ValueError(
                f"{self.case} expects {len(dom)} parameters, got {self.mu}")
        for m, (a, b) in zip(self.mu, dom):
            if not a <= m <= b:
                raise ValueError(
                    f"mu={m} outside parameter domain [{a}, {b}] of {self.case}")

    @property
    def n_fields(self):
        return 1 if self.family == "burgers" else 3

    def initial_condition(self, x):
        """phi(x): Burgers scalar, Euler conserved (n, 3)."""
        x = np.asarray(x, dtype=np.float64)
        mu = self.mu
        if self.case == "B1S":
            return np.where(x <= 0.0, mu[0], 0.0)
        if self.case == "B2S":
            return np.where(x <= -0.5, mu[1], np.where(x <= 0.5, mu[0], 0.0))
        if self.case == "BSm":
            return mu[0] * np.sin(2.0 * np.pi * x) + mu[1]
        if self.case == "BR":
            return np.where(x <= 0.0, 0.0, mu[0])
        if self.case == "BRS":
            return np.where((x > -0.5) & (x <= 0.5), mu[0], 0.0)
        left, right = self.riemann_states()
        lc = primitive_to_conserved(*left.as_tuple())
        rc = primitive_to_conserved(*right.as_tuple())
        return np.where((x <= 0.5)[..., None], lc, rc)

    def riemann_states(self):
        """Left/right primitive states of the gas-dynamics tubes."""
        if self.case == "Sod":
            return (EulerState(1.0, 0.0, self.mu[0]),
                    EulerState(0.125, 0.0, 0.1))
        if self.case == "Lax":
            return (EulerState(0.445, 0.698, 3.528),
                    EulerState(self.mu[0], 0.0, 0.571))
        raise UnsupportedCaseError(f"{self.case} is not a Riemann problem")

    def boundary_values(self):
        """Dirichlet targets (left, right); None for periodic cases."""
        if self.bc_kind == "periodic":
            return None
        mu = self.mu
        if self.case == "B1S":
            return np.array([mu[0]]), np.array([0.0])
        if self.case == "B2S":
            return np.array([mu[1]]), np.array([0.0])
        if self.case == "BR":
            return np.array([0.0]), np.array([mu[0]])
        if self.case == "BRS":
            return np.array([0.0]), np.array([0.0])
        left, right = self.riemann_states()
        return (primitive_to_conserved(*left.as_tuple()),
                primitive_to_conserved(*right.as_tuple()))


_DOMAINS = {
    "B1S": ((-1.0, 1.0), 1.0, "dirichlet", ((1.0, 2.0),)),
    "B2S": ((-1.0, 1.5), 1.5, "dirichlet", ((0.5, 1.0), (1.6, 2.0))),
    "BSm": ((0.0, 1.0), 1.0, "periodic", ((0.5, 1.5), (0.1, 0.4))),
    "BR": ((-1.0, 1.0), 1.0, "dirichlet", ((0.5, 1.0),)),
    "BRS": ((-1.0, 1.5), 1.5, "dirichlet", ((0.5, 1.0),)),
    "Sod": ((0.0, 1.0), 0.1, "dirichlet", ((1.0, 2.0),)),
    "Lax": ((0.0, 1.0), 0.13, "dirichlet", ((0.3, 0.7),)),
}


def mu_domain(case):
    try:
        return _DOMAINS[case][3]
    except KeyError:
        raise UnsupportedCaseError(f"unknown case {case!r}") from None


def make_problem(case, mu):
    """ProblemSpec with the catalogue domain/horizon of the named case."""
    domain, horizon, bc_kind, _ = _DOMAINS[case]
    return ProblemSpec(case, tuple(np.atleast_1d(mu)), domain, horizon, bc_kind)


# ---------------------------------------------------------------------------
# closed-form Burgers solutions
# ---------------------------------------------------------------------------

def _b2s_lines(mu, t):
    mu1, mu2 = mu
    t_merge = 2.0 / mu2
    left = 0.5 * ((mu1 + mu2) * t - 1.0)
    right = 0.5 * (mu1 * t + 1.0)
    merged = 0.5 * mu2 * t + (mu1 / mu2 - 0.5)
    return t_merge, left, right, merged


def exact_solution(problem, x, t):
    """Viscosity solution of the piecewise Burgers cases.

    Evaluation exactly on a discontinuity returns the left-limit value.
    Supported cases: B1S, B2S, BR, BRS; others have no closed form.
    """
    if problem.case not in ("B1S", "B2S", "BR", "BRS"):
        raise UnsupportedCaseError(
            f"no closed-form solution for {problem.case}; use a reference solver")
    x, t = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                               np.asarray(t, dtype=np.float64))
    x = x.astype(np.float64)
    t = t.astype(np.float64)
    mu = problem.mu

    if problem.case == "B1S":
        return np.where(x <= 0.5 * mu[0] * t, mu[0], 0.0)

    if problem.case == "B2S":
        mu1, mu2 = mu
        t_merge, left, right, merged = _b2s_lines(mu, t)
        pre = np.where(x <= left, mu2, np.where(x <= right, mu1, 0.0))
        post = np.where(x <= merged, mu2, 0.0)
        return np.where(t < t_merge, pre, post)

    if problem.case == "BR":
        m = mu[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            fan = np.where(t > 0, x / np.where(t > 0, t, 1.0), 0.0)
        out = np.where(x <= 0.0, 0.0, np.where(x < m * t, fan, m))
        return np.where(t == 0.0, problem.initial_condition(x), out)

    # BRS: rarefaction centred at -1/2 plus a right-moving shock from +1/2
    m = mu[0]
    if np.any(t > 2.0 / m):
        raise ValueError("BRS closed form is valid only until the fan reaches "
                         f"the shock at t = {2.0 / m}")
    with np.errstate(divide="ignore", invalid="ignore"):
        fan = np.where(t > 0, (x + 0.5) / np.where(t > 0, t, 1.0), 0.0)
    shock = 0.5 * (m * t + 1.0)
    fan_head = m * t - 0.5
    out = np.where(
        x <= -0.5, 0.0,
        np.where(x < fan_head, fan, np.where(x <= shock, m, 0.0)))
    return np.where(t == 0.0, problem.initial_condition(x), out)


def exact_solution_derivatives(problem, x, t):
    """(u_x, u_t) of the closed-form solutions, almost everywhere."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                               np.asarray(t, dtype=np.float64))
    case = problem.case
    mu = problem.mu
    zeros = np.zeros(x.shape)
    if case in ("B1S", "B2S"):
        return zeros, zeros
    if case == "BR":
        m = mu[0]
        inside = (x > 0) & (x < m * t) & (t > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ux = np.where(inside, 1.0 / np.where(t > 0, t, 1.0), 0.0)
            ut = np.where(inside, -x / np.where(t > 0, t * t, 1.0), 0.0)
        return ux, ut
    if case == "BRS":
        m = mu[0]
        inside = (x > -0.5) & (x < m * t - 0.5) & (t > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ux = np.where(inside, 1.0 / np.where(t > 0, t, 1.0), 0.0)
            ut = np.where(inside, -(x + 0.5) / np.where(t > 0, t * t, 1.0), 0.0)
        return ux, ut
    raise UnsupportedCaseError(f"no closed-form derivatives for {case}")


def singularities(problem, t):
    """x-locations of discontinuities and kinks at time t (closed forms only)."""
    t = float(t)
    mu = problem.mu
    case = problem.case
    if case == "B1S":
        return [0.5 * mu[0] * t]
    if case == "B2S":
        t_merge, left, right, merged = _b2s_lines(mu, t)
        if t < t_merge:
            return [left, right]
        return [merged]
    if case == "BR":
        return [0.0, mu[0] * t]
    if case == "BRS":
        return [-0.5, mu[0] * t - 0.5, 0.5 * (mu[0] * t + 1.0)]
    raise UnsupportedCaseError(
        f"no analytic singularity lines for {case}; derive them numerically")

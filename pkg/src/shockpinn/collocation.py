"""Collocation point sets for residual, initial, boundary and jump terms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

__all__ = ["CollocationSet", "sample_collocation"]

STRATEGIES = ("uniform-grid", "uniform-random", "latin-hypercube")


@dataclass
class CollocationSet:
    """Interior/initial/boundary/jump point sets with probe spacings.

    ``rh_points`` carries the jump-penalty collocation: for gas dynamics
    these are space-time probe centres; for Burgers only the time column is
    used (the x location is re-detected by scanning each slice).
    """

    interior: np.ndarray          # (n, 2) of (x, t)
    initial: np.ndarray           # (n_i,) of x
    boundary: np.ndarray          # (n_b, 2) of (x, t) on the space boundary
    rh_points: np.ndarray         # (n_r, 2)
    dx_probe: float
    dt_probe: float
    scan_x: np.ndarray = None     # Burgers slice-scan grid (None for Euler)

    def __post_init__(self):
        if self.dx_probe <= 0 or self.dt_probe <= 0:
            raise ValueError("probe spacings must be positive")


def _grid_interior(problem, nx, nt):
    x_lo, x_hi = problem.domain
    if nx < 1 or nt < 1:
        raise ValueError(f"uniform grid needs positive counts, got {nx}x{nt}")
    x = np.linspace(x_lo, x_hi, nx + 2)[1:-1]
    t = np.linspace(0.0, problem.horizon, nt + 2)[1:-1]
    X, T = np.meshgrid(x, t, indexing="ij")
    return np.column_stack([X.ravel(), T.ravel()])


def _boundary_points(problem, n):
    x_lo, x_hi = problem.domain
    half = n // 2
    t = np.linspace(0.0, problem.horizon, n - half)
    t2 = np.linspace(0.0, problem.horizon, half)
    return np.vstack([
        np.column_stack([np.full(n - half, x_lo), t]),
        np.column_stack([np.full(half, x_hi), t2]),
    ])


def sample_collocation(problem, strategy, counts, seed=0, rh_mesh=(100, 200),
                       scan_nx=200):
    """Build a :class:`CollocationSet`; deterministic for a fixed seed.

    ``counts`` maps "interior" (int, or (nx, nt) for uniform-grid),
    "initial", "boundary" and "rh" to point counts.

    Gas-dynamics jump probes are drawn without replacement from a uniform
    ``rh_mesh`` and inherit its spacings.  Burgers jump penalties instead
    scan ``scan_nx`` x-points on "rh" uniform time slices, with both probe
    spacings equal to one scan step; probe times keep t + dt inside the
    horizon either way.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    x_lo, x_hi = problem.domain
    T = problem.horizon
    rng = np.random.default_rng(seed)

    n_int = counts.get("interior", 1000)
    n_ic = int(counts.get("initial", 100))
    n_bc = int(counts.get("boundary", 100))
    n_rh = int(counts.get("rh", 0))
    if n_ic < 1 or n_bc < 1:
        raise ValueError("need at least one initial and one boundary point")

    if strategy == "uniform-grid":
        if np.ndim(n_int) == 0:
            side = int(np.sqrt(int(n_int)))
            nx, nt = side, int(np.ceil(int(n_int) / side))
        else:
            nx, nt = (int(v) for v in n_int)
        interior = _grid_interior(problem, nx, nt)
    elif strategy == "uniform-random":
        n_int = int(n_int)
        interior = np.column_stack([
            rng.uniform(x_lo, x_hi, n_int),
            rng.uniform(0.0, T, n_int),
        ])
    else:
        n_int = int(n_int)
        sampler = qmc.LatinHypercube(d=2, seed=rng)
        pts = sampler.random(n_int)
        interior = np.column_stack([
            x_lo + (x_hi - x_lo) * pts[:, 0], T * pts[:, 1]])

    initial = np.linspace(x_lo, x_hi, n_ic)
    boundary = _boundary_points(problem, n_bc)

    scan = None
    if problem.family == "burgers":
        scan = np.linspace(x_lo, x_hi, int(scan_nx))
        dx = dt = float(scan[1] - scan[0])
        if n_rh > 0:
            ts = np.linspace(0.0, T - dt, n_rh)
            rh = np.column_stack([np.full(n_rh, 0.5 * (x_lo + x_hi)), ts])
        else:
            rh = np.empty((0, 2))
    else:
        mx, mt = (int(v) for v in rh_mesh)
        dx = (x_hi - x_lo) / (mx - 1)
        dt = T / (mt - 1)
        if n_rh > 0:
            # mesh nodes with a probe margin in x and headroom in t
            xs = np.linspace(x_lo, x_hi, mx)[1:-1]
            ts = np.linspace(0.0, T, mt)[:-1]
            capacity = xs.size * ts.size
            if n_rh > capacity:
                raise ValueError(
                    f"requested {n_rh} jump probes from a mesh of {capacity}")
            pick = rng.choice(capacity, size=n_rh, replace=False)
            rh = np.column_stack([xs[pick % xs.size], ts[pick // xs.size]])
        else:
            rh = np.empty((0, 2))

    return CollocationSet(interior=interior, initial=initial,
                          boundary=boundary, rh_points=rh,
                          dx_probe=dx, dt_probe=dt, scan_x=scan)

"""Full-order training (with the shock-merge restart) and error evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    import contextlib

    def threadpool_limits(*a, **k):
        return contextlib.nullcontext()

from .autodiff import backward
from .collocation import CollocationSet, sample_collocation
from .conservation import (ProblemSpec, exact_solution, make_problem,
                           mu_domain, singularities)
from .godunov import godunov_reference
from .losses import (LossWeights, assemble_loss, detect_two_shocks,
                     detect_shock_location)
from .models import FullOrderModel, TimeSplitModel
from .network import init_adam, adam_step, init_mlp
from .presets import case_defaults
from .riemann import euler_exact_riemann, wave_speeds

__all__ = [
    "TrainConfig",
    "TrainResult",
    "ShocksNotConvergingError",
    "predict_merge_time",
    "train_epinn",
    "run_adam",
    "evaluate_errors",
    "reference_values",
    "singular_points",
]


class ShocksNotConvergingError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 25000
    lr: float = 1e-3
    loss_tol: float = 0.0          # stop when total <= tol (0 disables)
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    redetect_every: int = 100      # Burgers shock re-scan cadence
    log_every: int = 100
    seed: int = 0
    # two-network restart (shock-merging case)
    probe_epochs: int = 5000
    probe_horizon_frac: float = 0.4
    stage2_epochs: int = 40000
    stage2_lr: float = 1e-4


@dataclass
class TrainResult:
    model: object
    history: list
    final: object
    epochs_run: int
    best_loss: float
    converged: bool
    warning: str = ""
    wall_time: float = 0.0
    merge_time: float = None


def predict_merge_time(L, L_T0, T0):
    """Merge time from similar triangles: L_T0/L = (t_m - T0)/t_m."""
    if T0 <= 0:
        raise ValueError("probe time must be positive")
    if not 0.0 < L_T0 < L:
        raise ShocksNotConvergingError(
            f"separation {L_T0} not shrinking from {L}")
    return T0 * L / (L - L_T0)


def run_adam(loss_builder, groups, epochs, loss_tol=0.0, log_every=100,
             on_epoch=None):
    """Shared optimisation loop.

    ``groups`` is a list of (params, lr) pairs; ``loss_builder(epoch)``
    returns (total_var, LossBreakdown).  Keeps the best parameters seen and
    restores them at the end.  Returns (history, best_loss, epochs_run,
    final_breakdown).
    """
    groups = [(params, lr, init_adam(params)) for params, lr in groups]
    all_params = [p for params, _, _ in groups for p in params]
    history = []
    best_loss = np.inf
    best_snapshot = None
    bd = None
    epochs_run = 0
    with threadpool_limits(limits=1, user_api="blas"):
        for epoch in range(epochs):
            total, bd = loss_builder(epoch)
            epochs_run = epoch + 1
            if bd.total < best_loss:
                best_loss = bd.total
                best_snapshot = [p.value.copy() for p in all_params]
            if epoch % log_every == 0 or epoch == epochs - 1:
                history.append([epoch] + bd.as_row())
            if on_epoch is not None:
                on_epoch(epoch, bd)
            if loss_tol > 0.0 and bd.total <= loss_tol:
                break
            grads = backward(total, all_params)
            i = 0
            for params, lr, state in groups:
                adam_step(params, grads[i:i + len(params)], state, lr)
                i += len(params)
    if best_snapshot is not None:
        for p, snap in zip(all_params, best_snapshot):
            p.value[...] = snap
    return history, best_loss, epochs_run, bd


def _train_segment(model, problem, colloc, weights, config, epochs, lr,
                   ic_target=None, ic_time=0.0):
    cache = {"shock": None}

    def build(epoch):
        if problem.family == "burgers" and weights.eps_r > 0:
            if cache["shock"] is None or epoch % config.redetect_every == 0:
                cache["shock"] = {}
        return assemble_loss(model, problem, colloc, weights,
                             ic_target=ic_target, ic_time=ic_time,
                             shock_cache=cache["shock"])

    return run_adam(build, [(model.trainable(), lr)], epochs,
                    loss_tol=config.loss_tol, log_every=config.log_every)


def _segment_collocation(colloc, problem, t0, t1, segment_problem):
    """Restrict a collocation set to the time slab [t0, t1]."""
    pts = colloc.interior
    scale = (t1 - t0) / problem.horizon
    interior = np.column_stack([pts[:, 0], t0 + pts[:, 1] * scale])
    boundary = np.column_stack(
        [colloc.boundary[:, 0], t0 + colloc.boundary[:, 1] * scale])
    if problem.family == "burgers":
        dt = colloc.dt_probe
        n_rh = colloc.rh_points.shape[0]
        ts = np.linspace(t0, max(t0, t1 - dt), n_rh) if n_rh else np.empty(0)
        rh = np.column_stack([np.full(ts.size, colloc.rh_points[0, 0])
                              if ts.size else np.empty(0), ts])
    else:
        keep = (colloc.rh_points[:, 1] >= t0) & (colloc.rh_points[:, 1] < t1)
        rh = colloc.rh_points[keep]
    return CollocationSet(interior=interior, initial=colloc.initial,
                          boundary=boundary, rh_points=rh,
                          dx_probe=colloc.dx_probe, dt_probe=colloc.dt_probe,
                          scan_x=colloc.scan_x)


def _ic_jump_positions(problem, n_scan=2001):
    x_lo, x_hi = problem.domain
    x = np.linspace(x_lo, x_hi, n_scan)
    u = problem.initial_condition(x)
    if u.ndim > 1:
        u = u[:, 0]
    jumps = np.abs(np.diff(u))
    idx = np.nonzero(jumps > 0.1)[0]
    return [0.5 * (x[i] + x[i + 1]) for i in idx]


def train_epinn(problem, layer_sizes=None, weights=None, colloc=None,
                config=None, seed=0):
    """Train the full-order entropy-aware network for one parameter value.

    All unset pieces fall back to the per-case defaults.  The two-shock
    case runs the probe/predict/restart sequence: a short plain run on a
    reduced horizon locates the two shocks, the merge time is extrapolated,
    and separate networks are trained before and after it (the second takes
    its initial data from the first, which stays frozen).
    """
    t_start = time.perf_counter()
    d = case_defaults(problem.case)
    if layer_sizes is None:
        layer_sizes = d["layer_sizes"]
    if weights is None:
        weights = LossWeights(**d["weights"])
    if config is None:
        config = TrainConfig(epochs=d["epochs"], lr=d["lr"],
                             loss_tol=d["loss_tol"], seed=seed)
    if colloc is None:
        colloc = sample_collocation(problem, d["strategy"], d["counts"],
                                    seed=seed, rh_mesh=d.get("rh_mesh",
                                                             (100, 200)))

    if problem.case != "B2S":
        model = FullOrderModel(init_mlp(layer_sizes, seed=seed))
        hist, best, n_run, bd = _train_segment(
            model, problem, colloc, weights, config, config.epochs, config.lr)
        converged = config.loss_tol > 0.0 and best <= config.loss_tol
        warn = "" if (converged or config.loss_tol == 0.0) \
            else "stopped at epoch budget above loss tolerance"
        return TrainResult(model=model, history=hist, final=bd,
                           epochs_run=n_run, best_loss=best,
                           converged=converged or config.loss_tol == 0.0,
                           warning=warn,
                           wall_time=time.perf_counter() - t_start)

    return _train_two_shock(problem, layer_sizes, weights, colloc, config,
                            seed, t_start)


def _train_two_shock(problem, layer_sizes, weights, colloc, config, seed,
                     t_start):
    mu2_lo = mu_domain("B2S")[1][0]
    T0 = config.probe_horizon_frac * (2.0 / mu2_lo)
    probe_problem = ProblemSpec(problem.case, problem.mu, problem.domain,
                                T0, problem.bc_kind)
    probe_colloc = _segment_collocation(colloc, problem, 0.0, T0,
                                        probe_problem)
    probe = FullOrderModel(init_mlp(layer_sizes, seed=seed))
    _train_segment(probe, probe_problem, probe_colloc, weights.vanilla(),
                   config, config.probe_epochs, config.lr)

    jumps = _ic_jump_positions(problem)
    warn = ""
    t_merge = None
    if len(jumps) >= 2:
        L = jumps[-1] - jumps[0]
        scan = colloc.scan_x if colloc.scan_x is not None \
            else np.linspace(*problem.domain, 200)
        found = detect_two_shocks(probe, T0, scan, weights.eps_jump)
        if found is not None:
            L_T0 = found[1] - found[0]
            try:
                t_merge = predict_merge_time(L, L_T0, T0)
            except ShocksNotConvergingError as err:
                warn = f"merge prediction failed: {err}"
    if t_merge is None or not 0.0 < t_merge < problem.horizon:
        if not warn:
            warn = "could not locate two converging shocks; trained a single network"
        model = FullOrderModel(init_mlp(layer_sizes, seed=seed))
        hist, best, n_run, bd = _train_segment(
            model, problem, colloc, weights, config, config.epochs, config.lr)
        return TrainResult(model=model, history=hist, final=bd,
                           epochs_run=n_run, best_loss=best, converged=True,
                           warning=warn,
                           wall_time=time.perf_counter() - t_start)

    # stage 1: up to the merge; stage 2: beyond it, initialised from stage 1
    prob1 = ProblemSpec(problem.case, problem.mu, problem.domain, t_merge,
                        problem.bc_kind)
    colloc1 = _segment_collocation(colloc, problem, 0.0, t_merge, prob1)
    seg1 = FullOrderModel(init_mlp(layer_sizes, seed=seed))
    h1, best1, n1, bd1 = _train_segment(
        seg1, prob1, colloc1, weights, config, config.epochs, config.lr)

    colloc2 = _segment_collocation(colloc, problem, t_merge, problem.horizon,
                                   problem)
    seg2 = FullOrderModel(init_mlp(layer_sizes, seed=seed + 1))
    ic_pts = np.column_stack([colloc2.initial,
                              np.full(colloc2.initial.size, t_merge)])
    ic_target = seg1.eval_values(ic_pts)  # frozen stage-1 terminal data
    h2, best2, n2, bd2 = _train_segment(
        seg2, problem, colloc2, weights, config, config.stage2_epochs,
        config.stage2_lr, ic_target=ic_target, ic_time=t_merge)

    model = TimeSplitModel([seg1, seg2], [t_merge])
    history = list(h1) + [[r[0] + n1] + r[1:] for r in h2]
    return TrainResult(model=model, history=history, final=bd2,
                       epochs_run=n1 + n2, best_loss=best2, converged=True,
                       warning=warn, merge_time=t_merge,
                       wall_time=time.perf_counter() - t_start)


# ---------------------------------------------------------------------------
# error evaluation against the oracles
# ---------------------------------------------------------------------------

def reference_values(problem, x, t, godunov=None):
    """Oracle solution on a grid: closed form, exact Riemann, or Godunov."""
    x = np.asarray(x, dtype=np.float64)
    if problem.family == "euler":
        left, right = problem.riemann_states()
        if t <= 0:
            return problem.initial_condition(x)[:, 0]
        xi = (x - 0.5) / t
        return euler_exact_riemann(left, right, xi).rho
    if problem.case == "BSm":
        if godunov is None:
            godunov = godunov_reference(problem, nx=4000,
                                        store_times=[0.0, t])
        return godunov.interp_at(t, x)[:, 0]
    return exact_solution(problem, x, t)


def singular_points(problem, times, godunov=None):
    """(x, t) cloud tracing discontinuities and kinks, for exclusion radii."""
    pts = []
    if problem.family == "euler":
        left, right = problem.riemann_states()
        speeds = []
        ws = wave_speeds(left, right)
        for key in ("left", "right"):
            w = ws[key]
            speeds.extend(w[1:])
        speeds.append(ws["contact"])
        for t in times:
            for s in speeds:
                pts.append((0.5 + s * t, t))
    elif problem.case == "BSm":
        if godunov is None:
            godunov = godunov_reference(problem, nx=1000)
        for i, t in enumerate(godunov.t):
            u = godunov.values[i, :, 0]
            jumps = np.abs(np.diff(u))
            big = jumps > 5.0 * np.median(jumps) + 1e-3
            for j in np.nonzero(big)[0]:
                pts.append((0.5 * (godunov.x[j] + godunov.x[j + 1]), t))
    else:
        for t in times:
            for xs in singularities(problem, t):
                pts.append((xs, t))
    return np.asarray(pts) if pts else np.empty((0, 2))


def evaluate_errors(model, problem, x=None, times=None, exclusion=0.02,
                    reference=None, godunov=None):
    """Discrete L1/L2 errors on a space-time grid, plus smooth-region
    variants excluding points within ``exclusion`` of the singular curves.

    Gas-dynamics errors are measured on the density field.  Returns a dict
    with keys L1, L2, smooth_L1, smooth_L2, rel_L2, rel_smooth_L2.
    """
    x_lo, x_hi = problem.domain
    if x is None:
        x = np.linspace(x_lo, x_hi, 401)
    x = np.asarray(x, dtype=np.float64)
    if times is None:
        times = [problem.horizon]
    times = [float(t) for t in np.atleast_1d(times)]

    curve_t = np.linspace(0.0, problem.horizon, 200)
    cloud = singular_points(problem, curve_t, godunov=godunov)

    errs, refs, dists = [], [], []
    for t in times:
        pts = np.column_stack([x, np.full(x.size, t)])
        u_model = model.eval_values(pts)[:, 0]
        if reference is not None:
            u_ref = np.asarray(reference(x, t), dtype=np.float64)
        else:
            u_ref = reference_values(problem, x, t, godunov=godunov)
        errs.append(u_model - u_ref)
        refs.append(u_ref)
        if cloud.size:
            d = np.min(np.hypot(pts[:, None, 0] - cloud[None, :, 0],
                                pts[:, None, 1] - cloud[None, :, 1]), axis=1)
        else:
            d = np.full(x.size, np.inf)
        dists.append(d)

    err = np.concatenate(errs)
    ref = np.concatenate(refs)
    dist = np.concatenate(dists)
    keep = dist > exclusion

    def _l1(e):
        return float(np.mean(np.abs(e))) if e.size else np.nan

    def _l2(e):
        return float(np.sqrt(np.mean(e * e))) if e.size else np.nan

    out = {
        "L1": _l1(err),
        "L2": _l2(err),
        "smooth_L1": _l1(err[keep]),
        "smooth_L2": _l2(err[keep]),
    }
    out["rel_L2"] = out["L2"] / max(_l2(ref), 1e-300)
    out["rel_smooth_L2"] = out["smooth_L2"] / max(_l2(ref[keep]), 1e-300)
    return out

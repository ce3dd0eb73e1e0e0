"""Reduced-order model: frozen snapshot networks behind trainable affine
space-time transforms, combined by trainable output coefficients.

Online training adjusts only the transforms and coefficients (7 numbers per
snapshot per time segment in 1D); the offline stage grows the snapshot set
greedily at the worst-approximated parameter.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, backward, leaf, make_multi_node, stack_cols
from .collocation import sample_collocation
from .conservation import make_problem
from .losses import LossWeights, assemble_loss
from .models import FullOrderModel, TimeSplitModel
from .network import forward, input_derivatives, tape_frozen_values, \
    tape_frozen_with_jacobian
from .presets import case_defaults
from .training import TrainConfig, run_adam, train_epinn

__all__ = [
    "TransformLayer",
    "ReducedOrderModel",
    "OnlineConfig",
    "OnlineResult",
    "GreedyState",
    "transform_apply",
    "reduced_forward",
    "reduced_loss",
    "online_train",
    "greedy_offline",
]


def _wrap(values, lo, hi):
    """Identity on [lo, hi]; modulo wrap onto [lo, hi) outside."""
    inside = (values >= lo) & (values <= hi)
    return np.where(inside, values, lo + np.mod(values - lo, hi - lo))


@dataclass
class TransformLayer:
    """Affine space-time map followed by a wrap onto the target box."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        d1 = self.b.size
        if self.W.shape != (d1, d1):
            raise ValueError("W must be square and match b")
        if not (np.isfinite(self.W).all() and np.isfinite(self.b).all()):
            raise ValueError("non-finite transform parameters")

    @classmethod
    def identity(cls, d1=2):
        return cls(np.eye(d1), np.zeros(d1))


def transform_apply(layer, points, domain, horizon):
    """Map points through the affine layer and wrap into domain x [0, T].

    ``horizon`` may be a (t_lo, t_hi) pair to wrap onto a time slice.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    raw = pts @ layer.W.T + layer.b
    t_lo, t_hi = horizon if np.ndim(horizon) else (0.0, float(horizon))
    out = np.empty_like(raw)
    out[:, 0] = _wrap(raw[:, 0], domain[0], domain[1])
    out[:, 1] = _wrap(raw[:, 1], t_lo, t_hi)
    return out if np.ndim(points) == 2 else out[0]


def _tape_wrap(z_var, domain, span):
    """Taped wrap: constant shift with unit derivative almost everywhere."""
    raw = z_var.value
    wrapped = np.column_stack([
        _wrap(raw[:, 0], domain[0], domain[1]),
        _wrap(raw[:, 1], span[0], span[1]),
    ])
    (out,) = make_multi_node([z_var], [wrapped], lambda g: (g,))
    return out


@dataclass
class _Segment:
    nets: list                  # one frozen Mlp per snapshot
    span: tuple                 # target time range
    source_span: list           # snapshot time range per snapshot
    W: list = None              # leaf Vars (2, 2)
    b: list = None              # leaf Vars (2,)
    c: list = None              # leaf Vars ()

    def init_params(self):
        self.W, self.b, self.c = [], [], []
        n = len(self.nets)
        t0, t1 = self.span
        for (s0, s1) in self.source_span:
            ratio = (s1 - s0) / (t1 - t0)
            W = np.eye(2)
            b = np.zeros(2)
            W[1, 1] = ratio
            b[1] = s0 - t0 * ratio
            self.W.append(leaf(W))
            self.b.append(leaf(b))
            self.c.append(leaf(np.asarray(1.0 / n)))


def _segment_nets(snapshot_model):
    """(nets, spans) of one snapshot; handles time-split snapshots."""
    if isinstance(snapshot_model, TimeSplitModel):
        bounds = [0.0] + snapshot_model.boundaries + [None]
        return [seg.net for seg in snapshot_model.segments], bounds
    return [snapshot_model.net], [0.0, None]


class ReducedOrderModel:
    """Snapshot superposition with per-snapshot transforms per time segment."""

    def __init__(self, snapshots, snapshot_mus, target_mu, problem,
                 boundaries=None):
        if not snapshots:
            raise ValueError("reduced model needs at least one snapshot")
        self.problem = problem
        self.snapshot_mus = [tuple(np.atleast_1d(m)) for m in snapshot_mus]
        self.target_mu = tuple(np.atleast_1d(target_mu))
        T = problem.horizon

        split = [isinstance(s, TimeSplitModel) for s in snapshots]
        if any(split):
            snap_bounds = [
                (s.boundaries[0] if isinstance(s, TimeSplitModel) else None)
                for s in snapshots]
            known = [b for b in snap_bounds if b is not None]
            if boundaries is None:
                boundaries = [float(np.mean(known))]
            self.boundaries = list(boundaries)
            spans = [(0.0, self.boundaries[0]), (self.boundaries[0], T)]
            self.segments = []
            for k, span in enumerate(spans):
                nets, src = [], []
                for s, bnd in zip(snapshots, snap_bounds):
                    segs, _ = _segment_nets(s)
                    if bnd is None:  # unsplit snapshot reused in both slabs
                        nets.append(segs[0])
                        src.append((0.0, T))
                    else:
                        nets.append(segs[min(k, len(segs) - 1)])
                        src.append((0.0, bnd) if k == 0 else (bnd, T))
                seg = _Segment(nets=nets, span=span, source_span=src)
                seg.init_params()
                self.segments.append(seg)
        else:
            self.boundaries = []
            seg = _Segment(nets=[s.net for s in snapshots], span=(0.0, T),
                           source_span=[(0.0, T)] * len(snapshots))
            seg.init_params()
            self.segments = [seg]

    @property
    def n_snapshots(self):
        return len(self.snapshot_mus)

    @property
    def n_fields(self):
        return self.segments[0].nets[0].n_outputs

    def n_trainable(self):
        return sum(w.value.size + b.value.size + 1
                   for seg in self.segments
                   for w, b in zip(seg.W, seg.b))

    def transform_params(self):
        out = []
        for seg in self.segments:
            for w, b in zip(seg.W, seg.b):
                out.extend([w, b])
        return out

    def coeff_params(self):
        return [c for seg in self.segments for c in seg.c]

    def trainable(self):
        return self.transform_params() + self.coeff_params()

    def _segment_for(self, t):
        idx = np.searchsorted(self.boundaries, t, side="right")
        return self.segments[int(idx) if np.ndim(idx) == 0 else 0]

    def _segment_masks(self, pts):
        idx = np.searchsorted(self.boundaries, pts[:, 1], side="right")
        return [(seg, idx == i) for i, seg in enumerate(self.segments)]

    # -- plain evaluation ---------------------------------------------------
    def eval_values(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.zeros((pts.shape[0], self.n_fields))
        for seg, mask in self._segment_masks(pts):
            if not mask.any():
                continue
            sub = pts[mask]
            acc = np.zeros((sub.shape[0], self.n_fields))
            for net, w, b, c, src in zip(seg.nets, seg.W, seg.b, seg.c,
                                         seg.source_span):
                layer = TransformLayer(w.value, b.value)
                z = transform_apply(layer, sub, self.problem.domain, src)
                acc += float(c.value) * forward(net, z)
            out[mask] = acc
        return out

    # -- taped evaluation ---------------------------------------------------
    def _tape_segment(self, seg, pts, with_derivs):
        x = pts[:, 0]
        t = pts[:, 1]
        val = None
        vx = None
        vt = None
        for net, w, b, c, src in zip(seg.nets, seg.W, seg.b, seg.c,
                                     seg.source_span):
            zx = w[0, 0] * x + w[0, 1] * t + b[0]
            zt = w[1, 0] * x + w[1, 1] * t + b[1]
            z = _tape_wrap(stack_cols([zx, zt]), self.problem.domain, src)
            if with_derivs:
                N, Jx, Jt = tape_frozen_with_jacobian(net, z)
                px = Jx * w[0, 0] + Jt * w[1, 0]
                pt = Jx * w[0, 1] + Jt * w[1, 1]
                vx = c * px if vx is None else vx + c * px
                vt = c * pt if vt is None else vt + c * pt
            else:
                N = tape_frozen_values(net, z)
            val = c * N if val is None else val + c * N
        return (val, vx, vt) if with_derivs else val

    def tape_values(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if len(self.segments) == 1:
            return self._tape_segment(self.segments[0], pts, False)
        raise NotImplementedError(
            "taped evaluation crosses segments; train per segment")

    def tape_values_and_derivs(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if len(self.segments) == 1:
            return self._tape_segment(self.segments[0], pts, True)
        raise NotImplementedError(
            "taped evaluation crosses segments; train per segment")

    def segment_view(self, k):
        """Single-segment facade used when training split models."""
        return _SegmentView(self, k)


class _SegmentView:
    def __init__(self, parent, k):
        self.parent = parent
        self.seg = parent.segments[k]
        self.problem = parent.problem

    @property
    def n_fields(self):
        return self.parent.n_fields

    def eval_values(self, points):
        return self.parent.eval_values(points)

    def tape_values(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self.parent._tape_segment(self.seg, pts, False)

    def tape_values_and_derivs(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self.parent._tape_segment(self.seg, pts, True)

    def trainable(self):
        return [v for w, b in zip(self.seg.W, self.seg.b) for v in (w, b)] \
            + list(self.seg.c)


def reduced_forward(model, points):
    """Plain evaluation of the reduced ansatz."""
    return model.eval_values(points)


def reduced_loss(model, problem, colloc, weights=None, **kw):
    """Loss of the reduced ansatz; same structure as the full-order loss."""
    return assemble_loss(model, problem, colloc, weights, **kw)


@dataclass
class OnlineConfig:
    online_epochs: int = 1000        # total budget M2 (both stages)
    stage1_epochs: int = 0           # M1: transforms only, coefficients frozen
    lr_transform_stage1: float = 1e-5
    lr_transform: float = 1e-5
    lr_coeff: float = 1e-3
    tol: float = 0.0                 # delta: stage-2 stopping tolerance
    stage1_weights: LossWeights = None
    weights: LossWeights = None
    redetect_every: int = 100
    log_every: int = 100

    @classmethod
    def for_case(cls, case, tol=0.0):
        d = case_defaults(case)["reduced"]
        w2 = d["stage2_weights"]
        w1 = d["stage1_weights"]
        return cls(
            online_epochs=d["online_epochs"],
            stage1_epochs=d["stage1_epochs"],
            lr_transform_stage1=d["lr_transform_stage1"],
            lr_transform=d["lr_transform"],
            lr_coeff=d["lr_coeff"],
            tol=tol,
            stage1_weights=LossWeights(**w1) if w1 else None,
            weights=LossWeights(**w2),
        )


@dataclass
class OnlineResult:
    model: ReducedOrderModel
    indicator: float
    history: list
    epochs_run: int
    converged: bool
    wall_time: float = 0.0


def _online_train_segment(target, problem, colloc, cfg, ic_target=None,
                          ic_time=0.0):
    """Two-stage optimisation of one segment's transforms/coefficients."""
    cache = {"shock": None}
    weights2 = cfg.weights or LossWeights()

    def builder(weights):
        def build(epoch):
            if problem.family == "burgers" and weights.eps_r > 0:
                if cache["shock"] is None or epoch % cfg.redetect_every == 0:
                    cache["shock"] = {}
            return assemble_loss(target, problem, colloc, weights,
                                 ic_target=ic_target, ic_time=ic_time,
                                 shock_cache=cache["shock"])
        return build

    transforms = [v for v in target.trainable() if v.value.ndim > 0]
    coeffs = [v for v in target.trainable() if v.value.ndim == 0]

    history = []
    epochs_total = 0
    if cfg.stage1_epochs > 0:
        w1 = cfg.stage1_weights or weights2
        h1, _, n1, _ = run_adam(builder(w1),
                                [(transforms, cfg.lr_transform_stage1)],
                                min(cfg.stage1_epochs, cfg.online_epochs),
                                log_every=cfg.log_every)
        history.extend(h1)
        epochs_total += n1
    remaining = cfg.online_epochs - epochs_total
    best = np.inf
    bd = None
    if remaining > 0:
        h2, best, n2, bd = run_adam(
            builder(weights2),
            [(transforms, cfg.lr_transform), (coeffs, cfg.lr_coeff)],
            remaining, loss_tol=cfg.tol, log_every=cfg.log_every)
        history.extend([[r[0] + epochs_total] + r[1:] for r in h2])
        epochs_total += n2
    if bd is None:
        _, bd = assemble_loss(target, problem, colloc, weights2,
                              ic_target=ic_target, ic_time=ic_time)
        best = bd.total
    return history, best, epochs_total, bd


def online_train(model, problem, colloc=None, config=None):
    """Algorithm of the online stage: freeze coefficients at 1/n and align
    the transforms, then co-train with per-group learning rates until the
    loss tolerance or the epoch budget is met.  The terminal total loss is
    returned as the error indicator."""
    t0 = time.perf_counter()
    cfg = config or OnlineConfig.for_case(problem.case)
    d = case_defaults(problem.case)["reduced"]
    if colloc is None:
        colloc = sample_collocation(problem, d["strategy"], d["counts"],
                                    seed=0)

    if len(model.segments) == 1:
        history, best, n_run, bd = _online_train_segment(
            model, problem, colloc, cfg)
        indicator = bd.total
    else:
        # segment-wise, transferring terminal data across the boundary
        from .conservation import ProblemSpec
        from .training import _segment_collocation
        history = []
        n_run = 0
        indicator = 0.0
        prev_view = None
        for k, seg in enumerate(model.segments):
            t_lo, t_hi = seg.span
            sub_problem = ProblemSpec(problem.case, problem.mu,
                                      problem.domain, t_hi, problem.bc_kind)
            sub_colloc = _segment_collocation(colloc, problem, t_lo, t_hi,
                                              sub_problem)
            view = model.segment_view(k)
            if k == 0:
                ic_target, ic_time = None, 0.0
            else:
                x_ic = sub_colloc.initial
                pts = np.column_stack([x_ic, np.full(x_ic.size, t_lo)])
                ic_target = model.eval_values(pts)  # previous segment output
                ic_time = t_lo
            h, best, n_k, bd = _online_train_segment(
                view, sub_problem if k == 0 else problem, sub_colloc, cfg,
                ic_target=ic_target, ic_time=ic_time)
            history.extend([[r[0] + n_run] + r[1:] for r in h])
            n_run += n_k
            indicator = max(indicator, bd.total)
            prev_view = view

    converged = cfg.tol > 0.0 and indicator <= cfg.tol
    return OnlineResult(model=model, indicator=float(indicator),
                        history=history, epochs_run=n_run,
                        converged=converged or cfg.tol == 0.0,
                        wall_time=time.perf_counter() - t0)


@dataclass
class GreedyState:
    selected: list
    indicators: dict
    train_set: list
    tol: float
    max_neurons: int
    log: list = field(default_factory=list)


def greedy_offline(case, train_set, mu1=None, max_neurons=3, tol=0.0,
                   full_trainer=None, online_config=None, colloc=None,
                   sweep_epochs=200, seed=0):
    """Greedy snapshot selection (offline stage).

    Trains a full network at the seed parameter, then repeatedly online-
    trains the current reduced model at every candidate (with a shortened
    sweep budget), picks the worst indicator, and trains a new snapshot
    there.  Stops at ``max_neurons`` snapshots or when the worst indicator
    falls below ``tol``.
    """
    train_set = [tuple(np.atleast_1d(m)) for m in train_set]
    if not train_set:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    if mu1 is None:
        mu1 = train_set[int(rng.integers(len(train_set)))]
    else:
        mu1 = tuple(np.atleast_1d(mu1))
    if full_trainer is None:
        def full_trainer(mu):
            return train_epinn(make_problem(case, mu), seed=seed)

    snapshots = []
    mus = []
    state = GreedyState(selected=[], indicators={}, train_set=train_set,
                        tol=tol, max_neurons=max_neurons)

    result = full_trainer(mu1)
    snapshots.append(result.model)
    mus.append(mu1)
    state.selected.append(mu1)

    while len(snapshots) < max_neurons:
        indicators = {}
        for mu in train_set:
            if mu in state.selected:
                continue
            problem = make_problem(case, mu)
            reduced = ReducedOrderModel(snapshots, mus, mu, problem)
            cfg = online_config or OnlineConfig.for_case(case)
            sweep_cfg = OnlineConfig(**{**cfg.__dict__})
            sweep_cfg.online_epochs = min(sweep_epochs, cfg.online_epochs)
            sweep_cfg.stage1_epochs = min(cfg.stage1_epochs,
                                          sweep_cfg.online_epochs // 2)
            out = online_train(reduced, problem, colloc=colloc,
                               config=sweep_cfg)
            indicators[mu] = out.indicator
        if not indicators:
            break
        state.indicators = dict(indicators)
        worst = max(indicators.values())
        state.log.append([len(snapshots) + 1, None, worst,
                          float(np.mean(list(indicators.values())))])
        if tol > 0.0 and worst <= tol:
            break
        # argmax with deterministic ties: smallest candidate index
        mu_next = None
        for mu in train_set:
            if mu in indicators and indicators[mu] == worst:
                mu_next = mu
                break
        state.log[-1][1] = mu_next
        result = full_trainer(mu_next)
        snapshots.append(result.model)
        mus.append(mu_next)
        state.selected.append(mu_next)

    return snapshots, mus, state

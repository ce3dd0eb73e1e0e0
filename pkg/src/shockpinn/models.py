"""Model wrappers sharing one evaluation protocol.

Every trainable or reference surrogate exposes:

- ``eval_values(points)``: plain ndarray evaluation,
- ``tape_values(points)``: taped evaluation (a Var),
- ``tape_values_and_derivs(points)``: taped (U, U_x, U_t),
- ``trainable()``: leaf variables (empty for frozen stand-ins).

so the loss assembly is identical for full networks, reduced models and
exact-solution stand-ins.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Var
from .conservation import exact_solution, exact_solution_derivatives
from .network import TapedNetwork, forward, input_derivatives

__all__ = ["FullOrderModel", "TimeSplitModel", "ExactSolutionModel"]


class FullOrderModel:
    """A dense network under training."""

    def __init__(self, net):
        self.net = net
        self.taped = TapedNetwork(net)

    @property
    def n_fields(self):
        return self.net.n_outputs

    def eval_values(self, points):
        return forward(self.net, points)

    def eval_derivatives(self, points):
        return input_derivatives(self.net, points)

    def tape_values(self, points):
        return self.taped.values(points)

    def tape_values_and_derivs(self, points):
        return self.taped.values_and_derivatives(points)

    def trainable(self):
        return self.taped.params


class TimeSplitModel:
    """Stage models glued at fixed time boundaries (shock-merge restarts).

    ``boundaries`` are the interior split times; segment i covers
    [boundaries[i-1], boundaries[i]) with the last segment closed.
    """

    def __init__(self, segments, boundaries):
        if len(segments) != len(boundaries) + 1:
            raise ValueError("need one more segment than boundaries")
        self.segments = list(segments)
        self.boundaries = [float(b) for b in boundaries]

    @property
    def n_fields(self):
        return self.segments[0].n_fields

    def segment_index(self, t):
        return int(np.searchsorted(self.boundaries, t, side="right"))

    def eval_values(self, points):
        pts = np.asarray(points, dtype=np.float64)
        idx = np.searchsorted(self.boundaries, pts[:, 1], side="right")
        out = np.empty((pts.shape[0], self.n_fields))
        for i, seg in enumerate(self.segments):
            m = idx == i
            if m.any():
                out[m] = seg.eval_values(pts[m])
        return out

    def tape_values(self, points):
        raise NotImplementedError(
            "time-split models are trained one segment at a time")

    tape_values_and_derivs = tape_values

    def trainable(self):
        out = []
        for seg in self.segments:
            out.extend(seg.trainable())
        return out


class ExactSolutionModel:
    """Closed-form solution posing as a model (oracle stand-in)."""

    def __init__(self, problem):
        self.problem = problem
        if problem.family != "burgers":
            raise ValueError("exact stand-ins exist for Burgers cases only")

    n_fields = 1

    def eval_values(self, points):
        pts = np.asarray(points, dtype=np.float64)
        u = exact_solution(self.problem, pts[:, 0], pts[:, 1])
        return u[:, None]

    def tape_values(self, points):
        return Var(self.eval_values(points))

    def tape_values_and_derivs(self, points):
        pts = np.asarray(points, dtype=np.float64)
        ux, ut = exact_solution_derivatives(self.problem, pts[:, 0], pts[:, 1])
        return (Var(self.eval_values(points)),
                Var(ux[:, None]), Var(ut[:, None]))

    def trainable(self):
        return []

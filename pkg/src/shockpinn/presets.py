"""Per-case default configurations (network, collocation, budgets, weights)."""

from __future__ import annotations

from .losses import LossWeights

__all__ = ["case_defaults"]

# full-order defaults per case; "reduced" holds the online-stage settings
_DEFAULTS = {
    "burgers": {
        "layer_sizes": (2, 20, 20, 20, 20, 20, 1),
        "strategy": "uniform-grid",
        "counts": {"interior": (99, 199), "initial": 100, "boundary": 100,
                   "rh": 50},
        "epochs": 25000,
        "lr": 1e-3,
        "loss_tol": 0.0,
        "weights": dict(eps_i=10.0, eps_b=10.0, eps_r=100.0),
        "reduced": {
            "online_epochs": 1000,
            "stage1_epochs": 0,
            "lr_transform_stage1": 1e-5,
            "lr_transform": 1e-3,
            "lr_coeff": 1e-3,
            "counts": {"interior": (60, 60), "initial": 100, "boundary": 100,
                       "rh": 50},
            "strategy": "uniform-grid",
            "stage1_weights": None,
            "stage2_weights": dict(eps_i=10.0, eps_b=10.0, eps_r=100.0),
        },
    },
    "Sod": {
        "layer_sizes": (2, 60, 60, 60, 60, 60, 60, 3),
        "strategy": "uniform-random",
        "counts": {"interior": 5000, "initial": 100, "boundary": 100,
                   "rh": 100},
        "rh_mesh": (100, 200),
        "epochs": 30000,
        "lr": 1e-3,
        "loss_tol": 1e-5,
        "weights": dict(eps_i=10.0, eps_b=10.0, eps_r=100.0),
        "reduced": {
            "online_epochs": 3000,
            "stage1_epochs": 1000,
            "lr_transform_stage1": 1e-5,
            "lr_transform": 1e-5,
            "lr_coeff": 1e-3,
            "counts": {"interior": 3000, "initial": 100, "boundary": 100,
                       "rh": 100},
            "strategy": "uniform-random",
            "stage1_weights": dict(eps_i=1.0, eps_b=1.0, eps_r=0.0,
                                   entropy_weight_on=False),
            "stage2_weights": dict(eps_i=10.0, eps_b=10.0, eps_r=100.0),
        },
    },
    "Lax": {
        "layer_sizes": (2, 60, 60, 60, 60, 60, 60, 3),
        "strategy": "latin-hypercube",
        "counts": {"interior": 30000, "initial": 1000, "boundary": 1000,
                   "rh": 1000},
        "rh_mesh": (100, 200),
        "epochs": 20000,
        "lr": 1e-3,
        "loss_tol": 0.0,
        "weights": dict(eps_i=10.0, eps_b=10.0, eps_r=100.0),
        "reduced": {
            "online_epochs": 2000,
            "stage1_epochs": 800,
            "lr_transform_stage1": 1e-5,
            "lr_transform": 1e-5,
            "lr_coeff": 1e-3,
            "counts": {"interior": 3000, "initial": 200, "boundary": 200,
                       "rh": 200},
            "strategy": "latin-hypercube",
            "stage1_weights": dict(eps_i=1.0, eps_b=1.0, eps_r=0.0,
                                   entropy_weight_on=False),
            "stage2_weights": dict(eps_i=1.0, eps_b=1.0, eps_r=10.0),
        },
    },
}

# two-network restart budgets for the shock-merging case
_B2S_EXTRA = {
    "epochs": 60000,
    "stage2_epochs": 40000,
    "stage2_lr": 1e-4,
    "probe_epochs": 5000,
    "reduced_online_epochs": 6000,
}


def case_defaults(case):
    """Default settings for a case; Burgers cases share one template."""
    if case in _DEFAULTS:
        base = _DEFAULTS[case]
    else:
        base = _DEFAULTS["burgers"]
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    out["reduced"] = {k: (dict(v) if isinstance(v, dict) else v)
                      for k, v in base["reduced"].items()}
    if case == "B2S":
        out.update({k: v for k, v in _B2S_EXTRA.items()
                    if k not in ("reduced_online_epochs",)})
        out["reduced"]["online_epochs"] = _B2S_EXTRA["reduced_online_epochs"]
    return out


def default_weights(case, stage=None):
    d = case_defaults(case)
    if stage == 1:
        cfg = d["reduced"]["stage1_weights"] or d["weights"]
    elif stage == 2:
        cfg = d["reduced"]["stage2_weights"]
    else:
        cfg = d["weights"]
    return LossWeights(**cfg)

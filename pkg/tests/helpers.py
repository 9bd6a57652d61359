"""Finite-difference oracles and small experiment configs shared by the tests."""

from typing import Any, Callable, Dict

import numpy as np


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.array(x, dtype=float, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        up = f(x)
        flat[i] = saved - h
        down = f(x)
        flat[i] = saved
        out[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def tiny_linear_dict(**overrides: Any) -> Dict[str, Any]:
    """A seconds-long known-sigma linear experiment; keyword overrides replace whole sections."""
    data: Dict[str, Any] = {
        "name": "tiny_linear",
        "family": {"name": "linear_known_sigma", "p": 2, "sigma": 1.0, "truth": [1.0, 0.5]},
        "n": 30,
        "replicates": 2,
        "seed": 7,
        "network": {"layer_widths": [4, 8, 2], "activation": "tanh"},
        "energy": {"variant": "efi_default", "eta": 1.0, "lambda": 1.0},
        "schedule": {"C_eps": 1.0, "c_eps": 1000.0, "C_gamma": 1.0, "c_gamma": 1000.0},
        "prior": {"enabled": False},
        "run": {"burnin": 5, "iterations": 20, "thin": 2},
        "methods": ["efi"],
    }
    data.update(overrides)
    return data

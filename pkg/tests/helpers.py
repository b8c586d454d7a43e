import numpy as np


def open_gates(model, log_alpha: float = 10.0):
    for gp in model.parameters():
        gp.log_alpha = log_alpha
    return model


def close_gates(model):
    return open_gates(model, -10.0)


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        out.flat[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out

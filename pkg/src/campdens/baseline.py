"""Structure-area baseline: robust linear regression of chip population.

The fit runs in standardized coordinates (zero-mean, unit-variance feature
and target) so that the Huber threshold and step size are unit-free, then
maps the coefficients back to persons and square meters.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FitError

# smallest step before further halving cannot change a float64 parameter
MIN_STEP = 1e-30


@dataclass(frozen=True)
class FitConfig:
    delta: float = 1.35
    max_iters: int = 10_000
    tol: float = 1e-10
    learning_rate: float = 0.1

    def __post_init__(self):
        for name in ("delta", "max_iters", "tol", "learning_rate"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise FitError(f"FitConfig.{name} must be positive, got {v!r}")


@dataclass(frozen=True)
class HuberModel:
    slope: float
    intercept: float
    delta: float
    feature_mean: float
    feature_std: float
    target_mean: float
    target_std: float

    def __post_init__(self):
        if not (self.feature_std > 0 and self.target_std > 0 and self.delta > 0):
            raise FitError("HuberModel requires positive feature_std, target_std and delta")


def huber_loss(residual, delta):
    """0.5 r^2 inside [-delta, delta], linear with matching slope outside."""
    r = np.abs(np.asarray(residual, dtype=float))
    out = np.where(r <= delta, 0.5 * r * r, delta * (r - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


def huber_psi(residual, delta):
    """Derivative of :func:`huber_loss` with respect to the residual."""
    return np.clip(np.asarray(residual, dtype=float), -delta, delta)


def huber_objective(params, x, y, delta) -> float:
    """Mean Huber loss of ``y - (w*x + b)`` for ``params = (w, b)``."""
    w, b = params
    return float(np.mean(huber_loss(y - (w * x + b), delta)))


def huber_gradient(params, x, y, delta) -> np.ndarray:
    w, b = params
    psi = huber_psi(y - (w * x + b), delta)
    return np.array([-np.mean(psi * x), -np.mean(psi)])


def _standardize(v):
    mean = float(np.mean(v))
    std = float(np.std(v))
    return mean, std


def fit_huber(samples: Sequence[tuple[float, float]], cfg: FitConfig | None = None, trace: list | None = None) -> HuberModel:
    """Fit population ~ structure_area under Huber loss.

    ``samples`` holds ``(structure_area, population)`` pairs. Full-batch
    gradient descent; a step that does not lower the objective is rejected
    and the step size halved. Accepted objective values are appended to
    ``trace`` when one is given.
    """
    cfg = cfg or FitConfig()
    data = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(data) < 2:
        raise FitError(f"need at least 2 samples, got {len(data)}")
    if not np.isfinite(data).all():
        raise FitError("samples contain non-finite values")
    x_raw, y_raw = data[:, 0], data[:, 1]
    x_mean, x_std = _standardize(x_raw)
    if x_std <= 0 or np.ptp(x_raw) == 0:
        raise FitError("structure_area is constant across samples; slope is unidentifiable")
    y_mean, y_std = _standardize(y_raw)
    if y_std <= 0:
        # constant target: any positive scale gives the same (flat) fit
        y_std = 1.0
    x = (x_raw - x_mean) / x_std
    y = (y_raw - y_mean) / y_std

    params = np.zeros(2)
    f = huber_objective(params, x, y, cfg.delta)
    if trace is not None:
        trace.append(f)
    lr = float(cfg.learning_rate)
    converged = False
    for _ in range(int(cfg.max_iters)):
        g = huber_gradient(params, x, y, cfg.delta)
        if not np.any(g):
            converged = True
            break
        cand = params - lr * g
        fc = huber_objective(cand, x, y, cfg.delta)
        if fc < f:
            rel = (f - fc) / f if f > 0 else 0.0
            params, f = cand, fc
            if trace is not None:
                trace.append(f)
            if rel < cfg.tol:
                converged = True
                break
        else:
            lr *= 0.5
            if lr < MIN_STEP:
                converged = True
                break
    if not converged:
        raise FitError(f"Huber fit did not converge in {cfg.max_iters} iterations (objective {f:.6g})", objective=f)

    w, b = params
    slope = y_std * w / x_std
    intercept = y_mean + y_std * b - slope * x_mean
    return HuberModel(float(slope), float(intercept), float(cfg.delta), x_mean, x_std, y_mean, y_std)


def predict(model: HuberModel, structure_area):
    """Chip population from structure area, clamped at zero."""
    out = np.maximum(0.0, model.slope * np.asarray(structure_area, dtype=float) + model.intercept)
    return float(out) if out.ndim == 0 else out


def save_model(path, model: HuberModel):
    Path(path).write_text(json.dumps(asdict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> HuberModel:
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        vals = {k: float(rec[k]) for k in HuberModel.__dataclass_fields__}
    except (KeyError, TypeError, ValueError) as exc:
        raise FitError(f"{path}: malformed model file ({exc})") from None
    if not all(math.isfinite(v) for v in vals.values()):
        raise FitError(f"{path}: non-finite model parameter")
    return HuberModel(**vals)

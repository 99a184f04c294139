"""L1-regularized linear regression by cyclic coordinate descent.

Minimizes (1/(2N)) * sum((y_i - X_i.w - b)^2) + lambda * sum(|w_j|).
Each coordinate update is the exact 1-D minimizer via soft-thresholding,

    w_j <- S(rho_j, lambda) / z_j,   rho_j = (1/N) sum_i x_ij r_i^(-j),
                                     z_j   = (1/N) sum_i x_ij^2,

where r^(-j) is the residual with coordinate j's contribution removed and
S(rho, lam) = sign(rho) * max(|rho| - lam, 0). In non-negative mode the update
is clamped to max(0, (rho_j - lambda) / z_j). The intercept is unpenalized and
refit to mean(y - Xw) after every sweep. Convergence: max coordinate change
below tol, or the sweep cap.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import Standardizer, standardize

DEFAULT_LAMBDA = 0.1
DEFAULT_TOL = 1e-8
# Correlated near-square designs at tiny lambda can need ~30k sweeps for the
# 1e-8 coordinate tolerance; typical standardized fits converge in tens.
DEFAULT_MAX_SWEEPS = 100_000


@dataclass
class RegressionModel:
    w: np.ndarray
    b: float
    lam: float
    non_negative: bool
    standardizer: Standardizer | None = None
    feature_names: list[str] = field(default_factory=list)
    objective_trace: list[float] = field(default_factory=list)
    converged: bool = True
    meta: dict = field(default_factory=dict)


def soft_threshold(rho: float, lam: float) -> float:
    if rho > lam:
        return rho - lam
    if rho < -lam:
        return rho + lam
    return 0.0


def objective(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float) -> float:
    r = y - X @ w - b
    n = X.shape[0]
    return float((r @ r) / (2 * n) + lam * np.abs(w).sum())


def _cd_sweeps(X, z, w, b, r, lam, non_negative, tol, max_sweeps):
    """Cyclic coordinate sweeps at a fixed lambda; returns the per-sweep trace."""
    n = X.shape[0]
    trace: list[float] = []
    converged = False
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(X.shape[1]):
            if z[j] == 0.0:
                continue
            col = X[:, j]
            old = w[j]
            if old != 0.0:
                r += col * old
            rho = float(col @ r) / n
            if non_negative:
                new = max(0.0, (rho - lam) / z[j])
            else:
                new = soft_threshold(rho, lam) / z[j]
            if new != 0.0:
                r -= col * new
            w[j] = new
            max_delta = max(max_delta, abs(new - old))
        b_shift = float(r.mean())
        b += b_shift
        r -= b_shift
        max_delta = max(max_delta, abs(b_shift))
        trace.append(float((r @ r) / (2 * n) + lam * np.abs(w).sum()))
        if max_delta < tol:
            converged = True
            break
    return w, b, r, trace, converged


def fit(
    X,
    y,
    lam: float = DEFAULT_LAMBDA,
    non_negative: bool = False,
    *,
    standardizer: Standardizer | None = None,
    feature_names: list[str] | None = None,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> RegressionModel:
    """Cyclic coordinate descent, warm-started; deterministic for fixed inputs."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible shapes X{X.shape}, y{y.shape}")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in the training data")
    if lam < 0:
        raise ValueError("lambda must be non-negative")

    n, d = X.shape
    z = (X * X).mean(axis=0)
    w = np.zeros(d)
    b = float(y.mean())
    r = y - b
    # Deterministic warm start down a short lambda path (glmnet-style): cold
    # cyclic descent at small lambda on correlated columns can need far more
    # sweeps than the cap, while the optimum itself is start-independent.
    if lam > 0.0:
        lam_entry = float(np.abs(X.T @ r).max()) / n
        if lam_entry > lam:
            for stage in np.geomspace(lam_entry, lam, 10)[:-1]:
                w, b, r, _, _ = _cd_sweeps(
                    X, z, w, b, r, float(stage), non_negative, tol, min(1000, max_sweeps)
                )
    w, b, r, trace, converged = _cd_sweeps(X, z, w, b, r, lam, non_negative, tol, max_sweeps)
    if not converged:
        warnings.warn(
            f"coordinate descent hit the {max_sweeps}-sweep cap without converging",
            stacklevel=2,
        )
    return RegressionModel(
        w=w,
        b=b,
        lam=lam,
        non_negative=non_negative,
        standardizer=standardizer,
        feature_names=list(feature_names) if feature_names is not None else [],
        objective_trace=trace,
        converged=converged,
    )


def predict(model: RegressionModel, g_raw) -> float:
    """Standardize a raw session sum with the embedded statistics, then w.g + b."""
    g = np.asarray(g_raw, dtype=np.float64)
    if g.shape != model.w.shape:
        raise ValueError(f"feature vector shape {g.shape} does not match model {model.w.shape}")
    g_tilde = standardize(g, model.standardizer) if model.standardizer is not None else g
    return float(model.w @ g_tilde + model.b)


def standardized_weights(model: RegressionModel) -> np.ndarray:
    """w divided elementwise by the training standard deviations (masked s)."""
    if model.standardizer is None:
        return model.w.copy()
    return model.w / model.standardizer.s


def kkt_residual(X, y, model: RegressionModel) -> float:
    """Largest optimality violation of the fitted (w, b) on (X, y).

    For active coordinates the residual gradient must sit on the penalty
    boundary; for inactive ones it must lie inside it. The intercept adds
    |mean(r)|. A converged fit keeps this near zero.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    r = y - X @ model.w - model.b
    grad = (X.T @ r) / n
    worst = abs(float(r.mean()))
    for j in range(X.shape[1]):
        if np.all(X[:, j] == 0.0):
            continue
        wj = model.w[j]
        gj = float(grad[j])
        if model.non_negative:
            violation = abs(gj - model.lam) if wj > 0 else max(0.0, gj - model.lam)
        else:
            if wj > 0:
                violation = abs(gj - model.lam)
            elif wj < 0:
                violation = abs(gj + model.lam)
            else:
                violation = max(0.0, abs(gj) - model.lam)
        worst = max(worst, violation)
    return worst


def model_to_dict(model: RegressionModel) -> dict:
    std = model.standardizer
    return {
        "feature_names": list(model.feature_names),
        "w": [float(v) for v in model.w],
        "b": float(model.b),
        "lambda": float(model.lam),
        "non_negative": bool(model.non_negative),
        "m": [float(v) for v in std.m] if std is not None else None,
        "s": [float(v) for v in std.s] if std is not None else None,
        "mask": [bool(v) for v in std.mask] if std is not None else None,
        "n_train": std.n_train if std is not None else None,
        "protocol": model.meta.get("protocol"),
        "feature_mode": model.meta.get("feature_mode"),
        "dimension": model.meta.get("dimension"),
        "converged": bool(model.converged),
        "objective_trace_tail": [float(v) for v in model.objective_trace[-10:]],
    }


def model_to_json(model: RegressionModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=2) + "\n"


def save_model(model: RegressionModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path: str | Path) -> RegressionModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    standardizer = None
    if doc.get("m") is not None:
        standardizer = Standardizer(
            m=np.asarray(doc["m"], dtype=np.float64),
            s=np.asarray(doc["s"], dtype=np.float64),
            mask=np.asarray(doc["mask"], dtype=bool),
            n_train=int(doc.get("n_train") or 0),
        )
    meta = {key: doc.get(key) for key in ("protocol", "feature_mode", "dimension") if doc.get(key)}
    return RegressionModel(
        w=np.asarray(doc["w"], dtype=np.float64),
        b=float(doc["b"]),
        lam=float(doc["lambda"]),
        non_negative=bool(doc["non_negative"]),
        standardizer=standardizer,
        feature_names=list(doc["feature_names"]),
        objective_trace=list(doc.get("objective_trace_tail", [])),
        converged=bool(doc.get("converged", True)),
        meta=meta,
    )

"""Logistic meta-learner stacking the three base models.

The stacker is an unregularized logistic regression fit by Newton
iterations (IRLS) on the validation records' predictors (one-hot
categorical, standardized) concatenated with the three base-model
probabilities. If the solve degenerates (perfect separation), it falls
back to a small l2 ridge (1e-6) and logs a notice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .common import OneHotEncoder, Standardizer, check_features, log_loss, sigmoid
from .mlp import categorical_column_indices

logger = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-8
MAX_ITERATIONS = 10_000
RIDGE_FALLBACK = 1e-6


@dataclass
class StackerModel:
    feature_names: tuple
    base_names: tuple
    categorical_columns: tuple
    encoder: OneHotEncoder
    scaler: Standardizer
    coefficients: np.ndarray   # over standardized design columns
    intercept: float
    coef_stderr: np.ndarray
    ridge_used: float
    n_iterations: int

    def design(self, features, base_probs) -> np.ndarray:
        features = check_features(features, len(self.feature_names))
        base_probs = np.atleast_2d(np.asarray(base_probs, dtype=np.float64))
        if base_probs.shape != (features.shape[0], len(self.base_names)):
            raise DataError(
                f"base_probs must be (n, {len(self.base_names)}), got {base_probs.shape}"
            )
        encoded = self.encoder.transform(features)
        return self.scaler.transform(np.concatenate([encoded, base_probs], axis=1))

    def decision_function(self, features, base_probs) -> np.ndarray:
        return self.design(features, base_probs) @ self.coefficients + self.intercept

    def predict_proba(self, features, base_probs) -> np.ndarray:
        return sigmoid(self.decision_function(features, base_probs))


def _irls(z: np.ndarray, y: np.ndarray, ridge: float):
    """Newton/IRLS for logistic regression with intercept.

    Returns (beta, intercept, stderr, iterations); raises LinAlgError or
    FloatingPointError on degenerate geometry so callers can fall back.
    """
    n, d = z.shape
    design = np.concatenate([np.ones((n, 1)), z], axis=1)
    beta = np.zeros(d + 1)
    prev_loss = np.inf
    penalty = ridge * np.eye(d + 1)
    penalty[0, 0] = 0.0  # never penalize the intercept
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        p = sigmoid(design @ beta)
        w = p * (1 - p)
        hessian = design.T @ (design * w[:, None]) + penalty
        grad = design.T @ (y - p) - penalty @ beta
        step = np.linalg.solve(hessian, grad)
        if not np.all(np.isfinite(step)):
            raise np.linalg.LinAlgError("non-finite Newton step")
        # Backtrack if the step overshoots (rare; keeps descent monotone).
        scale = 1.0
        loss = log_loss(y, p)
        for _ in range(30):
            candidate = beta + scale * step
            cand_loss = log_loss(y, sigmoid(design @ candidate))
            if cand_loss <= loss or not np.isfinite(cand_loss):
                break
            scale *= 0.5
        beta = beta + scale * step
        new_loss = log_loss(y, sigmoid(design @ beta))
        if not np.isfinite(new_loss):
            raise np.linalg.LinAlgError("non-finite loss")
        if abs(prev_loss - new_loss) < CONVERGENCE_TOL:
            prev_loss = new_loss
            break
        prev_loss = new_loss
    p = sigmoid(design @ beta)
    w = p * (1 - p)
    hessian = design.T @ (design * w[:, None]) + penalty
    cov = np.linalg.inv(hessian)
    stderr = np.sqrt(np.diag(cov))
    return beta, stderr, iterations


def train_stacker(validation, base_probs, seed: int = 0,
                  base_names=("rf", "gbm", "mlp"),
                  categorical_features=("LCSEC",)) -> StackerModel:
    """Fit the meta-learner on validation features + base probabilities.

    `seed` is accepted for interface uniformity; the fit itself is a
    deterministic convex optimization.
    """
    del seed
    base_probs = np.column_stack([np.asarray(p, dtype=np.float64) for p in base_probs]) \
        if isinstance(base_probs, (list, tuple)) else np.asarray(base_probs, dtype=np.float64)
    y = validation.labels.astype(np.float64)
    if base_probs.shape != (y.size, len(base_names)):
        raise DataError(
            f"base_probs must be (n, {len(base_names)}), got {base_probs.shape}"
        )
    feature_names = tuple(validation.feature_names)
    cat_cols = categorical_column_indices(feature_names, categorical_features)
    encoder = OneHotEncoder.fit(validation.features, cat_cols)
    encoded = encoder.transform(validation.features)
    design_raw = np.concatenate([encoded, base_probs], axis=1)
    scaler = Standardizer.fit(design_raw)
    z = scaler.transform(design_raw)

    ridge_used = 0.0
    try:
        beta, stderr, iterations = _irls(z, y, ridge=0.0)
    except np.linalg.LinAlgError:
        logger.info("stacker fit degenerate (likely perfect separation); "
                    "refitting with l2 ridge %g", RIDGE_FALLBACK)
        ridge_used = RIDGE_FALLBACK
        beta, stderr, iterations = _irls(z, y, ridge=RIDGE_FALLBACK)

    return StackerModel(
        feature_names=feature_names,
        base_names=tuple(base_names),
        categorical_columns=cat_cols,
        encoder=encoder,
        scaler=scaler,
        coefficients=beta[1:],
        intercept=float(beta[0]),
        coef_stderr=stderr[1:],
        ridge_used=ridge_used,
        n_iterations=iterations,
    )


@dataclass
class EnsembleModel:
    """Three base learners plus the logistic stacker and, once
    calibrated, the classification thresholds."""

    rf: object
    gbm: object
    mlp: object
    stacker: StackerModel
    thresholds: object = None  # ThresholdSet, attached by calibration

    @property
    def feature_names(self):
        return self.stacker.feature_names

    def base_probabilities(self, features) -> np.ndarray:
        return np.column_stack([
            self.rf.predict_proba(features),
            self.gbm.predict_proba(features),
            self.mlp.predict_proba(features),
        ])

    def predict_proba(self, features) -> np.ndarray:
        return self.stacker.predict_proba(features, self.base_probabilities(features))

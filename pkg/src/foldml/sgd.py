"""Stochastic gradient descent over a family of convex objectives: least
squares, lasso, logistic loss, hinge loss, and low-rank matrix completion.

Updates follow x <- x - alpha * N * G_i(x), where G_i is the gradient of a
single term and the N factor makes it an unbiased estimate of the full
gradient. The in-epoch loop is deliberately serial (seeded shuffle, one
term at a time); parallelism is reserved for full-objective evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import special

from .errors import DataError, DimensionError, DivergenceError
from .foldcore import FoldSpec, run_parallel

VECTOR_OBJECTIVES = ("least_squares", "lasso", "logistic", "svm_hinge")
OBJECTIVES = VECTOR_OBJECTIVES + ("recommendation",)


@dataclass(frozen=True)
class Objective:
    """A convex objective to minimize.

    mu weights the regularizer (lasso L1, recommendation Frobenius); rank
    is the factorization rank, recommendation only.
    """

    kind: str
    mu: float = 0.0
    rank: Optional[int] = None

    def __post_init__(self):
        if self.kind not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.kind!r}; pick one of {OBJECTIVES}")
        if self.mu < 0.0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.kind == "recommendation" and (self.rank is None or self.rank < 1):
            raise ValueError("recommendation requires rank >= 1")


@dataclass
class SgdModel:
    """Coefficient vector for the vector objectives, or an (L, R) factor
    pair for recommendation, plus step-schedule bookkeeping."""

    x: Optional[np.ndarray] = None
    L: Optional[np.ndarray] = None      # (rank, n_rows) row factors
    R: Optional[np.ndarray] = None      # (rank, n_cols) column factors
    epoch: int = 0
    alpha0: float = 1.0

    def copy(self):
        return SgdModel(
            x=None if self.x is None else self.x.copy(),
            L=None if self.L is None else self.L.copy(),
            R=None if self.R is None else self.R.copy(),
            epoch=self.epoch,
            alpha0=self.alpha0,
        )


class RecGradient(NamedTuple):
    """Single-entry recommendation gradient; touches one row factor and one
    column factor only."""

    i: int
    j: int
    dL: np.ndarray
    dR: np.ndarray


class TraceEntry(NamedTuple):
    epoch: int
    objective: float
    alpha: float


def term_gradient(obj, model, example, n_terms=1, row_counts=None, col_counts=None):
    """Gradient (a valid subgradient at hinge/L1 kinks) of one term.

    Vector objectives take example = (u, y); recommendation takes
    (i, j, value). Lasso amortizes mu over n_terms; recommendation
    amortizes mu over each row/column's observation count so that summing
    the per-term gradients recovers the full regularizer gradient.
    """
    if obj.kind == "recommendation":
        i, j, value = example
        i, j = int(i), int(j)
        L, R = model.L, model.R
        if not (0 <= i < L.shape[1]) or not (0 <= j < R.shape[1]):
            raise DataError(f"factor index ({i}, {j}) out of range")
        Li = L[:, i]
        Rj = R[:, j]
        e = float(Li @ Rj) - float(value)
        ni = int(row_counts[i]) if row_counts is not None else 1
        nj = int(col_counts[j]) if col_counts is not None else 1
        dL = 2.0 * e * Rj + (2.0 * obj.mu / ni) * Li
        dR = 2.0 * e * Li + (2.0 * obj.mu / nj) * Rj
        return RecGradient(i, j, dL, dR)

    u, y = example
    u = np.asarray(u, dtype=np.float64)
    x = model.x
    if u.shape != x.shape:
        raise DimensionError(f"example shape {u.shape} does not match model {x.shape}")
    y = float(y)
    if obj.kind in ("logistic", "svm_hinge") and y not in (-1.0, 1.0):
        raise DataError(f"labels for {obj.kind} must be -1 or +1, got {y}")
    # a diverging model can overflow here; the step's finite check reports it
    with np.errstate(over="ignore", invalid="ignore"):
        if obj.kind == "least_squares":
            return 2.0 * (float(x @ u) - y) * u
        if obj.kind == "lasso":
            return 2.0 * (float(x @ u) - y) * u + (obj.mu / n_terms) * np.sign(x)
        if obj.kind == "logistic":
            return (-y * float(special.expit(-y * float(x @ u)))) * u
        # svm_hinge: zero outside the active margin, sign(0) kink uses -y*u
        if 1.0 - y * float(x @ u) > 0.0:
            return -y * u
        return np.zeros_like(x)


def sgd_step(model, g, alpha, n_terms):
    """One update model - alpha * n_terms * g; returns a new model."""
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if n_terms < 1:
        raise ValueError(f"n_terms must be >= 1, got {n_terms}")
    out = model.copy()
    _step_inplace(out, g, alpha, n_terms)
    return out


def _step_inplace(model, g, alpha, n_terms):
    scale = alpha * n_terms
    # overflow here is exactly the divergence we detect and report
    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(g, RecGradient):
            model.L[:, g.i] -= scale * g.dL
            model.R[:, g.j] -= scale * g.dR
            if not (np.all(np.isfinite(model.L[:, g.i])) and np.all(np.isfinite(model.R[:, g.j]))):
                raise DivergenceError(
                    "non-finite factor update", epoch=model.epoch, alpha=alpha
                )
        else:
            model.x -= scale * g
            if not np.all(np.isfinite(model.x)):
                raise DivergenceError(
                    "non-finite coefficients", epoch=model.epoch, alpha=alpha
                )
    return model


def _check_pm1_labels(y, kind):
    bad = (y != -1.0) & (y != 1.0)
    if bad.any():
        raise DataError(f"labels for {kind} must be -1 or +1, got {y[bad][0]}")


def _rec_indices(data):
    feats = data.features
    if feats.shape[1] != 2:
        raise DataError("recommendation data needs exactly two index columns (row, col)")
    idx = feats.astype(np.int64)
    if not np.array_equal(idx, feats) or idx.min() < 0:
        raise DataError("recommendation indices must be non-negative integers")
    return idx


def objective_fold_spec(obj, model):
    """FoldSpec evaluating the full objective as a sum over rows; model-only
    regularizers are added in the final step."""

    def need_labels(data):
        if data.labels is None:
            raise DataError(f"{obj.kind} objective requires labels")

    if obj.kind == "recommendation":

        def block(acc, data, start, end):
            need_labels(data)
            if start == end:
                return acc
            idx = _rec_indices(data)[start:end]
            y = data.labels[start:end]
            e = (model.L[:, idx[:, 0]] * model.R[:, idx[:, 1]]).sum(axis=0) - y
            return acc + float(e @ e)

        def transition(acc, row):
            if row.y is None:
                raise DataError("recommendation objective requires labels")
            i, j = int(row.x[0]), int(row.x[1])
            e = float(model.L[:, i] @ model.R[:, j]) - float(row.y)
            return acc + e * e

        def final(acc):
            return acc + obj.mu * (float((model.L ** 2).sum()) + float((model.R ** 2).sum()))

    else:
        x = model.x

        def block(acc, data, start, end):
            need_labels(data)
            if start == end:
                return acc
            X = data.features[start:end]
            y = data.labels[start:end]
            r = X @ x
            if obj.kind in ("least_squares", "lasso"):
                e = r - y
                return acc + float(e @ e)
            _check_pm1_labels(y, obj.kind)
            if obj.kind == "logistic":
                return acc + float(np.logaddexp(0.0, -y * r).sum())
            return acc + float(np.maximum(0.0, 1.0 - y * r).sum())

        def transition(acc, row):
            return block(acc, _SingleRow(row), 0, 1)

        def final(acc):
            if obj.kind == "lasso":
                return acc + obj.mu * float(np.abs(x).sum())
            return acc

    return FoldSpec(
        identity=lambda: 0.0,
        transition=transition,
        merge=lambda a, b: a + b,
        final=final,
        block_transition=block,
    )


class _SingleRow:
    """Adapter so the per-row transition reuses the block arithmetic."""

    def __init__(self, row):
        self.features = row.x[None, :]
        self.labels = None if row.y is None else np.array([row.y])


def objective_value(obj, model, data, p=1):
    """Exact finite-sum objective, computed as a parallel fold."""
    return run_parallel(objective_fold_spec(obj, model), data, p)


def _init_model(data, obj, rng, alpha0):
    if obj.kind != "recommendation":
        return SgdModel(x=np.zeros(data.n_features), alpha0=alpha0)
    idx = _rec_indices(data)
    n_rows = int(idx[:, 0].max()) + 1
    n_cols = int(idx[:, 1].max()) + 1
    r = obj.rank
    span = 0.5 / np.sqrt(r)
    L = rng.uniform(-span, span, size=(r, n_rows))
    R = rng.uniform(-span, span, size=(r, n_cols))
    return SgdModel(L=L, R=R, alpha0=alpha0)


def sgd_fit(data, obj, alpha0, epochs, rng_seed=0, p=1, decay="epoch"):
    """Seeded-shuffle SGD with a 1/k stepsize schedule.

    decay="epoch" applies alpha0/epoch to every step of an epoch (the
    default reading of the 1/k schedule); decay="step" decays per update.
    After each epoch the full objective is evaluated with one parallel fold
    and recorded in the trace. Divergence raises DivergenceError with a
    hint to lower alpha0.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if alpha0 <= 0.0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    if decay not in ("epoch", "step"):
        raise ValueError(f"decay must be 'epoch' or 'step', got {decay!r}")
    n = len(data)
    if n == 0:
        raise DataError("cannot fit over zero rows")
    if data.labels is None:
        raise DataError(f"{obj.kind} objective requires labels")

    rng = np.random.default_rng(rng_seed)
    model = _init_model(data, obj, rng, alpha0)

    feats = data.features
    labels = data.labels
    if obj.kind == "recommendation":
        idx = _rec_indices(data)
        row_counts = np.bincount(idx[:, 0], minlength=model.L.shape[1])
        col_counts = np.bincount(idx[:, 1], minlength=model.R.shape[1])
    else:
        idx = row_counts = col_counts = None
        if obj.kind in ("logistic", "svm_hinge"):
            _check_pm1_labels(labels, obj.kind)

    trace = []
    global_step = 0
    for epoch in range(1, epochs + 1):
        model.epoch = epoch
        alpha_epoch = alpha0 / epoch
        order = rng.permutation(n)
        try:
            for t in order:
                global_step += 1
                alpha = alpha_epoch if decay == "epoch" else alpha0 / global_step
                if obj.kind == "recommendation":
                    example = (idx[t, 0], idx[t, 1], labels[t])
                else:
                    example = (feats[t], labels[t])
                g = term_gradient(
                    obj, model, example,
                    n_terms=n, row_counts=row_counts, col_counts=col_counts,
                )
                _step_inplace(model, g, alpha, n)
        except DivergenceError as err:
            raise DivergenceError(
                f"{err} at epoch {err.epoch} (alpha {err.alpha:.3g}); try a smaller alpha0",
                epoch=err.epoch,
                alpha=err.alpha,
            ) from None
        trace.append(TraceEntry(epoch, float(objective_value(obj, model, data, p)), float(alpha)))
    return model, trace

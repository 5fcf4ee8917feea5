"""Single-pass linear regression with inference statistics, and multipass
binary logistic regression fit by iteratively reweighted least squares."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .errors import (
    DataError,
    DimensionError,
    IterationError,
    NumericError,
    PerfectSeparationError,
)
from .foldcore import FoldSpec, IterationLedger, iterate, run_parallel
from .linalg import SymMatrixLower, spd_pseudo_inverse

# floor on the reweighting diagonal mu*(1-mu); stops blow-ups near 0/1
_MIN_WEIGHT = 1e-12
# coefficient sup-norm treated as divergence of the IRLS iteration
_COEF_BLOWUP = 1e8
# log-likelihood this close to 0 means every point sits deep on its own
# side; combined with a still-growing norm that is perfect separation
_SEPARATION_LL = -1e-6


@dataclass
class LinRegrState:
    """Running sums for one least-squares pass. The first row fixes the
    number of independent variables."""

    num_rows: int = 0
    width_of_x: Optional[int] = None
    y_sum: float = 0.0
    y_square_sum: float = 0.0
    X_transp_Y: Optional[np.ndarray] = None
    X_transp_X: Optional[SymMatrixLower] = None

    def _initialize(self, d):
        self.width_of_x = int(d)
        self.X_transp_Y = np.zeros(d)
        self.X_transp_X = SymMatrixLower(d)

    def copy(self):
        out = LinRegrState(self.num_rows, self.width_of_x, self.y_sum, self.y_square_sum)
        if self.width_of_x is not None:
            out.X_transp_Y = self.X_transp_Y.copy()
            out.X_transp_X = self.X_transp_X.copy()
        return out


def linregr_transition(state, y, x):
    """Fold one (y, x) observation into the running sums."""
    if y is None:
        raise DataError("linear regression requires a label for every row")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"feature vector must be 1-D, got shape {x.shape}")
    if not (np.isfinite(y) and np.all(np.isfinite(x))):
        raise NumericError("non-finite observation")
    if state.width_of_x is None:
        state._initialize(x.shape[0])
    elif x.shape[0] != state.width_of_x:
        raise DimensionError(
            f"expected {state.width_of_x} features, got {x.shape[0]}"
        )
    y = float(y)
    state.num_rows += 1
    state.y_sum += y
    state.y_square_sum += y * y
    state.X_transp_Y += x * y
    state.X_transp_X.rank_one_update(x)
    return state


def linregr_merge(a, b):
    """Sum two partial states; pure."""
    if a.width_of_x is None:
        return b.copy()
    if b.width_of_x is None:
        return a.copy()
    if a.width_of_x != b.width_of_x:
        raise DimensionError(
            f"cannot merge states of width {a.width_of_x} and {b.width_of_x}"
        )
    out = a.copy()
    out.num_rows += b.num_rows
    out.y_sum += b.y_sum
    out.y_square_sum += b.y_square_sum
    out.X_transp_Y = out.X_transp_Y + b.X_transp_Y
    out.X_transp_X = a.X_transp_X.add(b.X_transp_X)
    return out


# rows per accumulation chunk; sized so a chunk stays cache-resident and
# the Gram update and X^T y read it back without a second memory pass
_BLOCK_ROWS = 8192


def _linregr_block(state, data, start, end):
    if data.labels is None:
        raise DataError("linear regression requires a label column")
    if start == end:
        return state
    feats = data.features
    labels = data.labels
    if state.width_of_x is None:
        state._initialize(feats.shape[1])
    elif feats.shape[1] != state.width_of_x:
        raise DimensionError(f"expected {state.width_of_x} features, got {feats.shape[1]}")
    for lo in range(start, end, _BLOCK_ROWS):
        hi = min(lo + _BLOCK_ROWS, end)
        X = feats[lo:hi]
        y = labels[lo:hi]
        state.num_rows += X.shape[0]
        state.y_sum += float(y.sum())
        state.y_square_sum += float(y @ y)
        state.X_transp_Y += X.T @ y
        state.X_transp_X.add_gram_block(X)
    return state


@dataclass(frozen=True)
class LinRegrResult:
    """Output record: coefficients plus inference statistics."""

    coef: np.ndarray
    r2: float
    std_err: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    condition_no: float


def student_t_two_sided_p(t, dof):
    """Two-sided Student-t tail probability I_{v/(v+t^2)}(v/2, 1/2) via the
    regularized incomplete beta function."""
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    t = np.asarray(t, dtype=np.float64)
    x = dof / (dof + t * t)
    p = special.betainc(dof / 2.0, 0.5, x)
    return float(p) if p.ndim == 0 else p


def linregr_final(state):
    """Solve the normal equations through the pseudo-inverse and attach
    r2, standard errors, t statistics, p values, and the condition number.

    Rank-deficient Gram matrices are handled by the pseudo-inverse; the
    residual degrees of freedom use the rank, not the nominal width.
    """
    if state.num_rows == 0:
        raise DataError("cannot finalize a regression over zero rows")
    n = state.num_rows
    decomp = spd_pseudo_inverse(state.X_transp_X)
    pinv = decomp.pseudo_inverse
    coef = pinv @ state.X_transp_Y
    rank = decomp.rank
    if n <= rank:
        raise DataError(
            f"{n} rows against rank {rank}: no residual degrees of freedom"
        )
    xtx = state.X_transp_X.to_full()
    ssr = state.y_square_sum - 2.0 * float(coef @ state.X_transp_Y) + float(coef @ (xtx @ coef))
    ssr = max(ssr, 0.0)
    sst = state.y_square_sum - state.y_sum ** 2 / n
    tiny = 1e-12 * max(1.0, state.y_square_sum)
    if sst > tiny:
        r2 = min(max(1.0 - ssr / sst, 0.0), 1.0)
    else:
        r2 = 1.0 if ssr <= tiny else 0.0
    dof = n - rank
    sigma2 = ssr / dof
    std_err = np.sqrt(sigma2 * np.clip(decomp.pseudo_inverse.diagonal(), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(
            std_err > 0.0,
            coef / np.where(std_err > 0.0, std_err, 1.0),
            np.where(coef == 0.0, 0.0, np.sign(coef) * np.inf),
        )
    p_values = student_t_two_sided_p(t_stats, dof)
    return LinRegrResult(
        coef=coef,
        r2=float(r2),
        std_err=std_err,
        t_stats=t_stats,
        p_values=np.asarray(p_values),
        condition_no=decomp.condition_no,
    )


def linregr_spec():
    """FoldSpec computing ordinary least squares over a labeled Dataset."""
    return FoldSpec(
        identity=LinRegrState,
        transition=lambda s, row: linregr_transition(s, row.y, row.x),
        merge=linregr_merge,
        final=linregr_final,
        block_transition=_linregr_block,
    )


@dataclass
class LogRegrState:
    """Reweighted-least-squares sums for one pass at fixed coefficients."""

    coef_prev: np.ndarray
    X_transp_D_X: SymMatrixLower
    X_transp_D_Z: np.ndarray
    log_likelihood: float = 0.0
    num_rows: int = 0

    def copy(self):
        return LogRegrState(
            self.coef_prev,
            self.X_transp_D_X.copy(),
            self.X_transp_D_Z.copy(),
            self.log_likelihood,
            self.num_rows,
        )


def logregr_transition(state, y, x):
    """Fold one labeled row into the weighted sums.

    Per row: mu = sigma(x.beta), weight w = mu(1-mu) floored at 1e-12, and
    the working response enters as w*x.beta + (y - mu)."""
    if y is None:
        raise DataError("logistic regression requires a label for every row")
    if y not in (0.0, 1.0):
        raise DataError(f"logistic labels must be 0 or 1, got {y}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != state.coef_prev.shape:
        raise DimensionError(
            f"expected {state.coef_prev.shape[0]} features, got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite observation")
    eta = float(x @ state.coef_prev)
    mu = float(special.expit(eta))
    w = max(mu * (1.0 - mu), _MIN_WEIGHT)
    state.X_transp_D_X.rank_one_update(x, weight=w)
    state.X_transp_D_Z += x * (w * eta + (float(y) - mu))
    sign = 2.0 * float(y) - 1.0
    state.log_likelihood -= float(np.logaddexp(0.0, -sign * eta))
    state.num_rows += 1
    return state


def _logregr_merge(a, b):
    if a.X_transp_D_X.d != b.X_transp_D_X.d:
        raise DimensionError("cannot merge states of different widths")
    out = a.copy()
    out.X_transp_D_X = a.X_transp_D_X.add(b.X_transp_D_X)
    out.X_transp_D_Z = a.X_transp_D_Z + b.X_transp_D_Z
    out.log_likelihood += b.log_likelihood
    out.num_rows += b.num_rows
    return out


def _logregr_block(state, data, start, end):
    if data.labels is None:
        raise DataError("logistic regression requires a label column")
    if start == end:
        return state
    X = data.features[start:end]
    y = data.labels[start:end]
    bad = (y != 0.0) & (y != 1.0)
    if bad.any():
        raise DataError(f"logistic labels must be 0 or 1, got {y[bad][0]}")
    beta = state.coef_prev
    if X.shape[1] != beta.shape[0]:
        raise DimensionError(f"expected {beta.shape[0]} features, got {X.shape[1]}")
    eta = X @ beta
    mu = special.expit(eta)
    w = np.maximum(mu * (1.0 - mu), _MIN_WEIGHT)
    state.X_transp_D_X.add_gram_block(X, weights=w)
    state.X_transp_D_Z += X.T @ (w * eta + (y - mu))
    sign = 2.0 * y - 1.0
    state.log_likelihood -= float(np.logaddexp(0.0, -sign * eta).sum())
    state.num_rows += X.shape[0]
    return state


def logregr_irls_spec(coef):
    """FoldSpec for one reweighted pass at fixed coefficients; finalizes to
    (next_coef, log_likelihood_of_current_coef)."""
    coef = np.asarray(coef, dtype=np.float64)
    d = coef.shape[0]

    def identity():
        return LogRegrState(coef, SymMatrixLower(d), np.zeros(d))

    def final(state):
        if state.num_rows == 0:
            raise DataError("cannot finalize a regression over zero rows")
        decomp = spd_pseudo_inverse(state.X_transp_D_X)
        return decomp.pseudo_inverse @ state.X_transp_D_Z, state.log_likelihood

    return FoldSpec(
        identity=identity,
        transition=lambda s, row: logregr_transition(s, row.y, row.x),
        merge=_logregr_merge,
        final=final,
        block_transition=_logregr_block,
    )


def logregr_irls_step(data, coef, p=1):
    """One reweighted-least-squares update over the full dataset."""
    return run_parallel(logregr_irls_spec(coef), data, p)


def log_likelihood(data, coef, p=1):
    """Binary logistic log-likelihood of coef on the dataset."""
    coef = np.asarray(coef, dtype=np.float64)

    def block(acc, data, start, end):
        if data.labels is None:
            raise DataError("logistic regression requires a label column")
        if start == end:
            return acc
        X = data.features[start:end]
        y = data.labels[start:end]
        sign = 2.0 * y - 1.0
        return acc - float(np.logaddexp(0.0, -sign * (X @ coef)).sum())

    def transition(acc, row):
        sign = 2.0 * float(row.y) - 1.0
        return acc - float(np.logaddexp(0.0, -sign * float(row.x @ coef)))

    spec = FoldSpec(
        identity=lambda: 0.0,
        transition=transition,
        merge=lambda a, b: a + b,
        final=lambda s: s,
        block_transition=block,
    )
    return run_parallel(spec, data, p)


@dataclass(frozen=True)
class LogRegrResult:
    coef: np.ndarray
    log_likelihood: float
    num_iterations: int
    converged: bool
    ll_monotone: bool
    ledger: IterationLedger


def logregr_fit(data, tol=1e-8, max_iter=100, p=1):
    """IRLS driver: start at zero coefficients, iterate until the sup-norm
    coefficient change drops below tol.

    Raises PerfectSeparationError when the iteration diverges (exploding
    coefficients, or log-likelihood at 0- while the norm keeps growing),
    the classic symptom of separable data. Exhausting max_iter is not an
    error; the result comes back flagged converged=False.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    d = data.n_features
    init = np.zeros(d)

    def step(beta, data, p):
        new_beta, ll = logregr_irls_step(data, beta, p)
        sup = float(np.abs(new_beta).max()) if new_beta.size else 0.0
        old_sup = float(np.abs(beta).max()) if beta.size else 0.0
        if not np.all(np.isfinite(new_beta)) or sup > _COEF_BLOWUP:
            raise PerfectSeparationError(
                f"coefficients diverged (sup norm {sup:.3g}); "
                "data looks linearly separable"
            )
        if ll > _SEPARATION_LL and sup > old_sup + 0.1:
            raise PerfectSeparationError(
                f"log-likelihood at 0- ({ll:.3g}) while coefficients keep "
                "growing; data looks linearly separable"
            )
        return new_beta, ll

    def converged(ledger):
        m = len(ledger)
        last = ledger.state(m)
        prev = ledger.state(m - 1) if m > 1 else init
        return bool(np.abs(last - prev).max() < tol)

    try:
        beta, ledger = iterate(step, init, data, converged, max_iter, p=p)
    except IterationError as err:
        cause = err.__cause__
        if isinstance(cause, (PerfectSeparationError, DataError, DimensionError, NumericError)):
            raise cause from None
        raise
    converged_flag = converged(ledger)
    diags = ledger.diagnostics()
    ll_monotone = all(
        diags[i + 1] >= diags[i] - 1e-12 * max(1.0, abs(diags[i]))
        for i in range(len(diags) - 1)
    )
    return LogRegrResult(
        coef=beta,
        log_likelihood=log_likelihood(data, beta, p),
        num_iterations=len(ledger),
        converged=converged_flag,
        ll_monotone=ll_monotone,
        ledger=ledger,
    )

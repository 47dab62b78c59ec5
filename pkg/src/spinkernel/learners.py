"""Kernel learners operating on precomputed Gram matrices.

Kernel ridge regression solves (K + lam I) alpha = y by Cholesky. The
hard-margin SVM solves the box-constrained dual with SMO, choosing working
pairs by the second-order rule of Fan, Chen and Lin (JMLR 2005).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy import linalg

from .qkernel import GramMatrix

DEFAULT_LAMBDA_GRID = tuple(np.logspace(-8, 0, 17))
RESIDUAL_RTOL = 1e-8
HARD_MARGIN_CAP = 1e6
ILL_CONDITIONED = 1e12


class SingularSystemError(ValueError):
    """(K + lam I) is not numerically positive definite."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(f"{message} (smallest eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, max_violation: float):
        super().__init__(f"{message} (max KKT violation {max_violation:.3e})")
        self.max_violation = max_violation


def _matrix(gram) -> np.ndarray:
    K = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"Gram matrix must be square, got shape {K.shape}")
    return K


def numerical_rank(K: np.ndarray) -> int:
    w = np.linalg.eigvalsh(K)
    tol = max(K.shape) * np.finfo(float).eps * max(abs(w).max(), 1.0)
    return int(np.sum(w > tol))


# ---------------------------------------------------------------------------
# kernel ridge regression


@dataclass
class RegressionModel:
    alphas: np.ndarray
    lam: float
    targets: np.ndarray
    residual: float = 0.0
    train_points: np.ndarray | None = None

    def to_json(self, path=None) -> str:
        text = json.dumps({
            "kind": "krr",
            "alphas": self.alphas.tolist(),
            "lambda": self.lam,
            "targets": self.targets.tolist(),
            "residual": self.residual,
            "train_points": None if self.train_points is None else self.train_points.tolist(),
        })
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> "RegressionModel":
        d = json.loads(text)
        if d.get("kind") != "krr":
            raise ValueError("not a kernel ridge regression model")
        pts = d["train_points"]
        return cls(alphas=np.array(d["alphas"], dtype=np.float64), lam=d["lambda"],
                   targets=np.array(d["targets"], dtype=np.float64), residual=d["residual"],
                   train_points=None if pts is None else np.array(pts, dtype=np.float64))


def _ext_residual(A: np.ndarray, alpha: np.ndarray, y: np.ndarray) -> np.ndarray:
    # extended precision so the residual is not swamped by rounding when |alpha| >> |y|
    return y.astype(np.longdouble) - A.astype(np.longdouble) @ alpha.astype(np.longdouble)


def _ulp_polish(A: np.ndarray, alpha: np.ndarray, y: np.ndarray, max_moves: int = 1000) -> np.ndarray:
    """Greedy one-ulp moves on single entries of ``alpha`` while they shrink |A alpha - y|.

    With |alpha| much larger than |y| the exact solution rounded to doubles can
    still leave a residual above tolerance; nudging entries by whole ulps finds a
    nearby representable vector with a smaller residual.
    """
    Al = A.astype(np.longdouble)
    col_sq = (Al * Al).sum(axis=0)
    alpha = alpha.copy()
    r = _ext_residual(A, alpha, y)
    for _ in range(max_moves):
        corr = Al.T @ r
        best = None
        for direction in (np.inf, -np.inf):
            step = np.nextafter(alpha, direction) - alpha
            s = step.astype(np.longdouble)
            gain = s * s * col_sq - 2 * s * corr
            i = int(np.argmin(gain))
            if gain[i] < 0 and (best is None or gain[i] < best[0]):
                best = (gain[i], i, step[i])
        if best is None:
            break
        _, i, step_i = best
        alpha[i] += step_i
        r -= Al[:, i] * np.longdouble(step_i)
    return alpha


def krr_fit(gram, y, lam: float) -> RegressionModel:
    """Dual weights alpha = (K + lam I)^-1 y.

    Cholesky solve, then iterative refinement against an extended-precision
    residual, then an ulp-level polish if the residual is still above
    ``RESIDUAL_RTOL * |y|`` (happens when lam is tiny and |alpha| huge).
    """
    K = _matrix(gram)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (K.shape[0],):
        raise ValueError(f"targets have shape {y.shape}, Gram is {K.shape}")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    A = K + lam * np.eye(K.shape[0])
    if lam == 0 and numerical_rank(K) < K.shape[0]:
        raise SingularSystemError("rank-deficient Gram matrix with lambda = 0", float(np.linalg.eigvalsh(K)[0]))
    try:
        factor = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError:
        raise SingularSystemError(f"K + {lam:g} I is not positive definite",
                                  float(np.linalg.eigvalsh(A)[0])) from None
    alpha = linalg.cho_solve(factor, y)
    target = RESIDUAL_RTOL * np.linalg.norm(y)
    res = float(np.linalg.norm(_ext_residual(A, alpha, y)))
    for _ in range(3):
        if res <= target:
            break
        alpha = alpha + linalg.cho_solve(factor, _ext_residual(A, alpha, y).astype(np.float64))
        res = float(np.linalg.norm(_ext_residual(A, alpha, y)))
    if res > target:
        alpha = _ulp_polish(A, alpha, y)
        res = float(np.linalg.norm(_ext_residual(A, alpha, y)))
    return RegressionModel(alphas=alpha, lam=float(lam), targets=y.copy(), residual=res,
                           train_points=gram.points if isinstance(gram, GramMatrix) else None)


def krr_predict(model: RegressionModel, kvec) -> float | np.ndarray:
    """alpha . k(x); a 2-D ``kvec`` holds one kernel vector per row."""
    k = np.asarray(kvec, dtype=np.float64)
    if k.shape[-1] != model.alphas.shape[0]:
        raise ValueError(f"kernel vector length {k.shape[-1]} != training size {model.alphas.shape[0]}")
    out = k @ model.alphas
    return float(out) if k.ndim == 1 else out


def mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError("pred and truth must have equal shapes")
    return float(np.mean((pred - truth) ** 2))


@dataclass
class LambdaSelection:
    best: float
    # (lambda, eval mse, |(K + lam I) alpha - y| / |y|); nan entries mark singular fits
    table: list[tuple[float, float, float]]
    model: RegressionModel


def select_lambda(gram, y, eval_rows, eval_targets, grid=DEFAULT_LAMBDA_GRID) -> LambdaSelection:
    """Fit at every lambda, score MSE on the evaluation set, keep the minimum.

    Ties go to the larger lambda. Singular fits are skipped and recorded as nan.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    rows = np.asarray(eval_rows, dtype=np.float64)
    truth = np.asarray(eval_targets, dtype=np.float64)
    table = []
    best = None
    last_err = None
    for lam in sorted(grid):
        try:
            model = krr_fit(gram, y, lam)
        except SingularSystemError as err:
            last_err = err
            table.append((lam, float("nan"), float("nan")))
            continue
        pred = krr_predict(model, rows) if rows.ndim == 2 else np.atleast_1d(krr_predict(model, rows))
        err = mse(pred, truth)
        ynorm = np.linalg.norm(model.targets)
        table.append((lam, err, model.residual / ynorm if ynorm > 0 else model.residual))
        if best is None or err <= best[1]:
            best = (lam, err, model)
    if best is None:
        raise SingularSystemError("every lambda on the grid gave a singular system", last_err.min_eigenvalue)
    return LambdaSelection(best=best[0], table=table, model=best[2])


# ---------------------------------------------------------------------------
# support vector machine


@dataclass
class SvmModel:
    alphas: np.ndarray
    bias: float
    labels: np.ndarray
    support_indices: np.ndarray
    c_cap: float
    max_violation: float
    iterations: int
    objective: float
    objective_history: list[float] = field(default_factory=list, repr=False)
    warnings: list[str] = field(default_factory=list)

    def to_json(self, path=None) -> str:
        d = {
            "kind": "svm",
            "alphas": self.alphas.tolist(),
            "bias": self.bias,
            "labels": self.labels.tolist(),
            "support_indices": self.support_indices.tolist(),
            "c_cap": self.c_cap,
            "max_violation": self.max_violation,
            "iterations": self.iterations,
            "objective": self.objective,
            "warnings": self.warnings,
        }
        text = json.dumps(d)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        d = json.loads(text)
        if d.pop("kind", None) != "svm":
            raise ValueError("not an SVM model")
        return cls(alphas=np.array(d.pop("alphas"), dtype=np.float64),
                   labels=np.array(d.pop("labels"), dtype=np.float64),
                   support_indices=np.array(d.pop("support_indices"), dtype=np.int64), **d)


def dual_objective(K, labels, alphas) -> float:
    """sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij"""
    ay = np.asarray(alphas) * np.asarray(labels)
    return float(np.sum(alphas) - 0.5 * ay @ np.asarray(K) @ ay)


def _violation(G, alphas, y, c_cap) -> float:
    """Maximal-violating-pair gap: max over I_up of -y G minus min over I_low of -y G."""
    minus_yg = -y * G
    up = ((alphas < c_cap) & (y > 0)) | ((alphas > 0) & (y < 0))
    low = ((alphas < c_cap) & (y < 0)) | ((alphas > 0) & (y > 0))
    if not up.any() or not low.any():
        return 0.0
    return float(minus_yg[up].max() - minus_yg[low].min())


@numba.njit(cache=True)
def _smo_core(K, y, c_cap, tol, alphas, G, max_iter, history):
    """Pair updates until the gap drops below ``tol`` or ``max_iter`` is spent.

    Mutates ``alphas`` and ``G`` in place, appends the dual objective once per
    sweep (n updates) to ``history``; returns (iterations, gap).
    """
    n = y.shape[0]
    it = 0
    while True:
        i = -1
        gmax = -np.inf
        gmin = np.inf
        for t in range(n):
            v = -y[t] * G[t]
            if (y[t] > 0 and alphas[t] < c_cap) or (y[t] < 0 and alphas[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (y[t] < 0 and alphas[t] < c_cap) or (y[t] > 0 and alphas[t] > 0):
                if v < gmin:
                    gmin = v
        gap = gmax - gmin
        if gap < tol or it >= max_iter:
            return it, gap
        it += 1

        # second-order choice of j among I_low entries that violate with i
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] < 0 and alphas[t] < c_cap) or (y[t] > 0 and alphas[t] > 0):
                v = -y[t] * G[t]
                if v < gmax:
                    b = gmax - v
                    q = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if q <= 0.0:
                        q = 1e-12
                    if -b * b / q < best:
                        best = -b * b / q
                        j = t

        q = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if q <= 0.0:
            q = 1e-12
        step = (-y[i] * G[i] + y[j] * G[j]) / q
        ai_old = alphas[i]
        aj_old = alphas[j]
        total = y[i] * ai_old + y[j] * aj_old
        ai = min(max(ai_old + y[i] * step, 0.0), c_cap)
        aj = min(max(y[j] * (total - y[i] * ai), 0.0), c_cap)
        ai = min(max(y[i] * (total - y[j] * aj), 0.0), c_cap)
        alphas[i] = ai
        alphas[j] = aj
        di = (ai - ai_old) * y[i]
        dj = (aj - aj_old) * y[j]
        for t in range(n):
            G[t] += y[t] * (K[t, i] * di + K[t, j] * dj)

        if it % n == 0:
            _restore_equality(K, y, c_cap, alphas, G)
            obj = 0.0
            for t in range(n):
                obj += alphas[t] - 0.5 * alphas[t] * (G[t] + 1.0)
            history.append(obj)


@numba.njit(cache=True)
def _restore_equality(K, y, c_cap, alphas, G):
    # rounding in the pair updates lets sum(alpha * y) drift; push it back onto the largest free alpha
    n = y.shape[0]
    r = 0.0
    for t in range(n):
        r += alphas[t] * y[t]
    k = -1
    for t in range(n):
        if 0.0 < alphas[t] < c_cap and (k < 0 or alphas[t] > alphas[k]):
            k = t
    if k < 0:
        return
    new = min(max(alphas[k] - y[k] * r, 0.0), c_cap)
    d = (new - alphas[k]) * y[k]
    alphas[k] = new
    for t in range(n):
        G[t] += y[t] * K[t, k] * d


def svm_fit(gram, labels, c_cap: float = HARD_MARGIN_CAP, tol: float = 1e-6,
            max_iter: int = 100_000_000, sv_tol: float = 1e-9) -> SvmModel:
    """Dual SVM by SMO with box cap ``c_cap`` (large cap = hard margin).

    Stops once the maximal KKT violation, recomputed from a fresh gradient,
    falls below ``tol``. Raises :class:`ConvergenceError` once ``max_iter``
    pair updates are spent.
    """
    K = np.ascontiguousarray(_matrix(gram), dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (K.shape[0],):
        raise ValueError(f"labels have shape {y.shape}, Gram is {K.shape}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")

    notes = []
    w = np.linalg.eigvalsh(K)
    cond = w[-1] / w[0] if w[0] > 0 else np.inf
    if not cond < ILL_CONDITIONED:
        notes.append(f"kernel matrix is singular or ill-conditioned (condition estimate {cond:.3e}); "
                     "the trained model may be unreliable")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)

    Q = (y[:, None] * y[None, :]) * K
    alphas = np.zeros(K.shape[0])
    G = -np.ones(K.shape[0])
    history = numba.typed.List([0.0])
    used = 0
    for _ in range(50):
        it, _ = _smo_core(K, y, float(c_cap), float(tol), alphas, G, max_iter - used, history)
        used += it
        _restore_equality(K, y, float(c_cap), alphas, G)
        # incremental gradient updates accumulate rounding; judge convergence on a fresh one
        G = Q @ alphas - 1.0
        gap = _violation(G, alphas, y, c_cap)
        if gap < tol:
            break
        if used >= max_iter:
            raise ConvergenceError(f"SMO did not converge in {max_iter} iterations", gap)
    else:
        raise ConvergenceError("SMO stalled at the floating-point precision limit", gap)

    free = (alphas > sv_tol) & (alphas < c_cap - sv_tol)
    f_nobias = K @ (alphas * y)
    if free.any():
        bias = float(np.mean(y[free] - f_nobias[free]))
    else:
        minus_yg = -y * G
        up = ((alphas < c_cap) & (y > 0)) | ((alphas > 0) & (y < 0))
        low = ((alphas < c_cap) & (y < 0)) | ((alphas > 0) & (y > 0))
        bias = float(0.5 * (minus_yg[up].max() + minus_yg[low].min()))
    objective = dual_objective(K, y, alphas)
    return SvmModel(alphas=alphas, bias=bias, labels=y.copy(),
                    support_indices=np.flatnonzero(alphas > sv_tol), c_cap=float(c_cap),
                    max_violation=gap, iterations=used, objective=objective,
                    objective_history=list(history) + [objective], warnings=notes)


def svm_decision(model: SvmModel, kvec) -> float | np.ndarray:
    """f(x) = sum_i alpha_i y_i k_i(x) + bias; classify with its sign."""
    k = np.asarray(kvec, dtype=np.float64)
    if k.shape[-1] != model.alphas.shape[0]:
        raise ValueError(f"kernel vector length {k.shape[-1]} != training size {model.alphas.shape[0]}")
    out = k @ (model.alphas * model.labels) + model.bias
    return float(out) if k.ndim == 1 else out


def classify(model: SvmModel, kvec):
    return np.sign(svm_decision(model, kvec))


def hinge_loss(decisions, labels) -> float:
    """(1/N) sum_i max(1 - f_i y_i, 0)"""
    f = np.asarray(decisions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if f.shape != y.shape:
        raise ValueError("decisions and labels must have equal length")
    return float(np.mean(np.maximum(1.0 - f * y, 0.0)))

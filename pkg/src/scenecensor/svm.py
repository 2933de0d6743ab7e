"""Two-class soft-margin SVM trained with Platt's SMO, plus a reference QP solver.

Labels are +1 (inappropriate) and -1 (appropriate).  The decision function
is ``f(x) = sum_i dual_coefs[i] * K(sv_i, x) + bias`` with
``dual_coefs[i] = alpha_i * y_i``.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, TrainingError
from .media import Label

log = logging.getLogger(__name__)

FULL_GRAM_LIMIT = 8192
SUPPORT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: Optional[float] = None  # rbf only; None means 1 / (d * var(X)) at training time

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None and not self.gamma > 0:
            raise ValueError("rbf gamma must be positive")

    def resolve(self, X: np.ndarray) -> "KernelSpec":
        """Fill in the default gamma from the training data."""
        if self.kind == "linear" or self.gamma is not None:
            return self
        var = float(np.var(X))
        gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        return replace(self, gamma=gamma)

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        dots = A @ B.T
        if self.kind == "linear":
            return dots
        if self.gamma is None:
            raise ValueError("rbf kernel gamma is unresolved")
        sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2 * dots
        return np.exp(-self.gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10000
    seed: int = 0
    step_eps: float = 1e-12
    platt_passes: int = 100  # Platt passes before second-order selection takes over

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True, eq=False)
class SvmModel:
    kernel: KernelSpec
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    C: float = 1.0

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def decision(self, x: np.ndarray):
        """Signed decision value for one vector (float) or each row of a matrix."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"feature dimension mismatch: got {x.shape[-1]}, expected {self.dim}")
        values = self.kernel(x, self.support_vectors) @ self.dual_coefs + self.bias
        return float(values[0]) if x.ndim == 1 else values

    def predict(self, x):
        """Label(s); a decision value of exactly zero counts as inappropriate."""
        values = self.decision(x)
        if np.ndim(values) == 0:
            return Label.INAPPROPRIATE if values >= 0 else Label.APPROPRIATE
        return np.where(values >= 0, int(Label.INAPPROPRIATE), int(Label.APPROPRIATE))

    def __eq__(self, other):
        if not isinstance(other, SvmModel):
            return NotImplemented
        return (
            self.kernel == other.kernel
            and self.bias == other.bias
            and self.C == other.C
            and np.array_equal(self.support_vectors, other.support_vectors)
            and np.array_equal(self.dual_coefs, other.dual_coefs)
        )


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    """W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij."""
    ay = alpha * y
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


class _GramRows:
    """Kernel rows on demand: the full matrix for small N, an LRU row cache above."""

    def __init__(self, X: np.ndarray, kernel: KernelSpec, cache_rows: int = 2048):
        self.X = X
        self.kernel = kernel
        n = X.shape[0]
        if n <= FULL_GRAM_LIMIT:
            self.full = kernel(X, X)
            self.diag = np.diag(self.full).copy()
        else:
            self.full = None
            self.diag = np.array([kernel(X[i], X[i])[0, 0] for i in range(n)])
            self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
            self.cache_rows = cache_rows

    def matvec(self, v: np.ndarray, chunk: int = 1024) -> np.ndarray:
        if self.full is not None:
            return self.full @ v
        nz = np.flatnonzero(v)
        out = np.zeros(self.X.shape[0])
        for start in range(0, self.X.shape[0], chunk):
            out[start : start + chunk] = self.kernel(self.X[start : start + chunk], self.X[nz]) @ v[nz]
        return out

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        if i in self.cache:
            self.cache.move_to_end(i)
            return self.cache[i]
        row = self.kernel(self.X[i], self.X)[0]
        self.cache[i] = row
        if len(self.cache) > self.cache_rows:
            self.cache.popitem(last=False)
        return row


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    passes: int
    steps: int
    converged: bool


class _Smo:
    def __init__(self, gram: _GramRows, y: np.ndarray, cfg: TrainConfig, on_step=None):
        self.gram = gram
        self.y = y
        self.cfg = cfg
        self.n = len(y)
        self.alpha = np.zeros(self.n)
        self.bias = 0.0
        self.errors = -y.astype(np.float64)  # f(x_i) - y_i with f = 0
        self.rng = np.random.default_rng(cfg.seed)
        self.on_step = on_step
        self.steps = 0

    def _non_bound(self) -> np.ndarray:
        C = self.cfg.C
        return np.flatnonzero((self.alpha > 0) & (self.alpha < C))

    def _snap(self, a: float) -> float:
        # values within rounding of a bound would look free but could never move
        C = self.cfg.C
        if a < 1e-12 * C:
            return 0.0
        if a > C * (1 - 1e-12):
            return C
        return a

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        C, eps = self.cfg.C, self.cfg.step_eps
        y1, y2 = self.y[i1], self.y[i2]
        a1, a2 = self.alpha[i1], self.alpha[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if y1 != y2:
            lo, hi = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            lo, hi = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        if hi - lo <= eps * C:
            return False
        row1, row2 = self.gram.row(i1), self.gram.row(i2)
        k11, k22, k12 = self.gram.diag[i1], self.gram.diag[i2], row1[i2]
        eta = k11 + k22 - 2 * k12

        slope = y2 * (e1 - e2)
        if eta > 0:
            a2_new = min(max(a2 + slope / eta, lo), hi)
        else:
            # dual gain along the constraint line: slope * t - eta * t^2 / 2
            gain_lo = slope * (lo - a2) - 0.5 * eta * (lo - a2) ** 2
            gain_hi = slope * (hi - a2) - 0.5 * eta * (hi - a2) ** 2
            if max(gain_lo, gain_hi) <= eps:
                return False
            a2_new = lo if gain_lo > gain_hi else hi

        if abs(a2_new - a2) < eps * (a2_new + a2 + eps):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        if a1_new < 0:
            a2_new += s * a1_new
            a1_new = 0.0
        elif a1_new > C:
            a2_new += s * (a1_new - C)
            a1_new = C

        a1_new, a2_new = self._snap(a1_new), self._snap(a2_new)
        d1, d2 = y1 * (a1_new - a1), y2 * (a2_new - a2)
        b1 = self.bias - e1 - d1 * k11 - d2 * k12
        b2 = self.bias - e2 - d1 * k12 - d2 * k22
        if 0 < a1_new < C:
            b_new = b1
        elif 0 < a2_new < C:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2

        self.errors += d1 * row1 + d2 * row2 + (b_new - self.bias)
        self.alpha[i1], self.alpha[i2] = a1_new, a2_new
        self.bias = b_new
        self.steps += 1
        if self.on_step is not None:
            self.on_step(self.alpha.copy())
        return True

    def _violates(self, i: int) -> bool:
        tol, C = self.cfg.tol, self.cfg.C
        r = self.errors[i] * self.y[i]
        a = self.alpha[i]
        return (r < -tol and a < C) or (r > tol and a > 0)

    def examine(self, i2: int) -> int:
        if not self._violates(i2):
            return 0
        non_bound = self._non_bound()
        if len(non_bound) > 1:
            i1 = non_bound[np.argmax(np.abs(self.errors[non_bound] - self.errors[i2]))]
            if self.take_step(int(i1), i2):
                return 1
        if len(non_bound):
            for i1 in np.roll(non_bound, -int(self.rng.integers(len(non_bound)))):
                if self.take_step(int(i1), i2):
                    return 1
        for i1 in np.roll(np.arange(self.n), -int(self.rng.integers(self.n))):
            if self.take_step(int(i1), i2):
                return 1
        return 0

    def _tolerated_bias_range(self, g: np.ndarray, tol: float) -> tuple[float, float]:
        """Biases for which every point meets its KKT condition within ``tol``."""
        y, a, C = self.y, self.alpha, self.cfg.C
        lo, hi = -np.inf, np.inf
        # y (g + b) >= 1 - tol where alpha < C;  y (g + b) <= 1 + tol where alpha > 0
        need_low = a < C
        need_high = a > 0
        pos, neg = y > 0, y < 0
        for mask, bound, is_lower in (
            (need_low & pos, 1 - tol - g, True),
            (need_low & neg, -(1 - tol) - g, False),
            (need_high & pos, 1 + tol - g, False),
            (need_high & neg, -(1 + tol) - g, True),
        ):
            if mask.any():
                if is_lower:
                    lo = max(lo, bound[mask].max())
                else:
                    hi = min(hi, bound[mask].min())
        return lo, hi

    def _kkt_gap(self) -> tuple[float, int, int]:
        """Maximal violation ``m - M`` and the pair attaining it.

        With ``v_i = -E_i`` (``E`` shifted by the bias), some bias satisfies
        every KKT condition within ``tol`` iff
        ``max_{up} v - min_{low} v <= 2 tol``.
        """
        y, a, C = self.y, self.alpha, self.cfg.C
        v = -self.errors
        up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
        low = ((y < 0) & (a < C)) | ((y > 0) & (a > 0))
        if not up.any() or not low.any():
            return 0.0, -1, -1
        i = int(np.flatnonzero(up)[np.argmax(v[up])])
        j = int(np.flatnonzero(low)[np.argmin(v[low])])
        return float(v[i] - v[j]), i, j

    def _second_order_pass(self, budget: int) -> bool:
        """Maximal-violating-pair SMO with second-order working-set selection.

        Used when Platt's heuristics stall (ill-conditioned or degenerate
        duals).  ``i`` maximises ``v`` over the up set; ``j`` maximises the
        predicted gain ``(v_i - v_j)^2 / eta_ij`` over the low set.
        """
        y, C = self.y, self.cfg.C
        target = 2 * self.cfg.tol * (1 - 1e-6)
        for _ in range(budget):
            gap, i, _j = self._kkt_gap()
            if gap <= target:
                return True
            a, v = self.alpha, -self.errors
            low = ((y < 0) & (a < C)) | ((y > 0) & (a > 0))
            cand = np.flatnonzero(low & (v < v[i]))
            eta = self.gram.diag[i] + self.gram.diag[cand] - 2 * self.gram.row(i)[cand]
            gain = (v[i] - v[cand]) ** 2 / np.maximum(eta, 1e-12)
            j = int(cand[np.argmax(gain)])
            if not self.take_step(j, i):
                return False
        return self._kkt_gap()[0] <= target

    def _sweep(self, passes: int) -> tuple[int, bool]:
        examine_all = True
        changed = 0
        limit = min(self.cfg.max_passes, passes + self.cfg.platt_passes)
        while (changed > 0 or examine_all) and passes < limit:
            candidates = np.arange(self.n) if examine_all else self._non_bound()
            changed = sum(self.examine(int(i)) for i in self.rng.permutation(candidates))
            if examine_all:
                examine_all = False
            elif changed == 0:
                examine_all = True
            passes += 1
        return passes, changed == 0 and not examine_all

    def run(self, refreshes: int = 3) -> SmoResult:
        passes, _ = self._sweep(0)
        target = 2 * self.cfg.tol * (1 - 1e-6)
        budget = self.cfg.max_passes * self.n
        converged = False
        for attempt in range(refreshes + 1):
            # the error cache drifts by rounding; recompute it exactly before judging
            g = self.gram.matvec(self.alpha * self.y)
            self.errors = g + self.bias - self.y
            if self._kkt_gap()[0] <= target:
                converged = True
                break
            if attempt == refreshes or not self._second_order_pass(budget):
                g = self.gram.matvec(self.alpha * self.y)
                break
        if not converged:
            log.warning("SMO stopped after %d passes without meeting the KKT tolerance", passes)

        bias = _bias_from_gradient(self.alpha, self.y, g, self.cfg.C)
        if converged:
            lo, hi = self._tolerated_bias_range(g, self.cfg.tol * (1 - 1e-6))
            if lo > hi:
                lo, hi = self._tolerated_bias_range(g, self.cfg.tol)
            if lo <= hi:
                bias = min(max(bias, lo), hi)
        return SmoResult(self.alpha, bias, passes, self.steps, converged)


def _check_training_data(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionError("X must be (N, d) and y must have N entries")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise TrainingError("labels must be -1 or +1")
    if X.shape[0] < 2 or len(np.unique(y)) < 2:
        raise TrainingError("degenerate labels: training needs both classes")
    if not np.all(np.isfinite(X)):
        raise TrainingError("invalid feature: non-finite value in training data")
    return X, y


def smo_solve(X, y, cfg: TrainConfig, kernel: KernelSpec, on_step: Callable = None) -> SmoResult:
    """Run SMO and return the raw dual solution (all alphas, bias)."""
    X, y = _check_training_data(X, y)
    kernel = kernel.resolve(X)
    return _Smo(_GramRows(X, kernel), y, cfg, on_step).run()


def train_smo(X, y, cfg: TrainConfig = TrainConfig(), kernel: KernelSpec = KernelSpec()) -> SvmModel:
    """Train a soft-margin SVM; only points with alpha > 1e-12 are kept."""
    X, y = _check_training_data(X, y)
    kernel = kernel.resolve(X)
    result = _Smo(_GramRows(X, kernel), y, cfg).run()
    keep = result.alpha > SUPPORT_THRESHOLD
    return SvmModel(
        kernel=kernel,
        support_vectors=X[keep].copy(),
        dual_coefs=(result.alpha * y)[keep],
        bias=float(result.bias),
        C=float(cfg.C),
    )


def kkt_violation(alpha: np.ndarray, bias: float, y: np.ndarray, K: np.ndarray, C: float,
                  bound_tol: float = 1e-12) -> float:
    """Largest KKT violation of the margins ``y_i f(x_i)`` over all training points."""
    margins = y * (K @ (alpha * y) + bias)
    at_zero = alpha <= bound_tol * C
    at_c = alpha >= C * (1 - bound_tol)
    free = ~(at_zero | at_c)
    v = np.zeros_like(margins)
    v[at_zero] = np.maximum(0.0, 1 - margins[at_zero])
    v[at_c] = np.maximum(0.0, margins[at_c] - 1)
    v[free] = np.abs(margins[free] - 1)
    return float(v.max()) if len(v) else 0.0


# -- reference solver ---------------------------------------------------------


def project_dual(z: np.ndarray, y: np.ndarray, C: float) -> np.ndarray:
    """Euclidean projection onto ``{0 <= a <= C, sum(a * y) = 0}``.

    The projection is ``clip(z - lam * y, 0, C)`` for the root ``lam`` of a
    non-increasing piecewise-linear function; breakpoints are enumerated.
    """
    def h(lam):
        lam = np.atleast_1d(lam)
        return np.clip(z[None, :] - lam[:, None] * y[None, :], 0.0, C) @ y

    points = np.unique(np.concatenate([y * z, y * (z - C)]))
    values = h(points)
    if values[0] < 0 or values[-1] > 0:  # pragma: no cover - h spans both signs on its breakpoints
        raise ArithmeticError("projection root not bracketed")
    zero = np.flatnonzero(values == 0)
    if len(zero):
        lam = points[zero[0]]
    else:
        k = np.flatnonzero(values < 0)[0]
        l0, l1, h0, h1 = points[k - 1], points[k], values[k - 1], values[k]
        lam = l0 + (l1 - l0) * h0 / (h0 - h1)
    return np.clip(z - lam * y, 0.0, C)


def qp_oracle(X, y, C: float, kernel: KernelSpec, grad_tol: float = 1e-10,
              max_iter: int = 2_000_000) -> np.ndarray:
    """Dual alphas by projected gradient ascent, for small problems (N <= 200).

    Steps of ``1/L`` (``L`` the largest eigenvalue of the Hessian) with
    Nesterov momentum, restarted whenever the momentum direction stops
    improving.  Stops when the projected-gradient norm drops below
    ``grad_tol``.
    """
    X, y = _check_training_data(X, y)
    if X.shape[0] > 200:
        raise ValueError("qp_oracle is meant for N <= 200")
    kernel = kernel.resolve(X)
    Q = (y[:, None] * y[None, :]) * kernel(X, X)
    step = 1.0 / max(np.linalg.eigvalsh(Q)[-1], 1e-12)
    alpha = project_dual(np.zeros(len(y)), y, C)
    point, t = alpha, 1.0
    for _ in range(max_iter):
        nxt = project_dual(point + step * (1.0 - Q @ point), y, C)
        pg_norm = np.linalg.norm(nxt - point) / step
        if pg_norm < grad_tol:
            # confirm at a plain (momentum-free) iterate
            plain = project_dual(nxt + step * (1.0 - Q @ nxt), y, C)
            if np.linalg.norm(plain - nxt) / step < grad_tol:
                return plain
        if np.dot(point - nxt, nxt - alpha) > 0:
            point, t = nxt, 1.0
            alpha = nxt
            continue
        t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
        point = nxt + ((t - 1) / t_next) * (nxt - alpha)
        alpha, t = nxt, t_next
    raise ArithmeticError("qp_oracle did not converge")


def _bias_from_gradient(alpha, y, g, C, free_tol: float = 1e-8) -> float:
    """Bias given ``g_i = sum_j alpha_j y_j K_ij``.

    Mean of ``y_i - g_i`` over free support vectors; with none free, the
    midpoint of the interval of biases that satisfy the KKT conditions.
    """
    free = (alpha > free_tol * C) & (alpha < C * (1 - free_tol))
    if free.any():
        return float(np.mean(y[free] - g[free]))
    target = y - g
    # y_i (g_i + b) >= 1 where alpha = 0 and <= 1 where alpha = C
    lower_side = (alpha <= free_tol * C) == (y > 0)
    lower = target[lower_side].max() if lower_side.any() else -np.inf
    upper = target[~lower_side].min() if (~lower_side).any() else np.inf
    if np.isinf(lower):
        return float(upper)
    if np.isinf(upper):
        return float(lower)
    return float((lower + upper) / 2)


def bias_from_alpha(alpha, y, K, C) -> float:
    return _bias_from_gradient(alpha, y, K @ (alpha * y), C)


def oracle_model(X, y, C: float, kernel: KernelSpec) -> SvmModel:
    X, y = _check_training_data(X, y)
    kernel = kernel.resolve(X)
    alpha = qp_oracle(X, y, C, kernel)
    bias = bias_from_alpha(alpha, y, kernel(X, X), C)
    keep = alpha > SUPPORT_THRESHOLD
    return SvmModel(kernel, X[keep].copy(), (alpha * y)[keep], bias, float(C))

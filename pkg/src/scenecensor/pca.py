"""PCA with whitening.

``fit_pca`` centres the data, eigendecomposes the sample covariance and keeps
the leading components; ``PcaModel.transform`` projects and rescales each
coordinate to unit variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, TrainingError

DEFAULT_EPSILON = 1e-8
JACOBI_MAX_DIM = 128


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint (p, q) pairs covering every pair of ``range(n)`` once."""
    players = list(range(n + (n % 2)))
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic Jacobi.

    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||A||_F)`` and every remaining ``|a_pq|`` is below
    ``tol * sqrt(|a_pp a_qq|)``.  The second test keeps small eigenvalues
    accurate to high relative precision, which whitening divides by.
    Results are unsorted.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    a = (a + a.T) / 2
    v = np.eye(n)
    if n < 2:
        return np.diag(a).copy(), v
    scale = max(1.0, np.linalg.norm(a))
    threshold = tol * scale
    floor = tol * tol * scale  # below this an entry is noise even next to a zero eigenvalue
    rounds = _round_robin(n)

    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        rotated = False
        for p, q in rounds:
            apq = a[p, q]
            limit = np.maximum(tol * np.sqrt(np.abs(a[p, p] * a[q, q])), floor)
            active = np.abs(apq) > (0.0 if off >= threshold else 1.0) * limit
            active &= apq != 0
            if not active.any():
                continue
            rotated = True
            p, q, apq = p[active], q[active], apq[active]
            with np.errstate(over="ignore", divide="ignore"):
                theta = (a[q, q] - a[p, p]) / (2 * apq)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0] = 1.0
            t[~np.isfinite(theta)] = 0.0
            c = 1 / np.sqrt(t * t + 1)
            s = t * c
            # A <- J^T A J, rows then columns; the pairs are disjoint
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
        if not rotated:
            break
    return np.diag(a).copy(), v


def symmetric_eigh(matrix: np.ndarray, solver: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs sorted by decreasing eigenvalue, with a fixed sign convention.

    Each eigenvector is flipped so that its largest-magnitude entry is
    positive (the first such entry on ties).
    """
    n = matrix.shape[0]
    if solver == "auto":
        solver = "jacobi" if n <= JACOBI_MAX_DIM else "lapack"
    if solver == "jacobi":
        values, vectors = jacobi_eigh(matrix)
    elif solver == "lapack":
        values, vectors = np.linalg.eigh(matrix)
    else:
        raise ValueError(f"unknown eigen solver {solver!r}")
    order = np.argsort(-values, kind="stable")
    values, vectors = values[order], vectors[:, order]
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(n)])
    signs[signs == 0] = 1.0
    return values, vectors * signs


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (out_dim, in_dim), orthonormal rows
    eigenvalues: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    @property
    def in_dim(self) -> int:
        return self.components.shape[1]

    @property
    def out_dim(self) -> int:
        return self.components.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Whitened projection of one vector or of each row of a matrix."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"feature dimension mismatch: got {x.shape[-1]}, expected {self.in_dim}")
        scale = np.sqrt(self.eigenvalues + self.epsilon)
        return ((x - self.mean) @ self.components.T) / scale

    def __eq__(self, other):
        if not isinstance(other, PcaModel):
            return NotImplemented
        return (
            self.epsilon == other.epsilon
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.components, other.components)
            and np.array_equal(self.eigenvalues, other.eigenvalues)
        )


def fit_pca(data, out_dim: int, epsilon: float = DEFAULT_EPSILON, solver: str = "auto") -> PcaModel:
    """Fit a whitening PCA keeping the ``out_dim`` largest-variance directions."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be a 2-D array (rows are samples)")
    n, in_dim = data.shape
    if n < 2:
        raise TrainingError(f"insufficient data: PCA needs at least 2 rows, got {n}")
    if not 0 < out_dim <= min(n - 1, in_dim):
        raise TrainingError(f"rank bound exceeded: out_dim {out_dim} > min(N-1, in_dim) = {min(n - 1, in_dim)}")
    if not np.all(np.isfinite(data)):
        raise TrainingError("invalid feature: PCA input contains non-finite values")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")

    mean = data.mean(axis=0)
    centred = data - mean
    cov = centred.T @ centred / (n - 1)
    values, vectors = symmetric_eigh(cov, solver)
    values = np.clip(values[:out_dim], 0.0, None)
    return PcaModel(mean=mean, components=vectors[:, :out_dim].T.copy(), eigenvalues=values, epsilon=float(epsilon))

"""Diffusion-map coordinates for point clouds, with Nystrom extension.

Charts are discovered from samples alone: a Gaussian kernel on the cloud is
density-normalised (``alpha``), turned into a Markov matrix, and its leading
non-trivial eigenvectors serve as coordinates.  Eigenvectors that are merely
functions of coordinates already chosen (higher harmonics) are skipped with a
local linear regression test.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist, pdist

from .errors import DegenerateCloud, EmbeddingFailure, OutOfRange
from .io import write_csv

N_MIN = 100


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    center: np.ndarray
    sigma: float | None = None
    tau: float | None = None
    n_min: int = field(default=N_MIN, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "center", c)
        if pts.shape[0] < self.n_min:
            raise ValueError(f"cloud has {pts.shape[0]} points, need at least {self.n_min}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("cloud contains non-finite rows")
        if c.shape != (pts.shape[1],):
            raise ValueError("center dimension does not match the cloud")
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        if np.any(c < lo) or np.any(c > hi):
            raise ValueError("center lies outside the cloud's bounding box")

    @property
    def size(self):
        return self.points.shape[0]


def _points(cloud):
    return cloud.points if isinstance(cloud, PointCloud) else np.atleast_2d(np.asarray(cloud, dtype=float))


def auto_bandwidth(cloud, max_pairs=2000, seed=0):
    """Median squared pairwise distance, from at most ``max_pairs`` random pairs."""
    X = _points(cloud)
    n = X.shape[0]
    if n < 2:
        raise DegenerateCloud("need at least two points")
    total = n * (n - 1) // 2
    if total <= max_pairs:
        d2 = pdist(X, "sqeuclidean")
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, size=4 * max_pairs)
        j = rng.integers(0, n, size=4 * max_pairs)
        keep = i != j
        i, j = i[keep][:max_pairs], j[keep][:max_pairs]
        d2 = np.sum((X[i] - X[j]) ** 2, axis=1)
    eps = float(np.median(d2))
    if not eps > 0:
        raise DegenerateCloud("median pairwise distance is zero")
    return eps


def local_linear_residual(coords, y, eps_scale=3.0):
    """Normalised leave-one-out residual of ``y`` regressed locally on ``coords``.

    Values near 1 mean ``y`` is not a function of ``coords``; values near 0
    mean it is (a harmonic of directions already present).
    """
    C = np.atleast_2d(coords)
    if C.shape[0] != y.size:
        C = C.T
    n = y.size
    D = cdist(C, C)
    bw = np.median(D) / eps_scale
    W = np.exp(-(D / bw) ** 2)
    np.fill_diagonal(W, 0.0)
    A = np.column_stack([np.ones(n), C])
    fit = np.empty(n)
    for i in range(n):
        w = W[i]
        Aw = A * w[:, None]
        coef = np.linalg.lstsq(Aw.T @ A, Aw.T @ y, rcond=None)[0]
        fit[i] = A[i] @ coef
    return float(np.sqrt(np.sum((y - fit) ** 2) / np.sum(y ** 2)))


@dataclass(frozen=True)
class DiffusionEmbedding:
    eps: float
    alpha: float
    eigenvalues: np.ndarray      # selected, descending
    eigenvectors: np.ndarray     # N x d, scaled chart coordinates of training points
    selected: tuple              # indices into the non-trivial spectrum (1 = first non-trivial)
    training: np.ndarray         # N x n ambient training points
    density: np.ndarray          # kernel row sums q_j of the training cloud
    scale: np.ndarray            # coordinate scaling applied to the raw eigenvectors
    spectrum: np.ndarray = field(default=None, compare=False)
    residuals: tuple = field(default=(), compare=False)

    @property
    def d(self):
        return len(self.selected)

    @property
    def coords(self):
        return self.eigenvectors


def _markov(K, alpha):
    q = K.sum(axis=1)
    Ka = K / np.outer(q ** alpha, q ** alpha)
    return Ka, q


def fit(cloud, d=2, eps=None, alpha=1.0, n_candidates=None, threshold=0.2, seed=0):
    """Diffusion-map embedding of ``cloud`` with ``d`` selected coordinates.

    ``eps=None`` uses :func:`auto_bandwidth`.  Coordinates are the right
    eigenvectors of the Markov matrix, each scaled to unit standard deviation
    over the training cloud and oriented so its largest-magnitude entry is
    positive.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    X = _points(cloud)
    n = X.shape[0]
    if not isinstance(cloud, PointCloud) and n < N_MIN:
        raise ValueError(f"need at least {N_MIN} points")
    D2 = cdist(X, X, "sqeuclidean")
    if not D2.max() > 0:
        raise DegenerateCloud("all points coincide; kernel matrix is rank one")
    eps = auto_bandwidth(X, seed=seed) if eps is None else float(eps)
    K = np.exp(-D2 / eps)
    Ka, q = _markov(K, alpha)
    deg = Ka.sum(axis=1)
    s = 1.0 / np.sqrt(deg)
    S = Ka * np.outer(s, s)
    S = 0.5 * (S + S.T)
    k = n_candidates or min(n - 1, max(10, 4 * d + 2))
    vals, vecs = eigh(S, subset_by_index=[n - k - 1, n - 1])
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    psi = vecs * s[:, None]                # right eigenvectors of the Markov matrix
    selected, residuals = [], []
    for j in range(1, vals.size):
        if not (0 < vals[j] <= 1 + 1e-12):
            continue
        y = psi[:, j]
        if selected:
            r = local_linear_residual(psi[:, selected], y)
            corr = max(abs(np.corrcoef(y, psi[:, i])[0, 1]) for i in selected)
            residuals.append(r)
            if r < threshold or corr >= 0.97:
                continue
        else:
            residuals.append(1.0)
        selected.append(j)
        if len(selected) == d:
            break
    if len(selected) < d:
        raise EmbeddingFailure(f"found {len(selected)} independent coordinates, need {d}")
    raw = psi[:, selected]
    scale = 1.0 / raw.std(axis=0)
    idx = np.argmax(np.abs(raw), axis=0)
    scale = scale * np.sign(raw[idx, np.arange(d)])
    return DiffusionEmbedding(eps, alpha, vals[selected].copy(), raw * scale, tuple(selected),
                              X.copy(), q, scale, vals.copy(), tuple(residuals))


def extend(emb: DiffusionEmbedding, p):
    """Nystrom extension of the embedding to ambient point(s) ``p``."""
    P = np.atleast_2d(np.asarray(p, dtype=float))
    k = np.exp(-cdist(P, emb.training, "sqeuclidean") / emb.eps)
    mass = k.sum(axis=1)
    if np.any(mass < 1e-12):
        raise OutOfRange("point too far from the training cloud (kernel mass below 1e-12)")
    ka = k / np.outer(mass ** emb.alpha, emb.density ** emb.alpha)
    row = ka / ka.sum(axis=1, keepdims=True)
    out = row @ emb.eigenvectors / emb.eigenvalues[None, :]
    return out[0] if np.ndim(p) == 1 else out


def dump_embedding(path, emb: DiffusionEmbedding):
    n = emb.training.shape[1]
    header = [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(emb.d)]
    return write_csv(path, header, np.hstack([emb.training, emb.eigenvectors]))

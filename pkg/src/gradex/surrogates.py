"""Gaussian-process surrogates for the chart lift and the pulled-back energy.

Each output dimension is an independent GP; all outputs of one model share the
kernel hyperparameters, which are chosen by maximising the summed log marginal
likelihood.  Targets are standardised per output before fitting.  The
posterior mean has closed-form first and second derivatives, which is what the
geometry layer needs.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.optimize import minimize

from . import manifold_learning as ml
from .errors import ChartFailure, EmbeddingFailure, FitFailure
from .geometry import ChartFunctions, ChartJet
from .io import to_jsonable

_SQRT5 = np.sqrt(5.0)


# ---------------------------------------------------------------------------
# kernels, written through the radial profile f(r) with r the scaled distance:
#   dk/du_a       = G(r) D_a / l_a^2
#   d2k/du_a du_b = G(r) delta_ab / l_a^2 + H(r) (D_a / l_a^2) (D_b / l_b^2)
# where D = u - x, G = f'(r)/r and H = G'(r)/r
# ---------------------------------------------------------------------------

def _profile(kind, r, s2):
    if kind == "se":
        e = s2 * np.exp(-0.5 * r * r)
        return e, -e, e
    if kind == "matern52":
        e = s2 * np.exp(-_SQRT5 * r)
        f = (1.0 + _SQRT5 * r + 5.0 * r * r / 3.0) * e
        G = -(5.0 / 3.0) * (1.0 + _SQRT5 * r) * e
        H = (25.0 / 3.0) * e
        return f, G, H
    raise ValueError(f"unknown kernel {kind!r}")


def kernel_matrix(kind, A, B, ell, s2):
    D = (A[:, None, :] - B[None, :, :]) / ell
    r = np.sqrt(np.sum(D * D, axis=-1))
    return _profile(kind, r, s2)[0]


@dataclass(frozen=True)
class GPModel:
    inputs: np.ndarray          # m x d
    targets: np.ndarray         # m x q (original units)
    kernel: str
    ell: np.ndarray             # length-scales (d,)
    s2: float                   # signal variance (standardised units)
    eta: float                  # noise floor (standardised units)
    y_mean: np.ndarray
    y_std: np.ndarray
    chol: np.ndarray            # lower Cholesky factor of K + eta I
    weights: np.ndarray         # (K + eta I)^{-1} y_standardised, m x q
    lml: float = float("nan")

    @property
    def d(self):
        return self.inputs.shape[1]

    @property
    def q(self):
        return self.targets.shape[1]

    def predict(self, u):
        return gp_mean_jac_hess(self, u)[0]

    def variance(self, u):
        """Posterior variance of one standardised output at ``u``."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        k = kernel_matrix(self.kernel, u, self.inputs, self.ell, self.s2)
        v = cho_solve((self.chol, True), k.T)
        var = self.s2 - np.sum(k.T * v, axis=0)
        return np.maximum(var, 0.0)

    def covariance_norm(self, u):
        """Frobenius norm of the predictive covariance over all outputs (original units)."""
        return self.variance(u) * np.sqrt(np.sum(self.y_std ** 4))

    def loo_variance(self):
        """Leave-one-out predictive variances at the training inputs, ``1/[K^-1]_ii``."""
        Kinv = cho_solve((self.chol, True), np.eye(self.inputs.shape[0]))
        return 1.0 / np.diag(Kinv)


def _neg_lml(theta, X, Y, kind, eta):
    """Negative log marginal likelihood and its gradient in log hyperparameters.

    ``eta=None`` reads the noise floor from a trailing ``log eta`` entry of ``theta``.
    """
    d = X.shape[1]
    fit_eta = eta is None
    if fit_eta:
        eta = np.exp(theta[d + 1])
    ell = np.exp(theta[:d])
    s2 = np.exp(theta[d])
    m, q = Y.shape
    Dn = (X[:, None, :] - X[None, :, :]) / ell
    r = np.sqrt(np.sum(Dn * Dn, axis=-1))
    K, G, _ = _profile(kind, r, s2)
    K = K + eta * np.eye(m)
    try:
        c = cho_factor(K, lower=True, check_finite=False)
    except (LinAlgError, ValueError):
        return np.inf, np.zeros_like(theta)
    alpha = cho_solve(c, Y, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    nll = 0.5 * np.sum(Y * alpha) + 0.5 * q * logdet + 0.5 * m * q * np.log(2 * np.pi)
    W = alpha @ alpha.T - q * cho_solve(c, np.eye(m), check_finite=False)
    grad = np.empty_like(theta)
    for a in range(d):
        dK = -G * Dn[:, :, a] ** 2        # dK / dlog l_a
        grad[a] = -0.5 * np.sum(W * dK)
    grad[d] = -0.5 * np.sum(W * (K - eta * np.eye(m)))
    if fit_eta:
        grad[d + 1] = -0.5 * eta * np.trace(W)
    if not np.isfinite(nll):
        return np.inf, np.zeros_like(theta)
    return nll, grad


def _dedupe(X, Y, tol=1e-12):
    keep = []
    for i in range(X.shape[0]):
        if not any(np.max(np.abs(X[i] - X[j])) <= tol for j in keep):
            keep.append(i)
    return X[keep], Y[keep]


def gp_fit(inputs, targets, hyper=None, kernel="se", eta=None, restarts=3, seed=0):
    """Fit a GP with shared hyperparameters to every column of ``targets``.

    ``hyper`` may fix ``{"ell": ..., "s2": ...}`` (standardised units);
    otherwise the log marginal likelihood is maximised from ``restarts``
    seeded starting points within ``ell in [1e-3, 1e3] * input scale`` and
    ``s2 in [1e-6, 1e6]``.  ``eta`` defaults to ``1e-8`` (i.e. ``1e-8`` times
    the target variance in original units); ``eta="fit"`` adds it to the
    optimised hyperparameters within ``[1e-8, 1e-2]``.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValueError("inputs and targets have different lengths")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite training data")
    X, Y = _dedupe(X, Y)
    m, d = X.shape
    if m < 10:
        raise ValueError(f"need at least 10 distinct inputs, got {m}")
    y_mean = Y.mean(axis=0)
    y_std = Y.std(axis=0)
    y_std = np.where(y_std > 0, y_std, 1.0)
    Ys = (Y - y_mean) / y_std
    fit_eta = isinstance(eta, str)
    if fit_eta and eta != "fit":
        raise ValueError(f"unknown eta option {eta!r}")
    eta = 1e-8 if eta is None or fit_eta else float(eta)
    if eta < 1e-10:
        raise ValueError("noise floor must be at least 1e-10")
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)

    if hyper is not None:
        theta = np.concatenate([np.log(np.broadcast_to(np.asarray(hyper["ell"], float), (d,))),
                                [np.log(float(hyper["s2"]))]])
        best = (_neg_lml(theta, X, Ys, kernel, eta)[0], theta)
        if not np.isfinite(best[0]):
            raise FitFailure("given hyperparameters do not give a positive-definite kernel")
    else:
        lo = np.concatenate([np.log(1e-3 * scale), [np.log(1e-6)]])
        hi = np.concatenate([np.log(1e3 * scale), [np.log(1e6)]])
        rng = np.random.default_rng(seed)
        starts = [np.concatenate([np.log(scale), [0.0]])]
        for _ in range(restarts - 1):
            starts.append(np.concatenate([np.log(scale) + rng.uniform(-2.0, 2.0, d), [rng.uniform(-1.0, 1.0)]]))
        if fit_eta:
            lo, hi = np.append(lo, np.log(1e-8)), np.append(hi, np.log(1e-2))
            starts = [np.append(th, np.log(1e-6)) for th in starts]
        arg_eta = None if fit_eta else eta
        best = (np.inf, None)
        for th0 in starts:
            th0 = np.clip(th0, lo, hi)
            if not np.isfinite(_neg_lml(th0, X, Ys, kernel, arg_eta)[0]):
                # shrink length-scales until the kernel factorises
                for _ in range(20):
                    th0[:d] = np.maximum(th0[:d] - 0.5, lo[:d])
                    if np.isfinite(_neg_lml(th0, X, Ys, kernel, arg_eta)[0]):
                        break
                else:
                    continue
            try:
                res = minimize(_neg_lml, th0, args=(X, Ys, kernel, arg_eta), jac=True,
                               method="L-BFGS-B", bounds=list(zip(lo, hi)))
            except (ValueError, FloatingPointError):
                continue
            if np.isfinite(res.fun) and res.fun < best[0]:
                best = (float(res.fun), res.x)
        if best[1] is None:
            raise FitFailure("no restart produced a positive-definite kernel matrix")
    theta = best[1]
    ell = np.exp(theta[:d])
    s2 = float(np.exp(theta[d]))
    if fit_eta:
        eta = float(np.exp(theta[d + 1]))
    K = kernel_matrix(kernel, X, X, ell, s2) + eta * np.eye(m)
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise FitFailure("kernel matrix is not positive definite") from exc
    W = cho_solve((L, True), Ys)
    return GPModel(X, Y, kernel, ell, s2, eta, y_mean, y_std, L, W, -best[0])


def gp_mean_jac_hess(model: GPModel, u):
    """Posterior mean at ``u`` with its Jacobian ``(q, d)`` and Hessian ``(q, d, d)``.

    The kernel sums are accumulated in extended precision: with a small noise
    floor the weights are large and cancel, and in double precision the
    rounding error in the derivatives is far above what the corrector needs.
    """
    LD = np.longdouble
    u = np.asarray(u, dtype=LD)
    ell = model.ell.astype(LD)
    W = model.weights.astype(LD)
    D = u[None, :] - model.inputs.astype(LD)        # m x d
    Dl = D / ell
    r = np.sqrt(np.sum(Dl * Dl, axis=1))
    f, G, H = _profile(model.kernel, r, LD(model.s2))
    B = D / ell ** 2                                # m x d
    mean_s = f @ W                                  # q
    jac_s = np.einsum("i,ia,iq->qa", G, B, W)
    hess_s = np.einsum("i,ia,ib,iq->qab", H, B, B, W)
    hess_s += np.einsum("i,iq->q", G, W)[:, None, None] * np.diag(1.0 / ell ** 2)[None]
    hess_s = 0.5 * (hess_s + hess_s.transpose(0, 2, 1))
    sd = model.y_std
    return (model.y_mean + sd * mean_s.astype(float), sd[:, None] * jac_s.astype(float),
            sd[:, None, None] * hess_s.astype(float))


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------

_chart_ids = itertools.count(1)


@dataclass
class ChartModel(ChartFunctions):
    """Learned chart: diffusion-map ``phi``, GP lift ``psi`` and GP energy ``Z``."""

    embedding: ml.DiffusionEmbedding
    lift_gp: GPModel
    energy_gp: GPModel
    boundary_threshold: float
    chart_id: int
    center: np.ndarray = field(default=None)

    def __post_init__(self):
        self.dim = self.lift_gp.d
        self.ambient_dim = self.lift_gp.q

    def phi(self, p):
        return ml.extend(self.embedding, p)

    def psi(self, u):
        return self.lift_gp.predict(u)

    def jet(self, u):
        u = np.asarray(u, dtype=float)
        p, J, Hp = gp_mean_jac_hess(self.lift_gp, u)
        z, dz, d2z = gp_mean_jac_hess(self.energy_gp, u)
        return ChartJet(p, J, Hp, float(z[0]), dz[0], d2z[0])

    def covariance_norm(self, u):
        return float(self.lift_gp.covariance_norm(u)[0])

    def contains(self, u):
        return boundary_check(self, u) == "inside"


def lift_reconstruction_errors(chart: ChartModel):
    """Ambient distances ``|psi(phi(x)) - x|`` over the chart's training cloud."""
    gp = chart.lift_gp
    K = kernel_matrix(gp.kernel, gp.inputs, gp.inputs, gp.ell, gp.s2)
    recon = gp.y_mean + gp.y_std * (K @ gp.weights)
    return np.linalg.norm(recon - chart.embedding.training, axis=1)


def boundary_check(chart: ChartModel, u):
    """``"inside"`` iff the lift covariance norm at ``u`` is at most the chart threshold."""
    return "inside" if chart.covariance_norm(u) <= chart.boundary_threshold else "outside"


def calibrate_threshold(lift_gp: GPModel, factor=1.5, percentile=95.0):
    """``factor`` times a percentile of posterior covariance norms at the training inputs."""
    norms = lift_gp.variance(lift_gp.inputs) * np.sqrt(np.sum(lift_gp.y_std ** 4))
    return float(factor * np.percentile(norms, percentile))


def build_chart(cloud, energy_values, d=2, chart_id=None, seed=0, kernel="se",
                eps=None, alpha=1.0, threshold_factor=1.5, threshold_percentile=95.0, lift_eta="fit"):
    """Learn a chart from a point cloud and the energies at its points.

    Relaxed samples sit slightly off the manifold, so by default the lift GP
    estimates its noise floor instead of interpolating that scatter.
    """
    pts = cloud.points if isinstance(cloud, ml.PointCloud) else np.asarray(cloud, dtype=float)
    center = cloud.center if isinstance(cloud, ml.PointCloud) else pts.mean(axis=0)
    ev = np.asarray(energy_values, dtype=float).ravel()
    if ev.size != pts.shape[0] or not np.all(np.isfinite(ev)):
        raise ValueError("energy values must be finite, one per point")
    try:
        emb = ml.fit(cloud, d, eps=eps, alpha=alpha, seed=seed)
        U = emb.coords
        lift = gp_fit(U, pts, kernel=kernel, eta=lift_eta, seed=seed)
        energy = gp_fit(U, ev, kernel=kernel, seed=seed)
    except (EmbeddingFailure, FitFailure) as exc:
        raise ChartFailure(str(exc)) from exc
    cid = next(_chart_ids) if chart_id is None else int(chart_id)
    return ChartModel(emb, lift, energy, calibrate_threshold(lift, threshold_factor, threshold_percentile), cid, center)


# ---------------------------------------------------------------------------
# bundles
# ---------------------------------------------------------------------------

_GP_ARRAYS = ("inputs", "targets", "ell", "y_mean", "y_std", "chol", "weights")
_EMB_ARRAYS = ("eigenvalues", "eigenvectors", "training", "density", "scale", "spectrum")


def save_chart(path, chart: ChartModel):
    """Write ``<path>.json`` (scalars) and ``<path>.npz`` (matrices)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    meta = {"chart_id": chart.chart_id, "boundary_threshold": chart.boundary_threshold,
            "center": chart.center,
            "embedding": {"eps": chart.embedding.eps, "alpha": chart.embedding.alpha,
                          "selected": list(chart.embedding.selected),
                          "residuals": list(chart.embedding.residuals)}}
    for name in _EMB_ARRAYS:
        arrays[f"embedding.{name}"] = getattr(chart.embedding, name)
    for tag, gp in (("lift", chart.lift_gp), ("energy", chart.energy_gp)):
        meta[tag] = {"kernel": gp.kernel, "s2": gp.s2, "eta": gp.eta, "lml": gp.lml}
        for name in _GP_ARRAYS:
            arrays[f"{tag}.{name}"] = getattr(gp, name)
    np.savez(path.with_suffix(".npz"), **arrays)
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(to_jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path.with_suffix(".json"), path.with_suffix(".npz")


def load_chart(path) -> ChartModel:
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    with np.load(path.with_suffix(".npz")) as z:
        arrays = {k: z[k] for k in z.files}
    e = meta["embedding"]
    emb = ml.DiffusionEmbedding(e["eps"], e["alpha"], arrays["embedding.eigenvalues"],
                                arrays["embedding.eigenvectors"], tuple(e["selected"]),
                                arrays["embedding.training"], arrays["embedding.density"],
                                arrays["embedding.scale"], arrays["embedding.spectrum"],
                                tuple(e["residuals"]))
    gps = {}
    for tag in ("lift", "energy"):
        m = meta[tag]
        a = {n: arrays[f"{tag}.{n}"] for n in _GP_ARRAYS}
        gps[tag] = GPModel(a["inputs"], a["targets"], m["kernel"], a["ell"], m["s2"], m["eta"],
                           a["y_mean"], a["y_std"], a["chol"], a["weights"], m["lml"])
    center = None if meta["center"] is None else np.asarray(meta["center"], dtype=float)
    return ChartModel(emb, gps["lift"], gps["energy"], meta["boundary_threshold"],
                      meta["chart_id"], center)

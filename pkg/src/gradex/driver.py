"""Outer loop: sample, learn a chart, trace the gradient extremal, move on.

Each iteration samples a cloud around the previous exit point, learns a chart
from it, maps the previous exit into the new chart, and continues the
gradient extremal there in the same direction.  The run converges once the
curve reaches a point with ``||grad Z|| < rho`` on any chart after the first.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .continuation import (
    CHART_BOUNDARY,
    CRITICAL_POINT,
    STALLED,
    ContinuationConfig,
    GESegment,
    grad_norm_at,
    init_state,
    polish_critical_point,
    resolve_extremal_curve,
)
from .errors import ChartFailure, GradexError, OutOfRange
from .sampling import SamplerConfig, sample_neighborhood
from .surrogates import ChartModel, build_chart, lift_reconstruction_errors

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    p0: tuple
    d: int = 2
    sampler: SamplerConfig = SamplerConfig()
    continuation: ContinuationConfig = ContinuationConfig(relative=True)
    rho: float = 1e-4
    # chart boundary: factor times a percentile of training-point covariance
    # norms; small charts keep the surrogates accurate along the whole segment
    boundary_factor: float = 1.0
    boundary_percentile: float = 25.0
    max_charts: int = 40
    branch: str = "smallest"
    sign: float = 1.0
    # "eigen": eigenvector of the chosen branch; "random": seeded random chart direction
    direction: str = "eigen"
    # optional ambient vector fixing the orientation of the first direction
    direction_hint: tuple | None = None
    seed: int = 0
    trailing: int = 5
    # relax p0 onto the manifold before the first chart
    relax_seed: bool = True
    # start the first chart at its own critical point nearest the seed
    snap_seed: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.max_charts < 1:
            raise ValueError("max_charts must be at least 1")
        if self.direction not in ("eigen", "random"):
            raise ValueError(f"unknown direction option {self.direction!r}")
        if self.sign not in (1, -1, 1.0, -1.0):
            raise ValueError("sign must be +1 or -1")


@dataclass
class ChartRecord:
    chart_id: int
    center: np.ndarray
    cloud: dict
    q0: np.ndarray
    v0: np.ndarray
    segment: GESegment
    termination: str
    lifted: np.ndarray            # ambient images of the segment states
    exit_point: np.ndarray        # ambient
    exit_velocity: np.ndarray     # ambient, unit length
    grad_norm: float
    retried: bool = False
    transfer_angle_deg: float | None = None
    chain_error: float | None = None


@dataclass
class RunRecord:
    charts: list = field(default_factory=list)
    final_point: np.ndarray | None = None
    converged: bool = False
    reason: str = ""
    final_grad_norm: float = float("nan")
    ambient_field_norm: float | None = None

    @property
    def n_charts(self):
        return len(self.charts)

    @property
    def path(self):
        """Concatenated ambient path over all charts."""
        if not self.charts:
            return np.empty((0, 0))
        return np.vstack([c.lifted for c in self.charts])


def chart_seed(seed, n):
    """Independent, reproducible RNG seed for chart ``n``."""
    return int(np.random.SeedSequence([int(seed), int(n)]).generate_state(1)[0])


def pushforward(chart: ChartModel, p, w, delta=1e-5):
    """``D phi(p) w`` by central differences of the Nystrom map."""
    w = np.asarray(w, dtype=float)
    return (chart.phi(p + delta * w) - chart.phi(p - delta * w)) / (2 * delta)


def transfer_direction(trailing, exit_velocity, new_chart: ChartModel):
    """Initial chart direction on ``new_chart`` continuing the previous segment.

    ``trailing`` are the last ambient points of the previous segment (oldest
    first).  The direction is the normalised chord across their images in the
    new chart, flipped if it disagrees with the pushed-forward exit velocity.
    """
    P = np.atleast_2d(np.asarray(trailing, dtype=float))
    if P.shape[0] < 2:
        raise ValueError("need at least two trailing points")
    Q = new_chart.phi(P)
    v = Q[-1] - Q[0]
    nv = np.linalg.norm(v)
    ref = pushforward(new_chart, P[-1], exit_velocity)
    if nv == 0:
        v, nv = ref, np.linalg.norm(ref)
    v = v / nv
    if v @ ref < 0:
        v = -v
    return v


def detect_fixed_point(chart, q, rho, ambient_field=None):
    """``(||grad Z(q)|| < rho, ||grad Z(q)||, ambient field norm or None)``."""
    gn = grad_norm_at(chart, q)
    amb = None
    if ambient_field is not None:
        amb = float(np.linalg.norm(ambient_field(chart.lift(q))))
    return bool(gn < rho), gn, amb


def _lift_velocity(chart, q, v):
    w = chart.jet(q).lift_jac @ v
    n = np.linalg.norm(w)
    return w / n if n > 0 else w


def _cloud_summary(cloud, chart):
    r = np.linalg.norm(cloud.points, axis=1)
    return {"N": int(cloud.size), "sigma": cloud.sigma, "tau": cloud.tau,
            "eps": chart.embedding.eps, "eigenvalues": chart.embedding.eigenvalues,
            "max_radial_error": float(np.abs(r - 1.0).max()),
            "median_lift_error": float(np.median(lift_reconstruction_errors(chart))),
            "boundary_threshold": chart.boundary_threshold}


def _angle_deg(a, b):
    c = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def _resolve(chart, q0, v0, ccfg, branch, sign):
    seg = resolve_extremal_curve(chart, q0, v0, ccfg, sign=sign, branch=branch)
    retried = False
    if seg.termination == STALLED:
        retried = True
        h0 = ccfg.h0 / 10
        cfg2 = replace(ccfg, h0=h0, h_min=min(ccfg.h_min, h0))
        seg = resolve_extremal_curve(chart, q0, v0, cfg2, sign=sign, branch=branch)
    return seg, retried


def run(cfg: RunConfig, energy, dynamics, energies=None, ambient_field=None):
    """Trace a gradient extremal across learned charts starting at ``cfg.p0``.

    ``energy`` evaluates the ambient energy at a point; ``energies`` may
    instead supply a callable mapping an ``(N, n)`` cloud to its energies
    (for systems whose energy is not available pointwise).
    """
    record = RunRecord()
    p = np.asarray(cfg.p0, dtype=float)
    if cfg.relax_seed:
        p = sample_neighborhood(p, replace(cfg.sampler, N=1, sigma=1e-300), dynamics).points[0]
    energies = energies or (lambda X: np.array([energy(x) for x in X]))
    prev_trailing = prev_velocity = None
    for n in range(1, cfg.max_charts + 1):
        scfg = replace(cfg.sampler, seed=chart_seed(cfg.seed, n))
        try:
            cloud = sample_neighborhood(p, scfg, dynamics)
            chart = build_chart(cloud, energies(cloud.points), cfg.d, chart_id=n,
                                seed=chart_seed(cfg.seed, 10_000 + n),
                                threshold_factor=cfg.boundary_factor,
                                threshold_percentile=cfg.boundary_percentile)
            q0 = chart.phi(p)
            transfer_angle = chain_error = None
            if n == 1:
                if cfg.snap_seed:
                    u, gn_u, _ = polish_critical_point(chart, q0)
                    if gn_u < 1e-2 * cfg.rho and chart.contains(u):
                        q0 = u
                v0 = _initial_direction(cfg, chart, q0)
                branch = cfg.branch
            else:
                v0 = transfer_direction(prev_trailing, prev_velocity, chart)
                branch = "aligned"
                transfer_angle = _angle_deg(_lift_velocity(chart, q0, v0), prev_velocity)
                chain_error = float(np.linalg.norm(chart.psi(q0) - p))
        except (ChartFailure, OutOfRange) as exc:
            record.reason = f"chart {n}: {type(exc).__name__}: {exc}"
            break
        except GradexError as exc:
            record.reason = f"chart {n}: {type(exc).__name__}: {exc}"
            break

        at_fixed, gn0, _ = detect_fixed_point(chart, q0, cfg.rho)
        if n > 1 and at_fixed:
            # the previous chart already ended on the fixed point
            u, _, _ = polish_critical_point(chart, q0)
            state, _, _ = init_state(chart, u, v0, branch=branch, cfg=cfg.continuation)
            seg = GESegment([state], CRITICAL_POINT, u, v0, critical_point=u)
            retried = False
        else:
            seg, retried = _resolve(chart, q0, v0, cfg.continuation, branch, 1.0)

        q = seg.exit_point
        lifted = np.array([chart.psi(s.u) for s in seg.states])
        w = _lift_velocity(chart, q, seg.exit_velocity)
        gn = grad_norm_at(chart, q)
        record.charts.append(ChartRecord(n, cloud.center, _cloud_summary(cloud, chart), q0, v0, seg,
                                         seg.termination, lifted, lifted[-1], w, gn, retried,
                                         transfer_angle, chain_error))
        log.info("chart %d: %s after %d states, |grad Z| = %.3g", n, seg.termination, len(seg.states), gn)
        p = lifted[-1]
        if n > 1 and gn < cfg.rho:
            record.converged = True
            record.reason = "converged"
            break
        if seg.termination == STALLED:
            record.reason = f"chart {n}: stalled"
            break
        # trailing ambient points for the next transfer
        prev_trailing = lifted[-cfg.trailing:] if len(lifted) >= 2 else np.vstack([lifted[-1] - 1e-6 * w, lifted[-1]])
        prev_velocity = w
    else:
        record.reason = "max charts reached"
    if record.charts:
        last = record.charts[-1]
        record.final_point = last.exit_point
        record.final_grad_norm = last.grad_norm
        if ambient_field is not None:
            record.ambient_field_norm = float(np.linalg.norm(ambient_field(last.exit_point)))
    return record


def _initial_direction(cfg: RunConfig, chart, q0):
    if cfg.direction == "random":
        rng = np.random.default_rng(chart_seed(cfg.seed, 0))
        v = rng.standard_normal(chart.dim)
    else:
        _, v, _ = init_state(chart, q0, None, branch=cfg.branch, cfg=cfg.continuation)
    v = v / np.linalg.norm(v)
    if cfg.direction_hint is not None:
        w = chart.jet(q0).lift_jac @ v
        if w @ np.asarray(cfg.direction_hint, dtype=float) < 0:
            v = -v
    return cfg.sign * v


def record_summary(record: RunRecord):
    """JSON-friendly summary of a run (no timings, so reruns compare equal)."""
    charts = []
    for c in record.charts:
        charts.append({
            "chart_id": c.chart_id, "center": c.center, "cloud": c.cloud,
            "q0": c.q0, "v0": c.v0, "termination": c.termination,
            "states": len(c.segment.states), "exit_point": c.exit_point,
            "exit_velocity": c.exit_velocity, "grad_norm": c.grad_norm,
            "retried": c.retried, "transfer_angle_deg": c.transfer_angle_deg,
            "chain_error": c.chain_error,
            "L_first": c.segment.states[0].L, "L_last": c.segment.states[-1].L,
        })
    return {"charts": charts, "n_charts": record.n_charts, "converged": record.converged,
            "reason": record.reason, "final_point": record.final_point,
            "final_grad_norm": record.final_grad_norm,
            "ambient_field_norm": record.ambient_field_norm}


def config_summary(cfg: RunConfig):
    out = asdict(cfg)
    return out

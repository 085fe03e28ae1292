"""Pseudo-arclength tracing of gradient extremals on a single chart.

The unknowns are ``x = (u, lam, L)`` and the defining equations are

    Z(u) - L = 0,
    Hess Z(u) grad Z(u) - lam grad Z(u) = 0,

i.e. ``d + 1`` equations in ``d + 2`` unknowns.  Arclength is measured in the
scaled variables ``(u, lam_weight * lam, level_weight * L)`` so that the
eigenvalue and the energy, which often live on very different scales from the
chart coordinates, do not dominate the step length.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonFinite, SingularMetric, StepsizeUnderflow
from .geometry import (
    ChartFunctions,
    covariant_hessian_lower,
    ge_evaluate,
    ge_jacobian,
    metric_from_jacobians,
    riemannian_gradient,
)

log = logging.getLogger(__name__)

CHART_BOUNDARY = "ChartBoundary"
CRITICAL_POINT = "CriticalPoint"
MAX_STEPS = "MaxSteps"
STALLED = "Stalled"


@dataclass(frozen=True)
class ContinuationConfig:
    h0: float = 1e-2
    h_min: float = 1e-8
    h_max: float = 0.1
    tol: float = 1e-8
    max_corrector_iter: int = 8
    max_steps: int = 5000
    rho_local: float = 1e-4
    branch: str = "smallest"
    # None: 1 / max(1, ||Hess Z||) at the seed point
    lam_weight: float | None = None
    level_weight: float | None = None
    # fraction of the Newton distance to a critical point ahead that one predictor may cover
    approach_factor: float = 0.5
    boundary_refinements: int = 3
    polish: bool = True
    polish_tol: float = 1e-10
    # on step underflow, a critical point ahead within this chart distance ends the curve
    stall_reach: float = 1e-2
    # measure residuals relative to max(1, |L|) and max(1, ||Hess Z||); meant
    # for surrogate charts whose rounding floor is far above an absolute tol
    relative: bool = False

    def __post_init__(self):
        if not (0 < self.h_min <= self.h0 <= self.h_max):
            raise ValueError("need 0 < h_min <= h0 <= h_max")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.branch not in ("smallest", "largest", "aligned"):
            raise ValueError(f"unknown branch {self.branch!r}")
        for wgt in (self.lam_weight, self.level_weight):
            if wgt is not None and wgt <= 0:
                raise ValueError("arclength weights must be positive")

    def with_auto_weights(self, hess_norm):
        w = 1.0 / max(1.0, float(hess_norm))
        return replace(self,
                       lam_weight=w if self.lam_weight is None else self.lam_weight,
                       level_weight=w if self.level_weight is None else self.level_weight)


@dataclass
class GEState:
    u: np.ndarray
    lam: float
    L: float
    tangent: np.ndarray     # unit vector in scaled (u, lam, L) coordinates
    residual: float         # infinity norm of the GE residual
    grad_norm: float        # g-norm of grad Z
    h: float = 0.0          # step length that produced this state
    iterations: int = 0

    @property
    def x(self):
        return np.concatenate([self.u, [self.lam, self.L]])


@dataclass
class GESegment:
    states: list
    termination: str
    exit_point: np.ndarray
    exit_velocity: np.ndarray
    # None: 1 / max(1, ||Hess Z||) at the seed point
    lam_weight: float | None = None
    level_weight: float | None = None
    critical_point: np.ndarray | None = None

    @property
    def levels(self):
        return np.array([s.L for s in self.states])

    @property
    def points(self):
        return np.array([s.u for s in self.states])

    @property
    def eigenvalues(self):
        return np.array([s.lam for s in self.states])


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _weights(d, cfg):
    return np.concatenate([np.ones(d), [cfg.lam_weight, cfg.level_weight]])


def _normalized(pt):
    """GE residual with the eigen block divided by ``max(||grad Z||_g, tiny)``.

    The normalised eigen-equation has no trivial solution family at critical
    points, which keeps the corrector on the curve near the seed minimum.
    """
    gn = np.sqrt(max(pt.jet.dz @ pt.grad, 0.0))
    scale = max(gn, 1e-300)
    return np.concatenate([pt.value[:1], pt.value[1:] / scale]), scale


def _accepted(pt, tol, relative=False):
    """Raw residual within ``tol`` and normalised eigen-residual within ``tol * max(1, ||H||)``.

    The second test guards against accepting off-curve points where the raw
    residual is small only because ``grad Z`` is.  With ``relative`` the
    level residual is scaled by ``max(1, |Z|)`` and the eigen block by
    ``max(1, ||H||) max(1, ||grad Z||)``, the size of its two terms.
    """
    hn = max(1.0, np.linalg.norm(pt.hess_op, 2))
    nv, gn = _normalized(pt)
    if relative:
        if (abs(pt.value[0]) > tol * max(1.0, abs(pt.jet.z))
                or np.abs(pt.value[1:]).max() > tol * hn * max(1.0, gn)):
            return False
    elif np.abs(pt.value).max() > tol:
        return False
    return np.abs(nv[1:]).max() <= tol * hn


def _system_jacobian(chart, x, pt, w, rel_step=1e-6):
    """Jacobian of the normalised residual in scaled coordinates."""
    d = x.size - 2
    u, lam, L = x[:d], x[d], x[d + 1]
    nv, scale = _normalized(pt)
    h = rel_step * (1.0 + np.linalg.norm(u))
    # stay well inside the distance to a nearby critical point, where the
    # normalised residual varies on the scale ||grad Z|| / ||Hess Z||
    hnorm = np.linalg.norm(pt.hess_op, 2)
    if hnorm > 0:
        h = min(h, max(1e-3 * scale / hnorm, 1e-13 * (1.0 + np.linalg.norm(u))))
    J = np.zeros((d + 1, d + 2))
    for k in range(d):
        up = u.copy()
        up[k] += h
        J[:, k] = (_normalized(ge_evaluate(chart, up, lam, L))[0] - nv) / h
    J[1:, d] = -pt.grad / scale
    J[0, d + 1] = -1.0
    return J / w[None, :]


def _null_tangent(J, t_prev):
    """Unit null vector of ``J`` (shape (d+1, d+2)) oriented along ``t_prev``."""
    A = np.vstack([J, t_prev])
    rhs = np.zeros(A.shape[0])
    rhs[-1] = 1.0
    try:
        t = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        t = np.linalg.svd(J)[2][-1]
    t /= np.linalg.norm(t)
    if t @ t_prev < 0:
        t = -t
    return t


def grad_norm_at(chart, u):
    jet = chart.jet(u)
    m = metric_from_jacobians(jet.lift_jac, jet.lift_hess)
    return float(np.sqrt(max(jet.dz @ m.g_inv @ jet.dz, 0.0)))


def eigen_decomposition(chart, u):
    """Eigenvalues (ascending) and g-orthonormal eigenvectors of the covariant Hessian."""
    from scipy.linalg import eigh

    jet = chart.jet(u)
    m = metric_from_jacobians(jet.lift_jac, jet.lift_hess)
    low = covariant_hessian_lower(m, jet.dz, jet.d2z)
    vals, vecs = eigh(low, m.g)
    # reproducible orientation: largest-magnitude entry of each eigenvector positive
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])
    return vals, vecs, jet, m


def init_state(chart: ChartFunctions, q0, v0=None, branch="smallest", cfg=None, sign=1.0):
    """Seed state at ``q0``: ``L = Z(q0)`` and ``lam`` from the covariant Hessian.

    ``branch`` picks the smallest or largest eigenvalue, or with ``"aligned"``
    the eigenvalue whose eigenvector is closest (in ``g``) to ``grad Z``.  If
    ``v0`` is None the corresponding eigenvector is used, multiplied by ``sign``.
    Returns ``(state, v0, cfg)`` with ``v0`` normalised in the chart and
    automatic arclength weights resolved in ``cfg``.
    """
    cfg = cfg or ContinuationConfig()
    q0 = np.asarray(q0, dtype=float)
    d = q0.size
    vals, vecs, jet, m = eigen_decomposition(chart, q0)
    cfg = cfg.with_auto_weights(np.abs(vals).max())
    grad = riemannian_gradient(m, jet.dz)
    if branch == "smallest":
        k = 0
    elif branch == "largest":
        k = len(vals) - 1
    elif branch == "aligned":
        # vecs are g-orthonormal, so g-projections are vecs^T g grad
        k = int(np.argmax(np.abs(vecs.T @ m.g @ grad)))
    else:
        raise ValueError(f"unknown branch {branch!r}")
    lam = float(vals[k])
    if v0 is None:
        v0 = sign * vecs[:, k]
    v0 = np.asarray(v0, dtype=float)
    nv = np.linalg.norm(v0)
    if nv == 0:
        raise ValueError("initial direction must be non-zero")
    v0 = v0 / nv
    w = _weights(d, cfg)
    t = np.concatenate([v0, [0.0, jet.dz @ v0]]) * w
    t /= np.linalg.norm(t)
    value = np.concatenate([[0.0], grad_op_residual(m, jet, grad, lam)])
    state = GEState(q0.copy(), lam, float(jet.z), t, float(np.abs(value).max()),
                    float(np.sqrt(max(jet.dz @ grad, 0.0))))
    return state, v0, cfg


def grad_op_residual(m, jet, grad, lam):
    H = m.g_inv @ covariant_hessian_lower(m, jet.dz, jet.d2z)
    return H @ grad - lam * grad


def _correct(chart, y_pred, t, w, cfg, h):
    """Newton on ``[F(y); t.(y - y_pred)] = 0``; returns (y, point, J, iters) or None."""
    d = y_pred.size - 2
    y = y_pred.copy()
    try:
        x = y / w
        pt = ge_evaluate(chart, x[:d], x[d], x[d + 1])
        for it in range(1, cfg.max_corrector_iter + 1):
            J = _system_jacobian(chart, x, pt, w)
            nv, _ = _normalized(pt)
            A = np.vstack([J, t])
            b = np.concatenate([nv, [t @ (y - y_pred)]])
            dy = np.linalg.solve(A, -b)
            if not np.all(np.isfinite(dy)) or (it > 1 and np.linalg.norm(dy) > 2.0 * h + 1e-12):
                return None
            y = y + dy
            x = y / w
            pt = ge_evaluate(chart, x[:d], x[d], x[d + 1])
            if _accepted(pt, cfg.tol, cfg.relative):
                return y, pt, it
    except (SingularMetric, NonFinite, np.linalg.LinAlgError):
        return None
    return None


def project_seed(chart, state: GEState, cfg: ContinuationConfig, v0, max_iter=30):
    """Move an off-curve seed onto the gradient extremal.

    Minimum-norm Gauss-Newton steps on the normalised residual (``d + 1``
    equations in ``d + 2`` unknowns) with backtracking; the tangent is then
    taken from the Jacobian null space and oriented along ``v0``.  Returns the
    projected state or None.
    """
    d = state.u.size
    w = _weights(d, cfg)
    x = state.x.copy()
    try:
        pt = ge_evaluate(chart, x[:d], x[d], x[d + 1])
        r = np.linalg.norm(_normalized(pt)[0])
        for _ in range(max_iter):
            if _accepted(pt, cfg.tol, cfg.relative):
                break
            J = _system_jacobian(chart, x, pt, w)
            dy = -np.linalg.lstsq(J, _normalized(pt)[0], rcond=None)[0]
            a = 1.0
            while a > 1e-6:
                xn = (x * w + a * dy) / w
                ptn = ge_evaluate(chart, xn[:d], xn[d], xn[d + 1])
                rn = np.linalg.norm(_normalized(ptn)[0])
                if rn < r:
                    break
                a *= 0.5
            else:
                return None
            x, pt, r = xn, ptn, rn
        else:
            return None
        J = _system_jacobian(chart, x, pt, w)
    except (SingularMetric, NonFinite, np.linalg.LinAlgError):
        return None
    ref = np.concatenate([v0, [0.0, pt.jet.dz @ v0]]) * w
    t = np.linalg.svd(J)[2][-1]
    if t @ ref < 0:
        t = -t
    gnorm = float(np.sqrt(max(pt.jet.dz @ pt.grad, 0.0)))
    return GEState(x[:d].copy(), float(x[d]), float(x[d + 1]), t,
                   float(np.abs(pt.value).max()), gnorm)


def _newton_to_critical(chart, u):
    """Euclidean-chart Newton displacement ``-D2Z^{-1} DZ`` (None if singular)."""
    jet = chart.jet(u)
    try:
        return -np.linalg.solve(jet.d2z, jet.dz)
    except np.linalg.LinAlgError:
        return None


def polish_critical_point(chart, u, tol=1e-10, max_iter=50):
    """Damped Newton on ``grad Z = 0`` inside the chart.

    Returns ``(u*, ||grad Z(u*)||_g, converged)``.
    """
    u = np.asarray(u, dtype=float).copy()
    gn = grad_norm_at(chart, u)
    for _ in range(max_iter):
        if gn < tol:
            return u, gn, True
        step = _newton_to_critical(chart, u)
        if step is None:
            break
        alpha = 1.0
        while alpha > 1e-6:
            cand = u + alpha * step
            try:
                gc = grad_norm_at(chart, cand)
            except (SingularMetric, NonFinite):
                gc = np.inf
            if gc < gn:
                u, gn = cand, gc
                break
            alpha *= 0.5
        else:
            break
    return u, gn, gn < tol


def step(state: GEState, chart: ChartFunctions, cfg: ContinuationConfig, h: float | None = None):
    """One predictor-corrector step.

    Returns ``(new_state, h_next)``; raises :class:`StepsizeUnderflow` when the
    step has to be shrunk below ``cfg.h_min``.
    """
    d = state.u.size
    w = _weights(d, cfg)
    h = state.h if h is None else h
    h = min(max(h, cfg.h_min), cfg.h_max)
    y0 = state.x * w
    while True:
        if h < cfg.h_min:
            raise StepsizeUnderflow(f"step size {h:g} below h_min={cfg.h_min:g}")
        out = _correct(chart, y0 + h * state.tangent, state.tangent, w, cfg, h)
        if out is not None:
            break
        h *= 0.5
    y, pt, iters = out
    x = y / w
    J = _system_jacobian(chart, x, pt, w)
    t = _null_tangent(J, state.tangent)
    gnorm = float(np.sqrt(max(pt.jet.dz @ pt.grad, 0.0)))
    new = GEState(x[:d].copy(), float(x[d]), float(x[d + 1]), t,
                  float(np.abs(pt.value).max()), gnorm, h, iters)
    h_next = min(1.5 * h, cfg.h_max) if iters <= 3 else h
    return new, h_next


def _approach_cap(chart, state, w):
    """Locate a critical point relative to the current state and direction.

    Returns ``(cap, where)``: ``where`` is ``"ahead"``, ``"behind"``, ``"here"``
    or ``"none"``; ``cap`` is the predictor length reaching the Newton estimate
    of a critical point ahead (inf otherwise).
    """
    step_u = _newton_to_critical(chart, state.u)
    tu = state.tangent[: state.u.size]
    ntu = np.linalg.norm(tu)
    if step_u is None or ntu == 0:
        return np.inf, "none"
    dist = np.linalg.norm(step_u)
    if dist <= 1e-10 * (1.0 + np.linalg.norm(state.u)):
        return np.inf, "here"
    cosang = (step_u @ tu) / (dist * ntu)
    if cosang > 0.5:
        return dist / ntu, "ahead"
    if cosang < -0.5:
        return np.inf, "behind"
    return np.inf, "none"


def _polished_state(chart, state, w, cfg, curvature_scale, reach=None):
    """Critical point near ``state`` as a final GEState, or None if Newton fails.

    Points where the Hessian has all but vanished (flat far field) are rejected,
    as are polished points farther than ``reach`` (default ``10 h``) from ``state``.
    """
    u_star, gn, ok = polish_critical_point(chart, state.u, tol=cfg.polish_tol)
    # surrogate charts bottom out above polish_tol; a hundredth of rho_local is enough
    ok = ok or gn < 1e-2 * cfg.rho_local
    reach = max(10 * state.h, 1e-6) if reach is None else reach
    if not ok or np.linalg.norm(u_star - state.u) > reach:
        return None
    vals = eigen_decomposition(chart, u_star)[0]
    if np.abs(vals).min() < 1e-6 * curvature_scale:
        return None
    jet = chart.jet(u_star)
    pt = ge_evaluate(chart, u_star, state.lam, jet.z)
    x_new = np.concatenate([u_star, [state.lam, jet.z]])
    return GEState(u_star, state.lam, float(jet.z), state.tangent.copy(),
                   float(np.abs(pt.value).max()), gn,
                   float(np.linalg.norm((x_new - state.x) * w)), 0)


def _exit_velocity(state):
    d = state.u.size
    v = state.tangent[:d]
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def resolve_extremal_curve(chart: ChartFunctions, q0, v0=None, cfg: ContinuationConfig | None = None,
                           sign=1.0, branch=None, seed_state: GEState | None = None):
    """Trace the gradient extremal through ``q0`` with initial direction ``v0``.

    Stops at the chart boundary, at a critical point (``||grad Z||_g <
    rho_local`` with the critical point ahead, then polished by Newton), after
    ``max_steps`` accepted steps, or when the step size underflows.
    """
    cfg = cfg or ContinuationConfig()
    branch = branch or cfg.branch
    if seed_state is None:
        state, v0, cfg = init_state(chart, q0, v0, branch=branch, cfg=cfg, sign=sign)
    else:
        state = seed_state
        if cfg.lam_weight is None or cfg.level_weight is None:
            raise ValueError("explicit arclength weights are required with seed_state")
    d = state.u.size
    w = _weights(d, cfg)
    state.h = cfg.h0
    states = [state]
    h = cfg.h0
    termination = MAX_STEPS
    critical = None

    if not chart.contains(state.u):
        return GESegment(states, CHART_BOUNDARY, state.u.copy(), _exit_velocity(state),
                         cfg.lam_weight, cfg.level_weight)
    # a seed at a critical point lies on every branch and needs no projection
    if seed_state is None and state.residual > 0 and state.grad_norm >= cfg.rho_local:
        pt0 = ge_evaluate(chart, state.u, state.lam, state.L)
        if not _accepted(pt0, cfg.tol, cfg.relative):
            projected = project_seed(chart, state, cfg, v0)
            if projected is None or not chart.contains(projected.u):
                return GESegment(states, STALLED, state.u.copy(), _exit_velocity(state),
                                 cfg.lam_weight, cfg.level_weight)
            projected.h = cfg.h0
            state = projected
            states = [state]

    curvature_scale = float(np.abs(eigen_decomposition(chart, state.u)[0]).max())
    # a critical point only counts once the curve has left the seed's neighbourhood
    armed = state.grad_norm > 10 * cfg.rho_local
    for _ in range(cfg.max_steps):
        cap, where = _approach_cap(chart, state, w)
        armed = armed or state.grad_norm > 10 * cfg.rho_local
        if armed and state.grad_norm < cfg.rho_local and where != "behind":
            if not cfg.polish:
                termination = CRITICAL_POINT
                critical = state.u.copy()
                break
            final = _polished_state(chart, state, w, cfg, curvature_scale)
            if final is not None:
                states.append(final)
                state = final
                termination = CRITICAL_POINT
                critical = final.u.copy()
                break
        h_try = min(h, cfg.approach_factor * cap) if armed else h
        h_try = max(h_try, cfg.h_min)
        try:
            new, h_next = step(state, chart, cfg, h_try)
        except StepsizeUnderflow:
            termination = STALLED
            # the normalised system is singular at a critical point; a curve
            # stuck just short of one ahead of it has reached it
            if armed and cfg.polish and where == "ahead" and cap * np.linalg.norm(state.tangent[:d]) < cfg.stall_reach:
                final = _polished_state(chart, state, w, cfg, curvature_scale, reach=cfg.stall_reach)
                if final is not None:
                    states.append(final)
                    state = final
                    termination = CRITICAL_POINT
                    critical = final.u.copy()
            break
        refinements = 0
        while not chart.contains(new.u) and refinements < cfg.boundary_refinements:
            refinements += 1
            try:
                new, h_next = step(state, chart, cfg, 0.5 * new.h)
            except StepsizeUnderflow:
                break
        if not chart.contains(new.u):
            termination = CHART_BOUNDARY
            break
        states.append(new)
        state = new
        h = h_next
    else:
        termination = MAX_STEPS

    return GESegment(states, termination, state.u.copy(), _exit_velocity(state),
                     cfg.lam_weight, cfg.level_weight, critical)


def trace_through(chart: ChartFunctions, q0, v0=None, cfg: ContinuationConfig | None = None,
                  sign=1.0, accept=None, max_passes=3):
    """Follow a gradient extremal through critical points that ``accept`` rejects.

    A gradient extremal crosses a nondegenerate critical point along one of the
    Hessian eigenvectors there.  When a segment ends at a critical point with
    ``accept(u)`` false, tracing restarts from it along the eigenvector closest
    to the arrival direction, keeping the orientation.  Returns the list of
    segments.
    """
    cfg = cfg or ContinuationConfig()
    segments = [resolve_extremal_curve(chart, q0, v0, cfg, sign=sign)]
    for _ in range(max_passes):
        seg = segments[-1]
        if seg.termination != CRITICAL_POINT or accept is None or accept(seg.exit_point):
            break
        pts = seg.points
        arrival = pts[-1] - pts[-2] if len(pts) > 1 else seg.exit_velocity
        if np.linalg.norm(arrival) == 0:
            arrival = seg.exit_velocity
        vals, vecs, _, m = eigen_decomposition(chart, seg.exit_point)
        k = int(np.argmax(np.abs(vecs.T @ m.g @ arrival)))
        v = vecs[:, k] * np.sign(vecs[:, k] @ m.g @ arrival)
        branch = "smallest" if k == 0 else "largest" if k == len(vals) - 1 else "aligned"
        segments.append(resolve_extremal_curve(chart, seg.exit_point, v, cfg, branch=branch))
    return segments


def turning_points(segment_or_levels, eps=1e-12):
    """Number of sign changes in successive level increments (ignoring |dL| < eps)."""
    if isinstance(segment_or_levels, GESegment):
        L = segment_or_levels.levels
    else:
        L = np.asarray(segment_or_levels, dtype=float)
    dL = np.diff(L)
    dL = dL[np.abs(dL) >= eps]
    if dL.size < 2:
        return 0
    s = np.sign(dL)
    return int(np.count_nonzero(s[1:] != s[:-1]))


def segment_rows(segment: GESegment, lift=None):
    """Rows ``step, u..., lam, L, residual[, lifted ambient...]`` for CSV dumps."""
    rows = []
    for k, s in enumerate(segment.states):
        row = [k, *s.u, s.lam, s.L, s.residual]
        if lift is not None:
            row.extend(np.asarray(lift(s.u)).tolist())
        rows.append(row)
    return rows


def segment_header(d, ambient_dim=None):
    h = ["step"] + [f"u{i + 1}" for i in range(d)] + ["lambda", "L", "residual"]
    if ambient_dim:
        h += [f"x{i + 1}" for i in range(ambient_dim)]
    return h

"""Command-line interface: demos, path comparisons, self-checks, chart dumps.

Exit codes: 0 success, 2 ran but did not converge, 1 configuration or
numerical error (including usage errors).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, fields, replace

import numpy as np

from . import checks
from .comparison_paths import (
    GADConfig,
    NTConfig,
    StringConfig,
    euclidean_ge,
    gad_trajectory,
    newton_trajectory,
    pairwise_distinctness,
    string_method,
    tangent_gradient_sines,
)
from .continuation import (
    CRITICAL_POINT,
    ContinuationConfig,
    resolve_extremal_curve,
    segment_header,
    segment_rows,
    trace_through,
    turning_points,
)
from .driver import RunConfig, record_summary, run
from .errors import ConfigError, GradexError
from .fixtures import (
    cstr_steady_states,
    fixtures_to_json,
    mb_nearby_saddle,
    mb_rightmost_minimum,
    mueller_brown_fixtures,
    yannik_fixtures,
)
from .geometry import ComposedChart, FlatChart
from .io import output_dir, read_kv_file, write_csv, write_json
from .manifold_learning import dump_embedding
from .potentials import (
    CSTRField,
    MuellerBrown,
    MuellerBrownSphere,
    SphereXYZ,
    SquaredMagnitude,
    StereographicChart,
    YannikPotential,
    hyperbolic_squared_length,
)
from .sampling import SamplerConfig, dump_cloud, make_demo_dynamics, sample_neighborhood
from .surrogates import build_chart, save_chart

log = logging.getLogger("gradex")

DEMOS = ("mb-plane", "mb-sphere", "sphere-xyz", "meander", "cstr", "vdp-disk")
COMPARE = ("mb", "meander")

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_SECTIONS = {"run": RunConfig, "sampler": SamplerConfig, "continuation": ContinuationConfig}
# run fields that are not plain scalars
_RUN_SKIP = ("p0", "sampler", "continuation", "direction_hint")


def _coerce(raw, default, key):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, str):
            return raw
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {key}") from exc


def _defaults(section):
    cls = _SECTIONS[section]
    if section == "run":
        return {f.name: f.default for f in fields(cls) if f.name not in _RUN_SKIP}
    return {f.name: f.default for f in fields(cls)}


def parse_config(values: dict):
    """Validate dotted ``section.key`` strings into per-section override dicts."""
    out = {name: {} for name in _SECTIONS}
    for key, raw in values.items():
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigError(f"unknown config key {key!r}")
        defaults = _defaults(section)
        if name not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        out[section][name] = _coerce(raw, defaults[name], key)
    return out


def load_settings(args):
    """Config file values overridden by command-line flags."""
    settings = parse_config(read_kv_file(args.config)) if args.config else parse_config({})
    run_o, cont_o = settings["run"], settings["continuation"]
    if args.seed is not None:
        run_o["seed"] = args.seed
    if args.d is not None:
        run_o["d"] = args.d
    if args.rho is not None:
        run_o["rho"] = args.rho
    if args.max_charts is not None:
        run_o["max_charts"] = args.max_charts
    if args.branch is not None:
        run_o["branch"] = args.branch
        cont_o["branch"] = args.branch
    if args.direction_sign is not None:
        run_o["sign"] = 1.0 if args.direction_sign == "+" else -1.0
    return settings


def _continuation(settings, **base):
    try:
        return ContinuationConfig(**{**base, **settings["continuation"]})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _sign(settings, default):
    return settings["run"].get("sign", default)


def _branch(settings, default="smallest"):
    return settings["run"].get("branch", default)


# ---------------------------------------------------------------------------
# demos
# ---------------------------------------------------------------------------

def _nearest(point, fixtures):
    dists = [float(np.linalg.norm(point - f["point"])) for f in fixtures]
    k = int(np.argmin(dists))
    return fixtures[k], dists[k]


def demo_mb_plane(settings, out):
    E = MuellerBrown()
    fx = mueller_brown_fixtures()
    x0 = mb_rightmost_minimum()
    cfg = _continuation(settings)
    res = euclidean_ge(E, x0, _branch(settings), cfg, sign=_sign(settings, -1.0))
    seg = res.info["segment"]
    write_csv(out / "ge_path.csv", segment_header(2), segment_rows(seg))
    write_json(out / "fixtures.json", fixtures_to_json(fx))
    near, dist = _nearest(res.end, fx)
    ok = seg.termination == CRITICAL_POINT and res.grad_norm < 1e-6
    manifest = {"demo": "mb-plane", "start": x0, "termination": seg.termination,
                "states": len(seg.states), "end": res.end, "grad_norm": res.grad_norm,
                "nearest_fixture": {"kind": near["kind"], "point": near["point"], "distance": dist},
                "turning_points": turning_points(seg), "continuation": asdict(cfg)}
    return manifest, 0 if ok else 2


def mb_sphere_config(settings=None, **overrides):
    """Driver configuration for the Mueller-Brown sphere demo.

    The first direction is oriented by the sphere image of the planar ``-x``
    direction at the minimum (towards the nearby saddle); ``sign = -1`` reverses it.
    """
    settings = settings or parse_config({})
    E = MuellerBrownSphere()
    m = mb_rightmost_minimum()
    h = 1e-6
    hint = (E.planar_to_sphere(m - [h, 0.0]) - E.planar_to_sphere(m + [h, 0.0])) / (2 * h)
    run_o = dict(settings["run"])
    run_o.update(overrides)
    try:
        sampler = SamplerConfig(**settings["sampler"])
        cont = ContinuationConfig(**{"relative": True, **settings["continuation"]})
        return RunConfig(p0=tuple(E.planar_to_sphere(m)), sampler=sampler, continuation=cont,
                         direction_hint=tuple(hint), **run_o)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def mb_sphere_saddle():
    """Sphere image of the planar saddle next to the rightmost minimum."""
    return MuellerBrownSphere().planar_to_sphere(mb_nearby_saddle())


def demo_mb_sphere(settings, out):
    E = MuellerBrownSphere()
    cfg = mb_sphere_config(settings)
    rec = run(cfg, E, make_demo_dynamics("mb_sphere", potential=E), ambient_field=E.gradient)
    for c in rec.charts:
        rows = [[k, *s.u, s.lam, s.L, s.residual, *c.lifted[k]] for k, s in enumerate(c.segment.states)]
        write_csv(out / f"chart_{c.chart_id:02d}_segment.csv", segment_header(cfg.d, 3), rows)
    saddle = mb_sphere_saddle()
    final = {"point": rec.final_point, "grad_norm": rec.final_grad_norm,
             "ambient_field_norm": rec.ambient_field_norm,
             "planar_image": None if rec.final_point is None else E.sphere_to_planar(rec.final_point),
             "saddle_fixture": saddle,
             "distance_to_saddle": None if rec.final_point is None
             else float(np.linalg.norm(rec.final_point - saddle))}
    manifest = {"demo": "mb-sphere", "config": asdict(cfg), "run": record_summary(rec), "final": final}
    return manifest, 0 if rec.converged else 2


def sphere_xyz_curves(settings=None, branch=None, sign=None, north_steps=400):
    """GE of ``xyz`` from the South pole in both stereographic charts.

    The curve is traced from ``u = 0`` in the chart centred on the South pole,
    then retraced in the chart centred on the North pole starting from its end
    point and heading back.  Returns both segments, their ambient images and
    the two charts.
    """
    settings = settings or parse_config({})
    X = SphereXYZ()
    south = ComposedChart(StereographicChart("north"), X)
    north = ComposedChart(StereographicChart("south"), X)
    cfg = _continuation(settings)
    branch = branch or _branch(settings)
    sign = _sign(settings, 1.0) if sign is None else sign
    seg_s = resolve_extremal_curve(south, np.zeros(2), None, cfg, sign=sign, branch=branch)
    P_s = np.array([south.lift(u) for u in seg_s.points])
    u_n = north.lift_map.project(P_s[-1])
    back = P_s[-2] - P_s[-1]
    v0 = np.linalg.lstsq(north.jet(u_n).lift_jac, back, rcond=None)[0]
    seg_n = resolve_extremal_curve(north, u_n, v0, replace(cfg, max_steps=north_steps), branch="aligned")
    P_n = np.array([north.lift(u) for u in seg_n.points])
    return seg_s, P_s, seg_n, P_n


def overlap_hausdorff(P, Q, z_min=-0.95):
    """Hausdorff distance between two sphere curves restricted to ``z > z_min``."""
    from .comparison_paths import _point_to_polyline
    A, B = P[P[:, 2] > z_min], Q[Q[:, 2] > z_min]
    return float(max(_point_to_polyline(A, Q).max(), _point_to_polyline(B, P).max()))


def critical_points_hit(P, tol=1e-3):
    cps = SphereXYZ.critical_points()
    return [cp for cp in cps if np.min(np.linalg.norm(P - cp, axis=1)) < tol]


def demo_sphere_xyz(settings, out):
    seg_s, P_s, seg_n, P_n = sphere_xyz_curves(settings)
    write_csv(out / "ge_south_chart.csv", segment_header(2, 3), segment_rows(seg_s, StereographicChart("north").lift))
    write_csv(out / "ge_north_chart.csv", segment_header(2, 3), segment_rows(seg_n, StereographicChart("south").lift))
    hits = critical_points_hit(P_s)
    dist = overlap_hausdorff(P_s, P_n)
    write_json(out / "critical_points.json", SphereXYZ.critical_points())
    manifest = {"demo": "sphere-xyz", "termination_south": seg_s.termination,
                "termination_north": seg_n.termination, "critical_points_hit": hits,
                "overlap_hausdorff": dist}
    ok = seg_s.termination == CRITICAL_POINT and len(hits) >= 2 and dist <= 1e-3
    return manifest, 0 if ok else 2


def yannik_bottom_minimum():
    mins = [f for f in yannik_fixtures() if f["kind"] == "minimum"]
    return min(mins, key=lambda f: f["point"][1])["point"]


def demo_meander(settings, out):
    Y = YannikPotential()
    x0 = yannik_bottom_minimum()
    cfg = _continuation(settings)
    res = euclidean_ge(Y, x0, _branch(settings), cfg, sign=_sign(settings, 1.0))
    seg = res.info["segment"]
    write_csv(out / "ge_path.csv", segment_header(2), segment_rows(seg))
    write_json(out / "fixtures.json", fixtures_to_json(yannik_fixtures()))
    manifest = {"demo": "meander", "start": x0, "termination": seg.termination,
                "states": len(seg.states), "end": res.end, "grad_norm": res.grad_norm,
                "turning_points": turning_points(seg)}
    return manifest, 0 if seg.termination == CRITICAL_POINT else 2


def cstr_curve(settings=None):
    """GE of ``X^T X`` from the stable CSTR steady state to the next steady state."""
    settings = settings or parse_config({})
    F = CSTRField()
    E = SquaredMagnitude(F)
    states = cstr_steady_states(F)
    stable = next(s["point"] for s in states if s["stable"])
    cfg = _continuation(settings)
    segs = trace_through(FlatChart(E), stable, cfg=cfg, sign=_sign(settings, 1.0),
                         accept=lambda u: np.linalg.norm(F(u)) < 1e-6)
    return segs, states, F


def demo_cstr(settings, out):
    segs, states, F = cstr_curve(settings)
    rows = []
    for k, seg in enumerate(segs):
        rows += [[k, *r] for r in segment_rows(seg)]
    write_csv(out / "ge_path.csv", ["segment"] + segment_header(2), rows)
    write_json(out / "steady_states.json", fixtures_to_json(states))
    end = segs[-1].exit_point
    near, dist = _nearest(end, states)
    field_norm = float(np.linalg.norm(F(end)))
    manifest = {"demo": "cstr", "segments": [s.termination for s in segs], "end": end,
                "field_norm": field_norm,
                "nearest_steady_state": {"point": near["point"], "stable": near["stable"], "distance": dist}}
    return manifest, 0 if field_norm < 1e-6 and dist < 1e-4 else 2


def vdp_grid(n=41, radius=0.95, mu=2.0, power=1):
    """Rows ``y1, y2, g(X, X)`` on an ``n x n`` grid clipped to the disk of ``radius``."""
    ax = np.linspace(-radius, radius, n)
    rows = []
    for y1 in ax:
        for y2 in ax:
            y = np.array([y1, y2])
            if y @ y <= radius * radius:
                rows.append([y1, y2, hyperbolic_squared_length(y, mu, power)])
    return np.array(rows)


def demo_vdp_disk(settings, out):
    grid = vdp_grid()
    write_csv(out / "vdp_grid.csv", ["y1", "y2", "squared_length"], grid)
    origin = grid[np.argmin(np.abs(grid[:, :2]).sum(axis=1))]
    manifest = {"demo": "vdp-disk", "rows": len(grid), "origin_value": origin[2],
                "max_value": grid[:, 2].max()}
    return manifest, 0


_DEMO_FUNCS = {"mb-plane": demo_mb_plane, "mb-sphere": demo_mb_sphere, "sphere-xyz": demo_sphere_xyz,
               "meander": demo_meander, "cstr": demo_cstr, "vdp-disk": demo_vdp_disk}


# ---------------------------------------------------------------------------
# comparisons
# ---------------------------------------------------------------------------

def comparison_setup(potential):
    """Energy, start point, string end point and per-method configs."""
    if potential == "mb":
        fx = mueller_brown_fixtures()
        mins = [f["point"] for f in fx if f["kind"] == "minimum"]
        start = mb_rightmost_minimum()
        # the string runs to the minimum on the far side of the nearby saddle
        other = min((m for m in mins if np.linalg.norm(m - start) > 1e-6),
                    key=lambda m: np.linalg.norm(m - mb_nearby_saddle()))
        return {"energy": MuellerBrown(), "start": start, "end": other, "sign": -1.0,
                "nt_direction": (1.0, 0.0), "nt": NTConfig(), "gad": GADConfig(), "string": StringConfig()}
    if potential == "meander":
        fx = yannik_fixtures()
        start = yannik_bottom_minimum()
        other = next(f["point"] for f in fx if f["kind"] == "minimum"
                     and np.linalg.norm(f["point"] - start) > 1e-6)
        # gradients here are O(0.1), so steps are scaled up accordingly
        return {"energy": YannikPotential(), "start": start, "end": other, "sign": 1.0,
                "nt_direction": (0.0, 1.0), "nt": NTConfig(h=0.5),
                "gad": GADConfig(dt=0.2, max_steps=100000, record_every=20),
                "string": StringConfig(dt=5.0, tol=1e-6, max_iter=50000)}
    raise ConfigError(f"unknown potential {potential!r}")


def run_comparison(potential, settings=None):
    settings = settings or parse_config({})
    s = comparison_setup(potential)
    E, x0, sign = s["energy"], s["start"], _sign(settings, s["sign"])
    methods = {
        "GE": lambda: euclidean_ge(E, x0, _branch(settings), _continuation(settings), sign=sign),
        "NT": lambda: newton_trajectory(E, x0, r=s["nt_direction"], cfg=s["nt"], sign=sign),
        "GAD": lambda: gad_trajectory(E, x0, cfg=s["gad"], sign=sign),
        "string": lambda: string_method(E, x0, s["end"], cfg=s["string"]),
    }
    results, status = {}, {}
    for name, fn in methods.items():
        try:
            res = fn()
        except (GradexError, np.linalg.LinAlgError, FloatingPointError) as exc:
            status[name] = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
            continue
        results[name] = res
        status[name] = {"ok": bool(res.converged), "nodes": len(res.nodes), "end": res.end,
                        "grad_norm": res.grad_norm}
    return results, status


def cmd_compare(potential, settings, out):
    results, status = run_comparison(potential, settings)
    for name, res in results.items():
        write_csv(out / f"{name.lower()}.csv", [f"x{i + 1}" for i in range(res.nodes.shape[1])], res.nodes)
    ge = results.get("GE")
    if ge is not None:
        seg = ge.info["segment"]
        write_csv(out / "ge_levels.csv", segment_header(2), segment_rows(seg))
        status["GE"]["turning_points"] = turning_points(seg)
    if "string" in results:
        E = comparison_setup(potential)["energy"]
        status["string"]["max_sine"] = float(tangent_gradient_sines(E, results["string"].nodes).max())
    names = list(results)
    D = pairwise_distinctness([results[n] for n in names])
    write_csv(out / "hausdorff.csv", ["method"] + names, [[n, *row] for n, row in zip(names, D)])
    manifest = {"compare": potential, "methods": status, "hausdorff": {"order": names, "matrix": D}}
    n_ok = sum(1 for v in status.values() if v["ok"])
    return manifest, 0 if n_ok >= 3 else 2


# ---------------------------------------------------------------------------
# dump-chart
# ---------------------------------------------------------------------------

def cmd_dump_chart(settings, out, point=None):
    E = MuellerBrownSphere()
    cfg = mb_sphere_config(settings)
    p = np.asarray(cfg.p0 if point is None else point, dtype=float)
    dyn = make_demo_dynamics("mb_sphere", potential=E)
    p = sample_neighborhood(p, replace(cfg.sampler, N=1, sigma=1e-300), dyn).points[0]
    cloud = sample_neighborhood(p, replace(cfg.sampler, seed=cfg.seed), dyn)
    energies = np.array([E(x) for x in cloud.points])
    chart = build_chart(cloud, energies, cfg.d, chart_id=1, seed=cfg.seed,
                        threshold_factor=cfg.boundary_factor, threshold_percentile=cfg.boundary_percentile)
    dump_cloud(out / "cloud.csv", cloud, energies)
    dump_embedding(out / "embedding.csv", chart.embedding)
    save_chart(out / "chart", chart)
    manifest = {"dump-chart": {"center": cloud.center, "eps": chart.embedding.eps,
                               "eigenvalues": chart.embedding.eigenvalues,
                               "boundary_threshold": chart.boundary_threshold,
                               "lift_ell": chart.lift_gp.ell, "energy_ell": chart.energy_gp.ell}}
    return manifest, 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _point(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' file")
    common.add_argument("--out", default="gradex_out", help="output directory (GRADEX_OUT overrides)")
    common.add_argument("--seed", type=int)
    common.add_argument("--d", type=int, help="chart dimension")
    common.add_argument("--rho", type=float, help="convergence threshold on ||grad Z||")
    common.add_argument("--max-charts", type=int)
    common.add_argument("--branch", choices=("smallest", "largest"))
    common.add_argument("--direction-sign", choices=("+", "-"))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="gradex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("demo", parents=[common], help="run a demo pipeline")
    p.add_argument("name", choices=DEMOS)
    p = sub.add_parser("compare", parents=[common], help="GE, NT, GAD and string paths side by side")
    p.add_argument("potential", choices=COMPARE)
    p = sub.add_parser("check", parents=[common], help="fast property checks")
    p.add_argument("--inject-fault", choices=checks.FAULTS, help=argparse.SUPPRESS)
    p = sub.add_parser("dump-chart", parents=[common], help="learn one MB-sphere chart and save it")
    p.add_argument("--point", type=_point, help="ambient seed point x,y,z (default: the minimum)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = load_settings(args)
        if args.command == "check":
            results = checks.run_checks(args.inject_fault)
            print(checks.format_table(results))
            return 0 if all(ok for _, ok, _ in results) else 1
        base = output_dir(args.out)
        if args.command == "demo":
            out = base / args.name
            manifest, code = _DEMO_FUNCS[args.name](settings, out)
        elif args.command == "compare":
            out = base / f"compare-{args.potential}"
            manifest, code = cmd_compare(args.potential, settings, out)
        else:
            out = base / "dump-chart"
            manifest, code = cmd_dump_chart(settings, out, args.point)
        manifest["exit_code"] = code
        write_json(out / "manifest.json", manifest)
        print(f"{out / 'manifest.json'}: exit {code}")
        return code
    except (GradexError, ValueError, OSError) as exc:
        print(f"gradex: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

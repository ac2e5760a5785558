"""Command-line entry point: ``walkroll <generate|search|contour|simulate|report>``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, storage
from .analysis import benchmark_row, summarize
from .control import ControllerConfig, GaitController
from .geometry import BodyParams, GeometryError, InfeasibleProfileError, RobotDesign, generate_leg
from .search import (SearchAborted, SearchConstraints, envelope_turn, lower_envelope, pareto_front,
                     run_search)
from .sim import EpisodeConfig, SensorConfig, SimulationError, Terrain, run_episode
from .statics import build_moment_field, eval_J1, eval_J2, optimal_trajectory, select_thresholds

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("walkroll")


class ConfigError(ValueError):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seeds: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    python: str = platform.python_version()
    started: float = field(default_factory=time.time)
    finished: float | None = None

    def write(self, out_dir: Path) -> Path:
        self.finished = time.time()
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")
        return path


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _body_from_args(a) -> BodyParams:
    return BodyParams(width=a.width, height=a.height, com_offset=(a.com_y, a.com_z),
                      joint_offset=(a.joint_y, a.joint_z), mass=a.mass)


def _write(out: Path, name: str, text: str, manifest: RunManifest) -> Path:
    p = out / name
    p.write_text(text)
    manifest.outputs.append(name)
    return p


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate(a) -> int:
    body = _body_from_args(a)
    front = generate_leg(a.seed, body)
    design = RobotDesign.symmetric(body, front)
    out_path = Path(a.out)
    out = _out_dir(out_path.parent if out_path.parent != Path("") else Path("."))
    m = RunManifest("generate", {"body": asdict(body)}, seeds=[a.seed])
    storage.save_design(out_path, design, manifest={"manifest": "manifest.json"})
    m.outputs.append(out_path.name)
    _write(out, out_path.stem + ".svg", storage.design_svg(design), m)
    m.write(out)
    print(f"wrote {out_path} (max radius {design.max_leg_radius * 1e3:.1f} mm)")
    return EXIT_OK


def cmd_search(a) -> int:
    c = SearchConstraints(n_samples=a.samples, seed=a.seed, n_theta=a.n_theta, n_dphi=a.n_dphi,
                          failure_limit=a.failure_limit)
    out = _out_dir(a.out_dir)
    m = RunManifest("search", {"n_samples": c.n_samples, "n_theta": c.n_theta, "n_dphi": c.n_dphi,
                               "com_y": c.com_y, "com_z": c.com_z, "joint_arc": c.joint_arc,
                               "failure_limit": c.failure_limit}, seeds=[a.seed])
    res = run_search(c, workers=a.workers)
    _write(out, "results.csv", storage.search_to_csv(res.designs), m)
    front = pareto_front(res.designs)
    _write(out, "pareto.csv", storage.search_to_csv(front), m)
    j1 = np.array([s.score.J1 for s in res.designs])
    j2 = np.array([s.score.J2 for s in res.designs])
    plot = storage.SvgPlot(title="design search", xlabel="J2 [rad]", ylabel="J1 [mm rad]")
    plot.points(j2, j1 * 1e3, color="#999", r=1.5, label="samples")
    plot.points([s.score.J2 for s in front], [s.score.J1 * 1e3 for s in front], color="#d62728", r=3,
                label="Pareto")
    centres, mins = lower_envelope(res.designs)
    plot.line(centres, mins * 1e3, color="#1f77b4", label="lower envelope")
    _write(out, "scatter.svg", plot.render(), m)
    m.write(out)
    print(f"{len(res.designs)} designs, {len(res.failures)} infeasible, envelope turn at J2 = "
          f"{envelope_turn(centres, mins):.2f}")
    return EXIT_OK


def cmd_contour(a) -> int:
    design = storage.load_design(a.design)
    out = _out_dir(a.out_dir)
    m = RunManifest("contour", {"n_theta": a.n_theta, "n_dphi": a.n_dphi}, inputs=[str(a.design)])
    f = build_moment_field(design, a.n_theta, a.n_dphi)
    tr = optimal_trajectory(f)
    th = select_thresholds(f)
    _write(out, "contour.csv", storage.contour_to_csv(f), m)
    deg = np.degrees
    plot = storage.SvgPlot(title="best leg angle per body angle", xlabel="body angle [deg]",
                           ylabel="leg angle [deg]")
    plot.line(deg(f.theta_grid), deg(tr.dphi), label="argmin")
    q = [deg(th.targets(th.region(p))[0]) for p in np.mod(-f.theta_grid, 2 * math.pi)]
    plot.line(deg(f.theta_grid), q, color="#d62728", label="front command")
    _write(out, "contour.svg", plot.render(), m)
    cfg = ControllerConfig(thresholds=th, dphi_range=design.dphi_range)
    storage.save_controller(out / "controller.json", cfg)
    m.outputs.append("controller.json")
    m.write(out)
    print(f"J1 {eval_J1(f) * 1e3:.2f} mm*rad  J2 {eval_J2(f):.3f} rad  max slope {tr.max_slope:.3f}")
    print(f"State 2 from {math.degrees(th.theta_12):.0f} deg, State 3 from {math.degrees(th.theta_23):.0f} deg, "
          f"State 1 from {math.degrees(th.theta_31):.0f} deg")
    return EXIT_OK


def _parse_script(text: str | None):
    if not text:
        return ()
    out = []
    for item in text.split(","):
        t, mode = item.split(":")
        if mode not in ("walking", "rolling"):
            raise ConfigError(f"unknown mode in script: {mode}")
        out.append((float(t), mode))
    return tuple(out)


def cmd_simulate(a) -> int:
    design = storage.load_design(a.design)
    if a.controller:
        cfg = storage.load_controller(a.controller)
    else:
        cfg = ControllerConfig(thresholds=select_thresholds(build_moment_field(design, 360, 28)),
                               dphi_range=design.dphi_range)
    if a.duration < 0:
        raise ConfigError("duration must be non-negative")
    steps = ((a.step_at, a.step_at + a.step_length, a.step_height),) if a.step_height > 0 else ()
    terrain = Terrain(steps=steps, mu=a.mu, rolling_damping=a.damping)
    out = _out_dir(a.out_dir)
    m = RunManifest("simulate", {"duration": a.duration, "mode": a.mode, "mu": a.mu, "steps": steps,
                                 "damping": a.damping, "script": a.script, "controller": cfg.to_dict()},
                    seeds=list(a.seeds), inputs=[str(a.design)])
    report = []
    status = EXIT_OK
    for seed in a.seeds:
        ctrl = GaitController(cfg, mode=a.mode)
        ep = EpisodeConfig(duration=a.duration, sensor=SensorConfig(rng_seed=seed),
                           script=_parse_script(a.script))
        trace = run_episode(design, ctrl, terrain, ep)
        _write(out, f"trace_{seed}.csv", storage.trace_to_csv(trace), m)
        arr = trace.array()
        plot = storage.SvgPlot(title=f"seed {seed}", xlabel="t [s]", ylabel="CoM forward [m]")
        plot.line(arr[:, 0], arr[:, 3])
        _write(out, f"trajectory_{seed}.svg", plot.render(), m)
        s = summarize(trace, design.body.mass)
        row = {"seed": seed, **s.as_dict(), **benchmark_row(s, design.body.mass, mode=a.mode)}
        report.append(row)
        if trace.truncated:
            status = EXIT_INFEASIBLE
    _write(out, "report.json", json.dumps(report, indent=1, default=float) + "\n", m)
    m.write(out)
    for r in report:
        print(f"seed {r['seed']}: {r['distance']:.3f} m, {r['speed']:.3f} m/s ({r['BL/s']:.2f} BL/s), "
              f"{r['revolutions']:.2f} rev, CoT {r['cost_of_transport']:.2f}")
    return status


def cmd_report(a) -> int:
    if not a.traces:
        raise ConfigError("report needs at least one trace file")
    rows = []
    for path in a.traces:
        tr = storage.read_trace(path)
        t, y = tr["t[s]"], tr["com_y[m]"]
        duty = tr["duty_front[1]"] + tr["duty_rear[1]"]
        dt = float(np.median(np.diff(t))) if t.size > 1 else 0.0
        energy = float(np.sum(duty[1:]) * 2 * a.voltage * a.i_max * dt)
        T = float(t[-1] - t[0]) if t.size > 1 else 0.0
        dist = float(y[-1] - y[0]) if t.size > 1 else 0.0
        speed = dist / T if T > 0 else 0.0
        cot = energy / (a.mass * 9.81 * dist) if dist > 0 else math.inf
        rows.append((Path(path).name, a.mass, a.length, 2, speed, speed / a.length,
                     energy / T if T > 0 else 0.0, cot))
    head = ("trace", "mass[kg]", "length[m]", "DoF", "speed[m/s]", "BL/s", "power[W]", "CoT")
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        lines.append("| " + " | ".join([r[0], f"{r[1]:.3f}", f"{r[2]:.3f}", str(r[3]), f"{r[4]:.3f}",
                                        f"{r[5]:.2f}", f"{r[6]:.2f}", f"{r[7]:.2f}"]) + " |")
    text = "\n".join(lines) + "\n"
    if a.out:
        Path(a.out).write_text(text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="walkroll", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate one leg design from a seed")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True, help="design JSON path")
    for name, default in (("width", 0.06), ("height", 0.06), ("com-y", 0.0), ("com-z", 0.0),
                          ("joint-y", 0.03), ("joint-z", 0.03), ("mass", 0.373)):
        g.add_argument(f"--{name}", type=float, default=default, help="SI units")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("search", help="randomised design search")
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--n-theta", type=int, default=360)
    s.add_argument("--n-dphi", type=int, default=28)
    s.add_argument("--failure-limit", type=float, default=0.5)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_search)

    c = sub.add_parser("contour", help="moment field, optimal schedule and thresholds")
    c.add_argument("design")
    c.add_argument("--n-theta", type=int, default=720)
    c.add_argument("--n-dphi", type=int, default=56)
    c.add_argument("--out-dir", required=True)
    c.set_defaults(func=cmd_contour)

    m = sub.add_parser("simulate", help="run seeded episodes")
    m.add_argument("design")
    m.add_argument("--controller", help="controller JSON (default: thresholds from the design)")
    m.add_argument("--mode", choices=("rolling", "walking"), default="rolling")
    m.add_argument("--duration", type=float, default=10.0)
    m.add_argument("--seeds", type=int, nargs="+", default=[0])
    m.add_argument("--mu", type=float, default=0.5)
    m.add_argument("--damping", type=float, default=Terrain.rolling_damping)
    m.add_argument("--step-height", type=float, default=0.0)
    m.add_argument("--step-at", type=float, default=0.3)
    m.add_argument("--step-length", type=float, default=1.0)
    m.add_argument("--script", help="mode requests, e.g. '5:rolling,12:walking'")
    m.add_argument("--out-dir", required=True)
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="benchmark table from trace CSVs")
    r.add_argument("traces", nargs="*")
    r.add_argument("--mass", type=float, default=0.373)
    r.add_argument("--length", type=float, default=0.107)
    r.add_argument("--voltage", type=float, default=7.4)
    r.add_argument("--i-max", type=float, default=1.0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except (InfeasibleProfileError, SearchAborted, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except storage.FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""File formats: versioned JSON (designs, controller configs), CSV tables and SVG plots."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .control import ControllerConfig
from .geometry import BodyParams, LegProfile, RobotDesign

FORMAT_VERSION = 1
DESIGN_UNITS = {"length": "m", "angle": "rad", "mass": "kg", "inertia": "kg*m^2", "rate": "rad/s"}


class FileFormatError(ValueError):
    """Malformed or incompatible file contents."""


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def _leg_to_dict(leg: LegProfile) -> dict:
    return {
        "side": leg.side,
        "phi": leg.phi.tolist(),
        "r": leg.r.tolist(),
        "dphi_range": list(leg.dphi_range),
        "keypoints": leg.keypoints.tolist(),
    }


def _leg_from_dict(d: dict) -> LegProfile:
    return LegProfile(
        phi=np.array(d["phi"], dtype=float),
        r=np.array(d["r"], dtype=float),
        dphi_range=tuple(d["dphi_range"]),
        keypoints=np.array(d["keypoints"], dtype=float).reshape(-1, 2),
        side=d["side"],
    )


def design_to_dict(design: RobotDesign, manifest: dict | None = None) -> dict:
    doc = {
        "format": "walkroll-design",
        "version": FORMAT_VERSION,
        "units": DESIGN_UNITS,
        "body": asdict(design.body),
        "front_leg": _leg_to_dict(design.front_leg),
        "rear_leg": _leg_to_dict(design.rear_leg),
        "leg_mass": design.leg_mass,
        "leg_rate_limit": design.leg_rate_limit,
    }
    if manifest is not None:
        doc["manifest"] = manifest
    return doc


def _check_header(doc: dict, kind: str) -> None:
    if not isinstance(doc, dict) or doc.get("format") != kind:
        raise FileFormatError(f"not a {kind} document")
    if doc.get("version") != FORMAT_VERSION:
        raise FileFormatError(f"unsupported {kind} version {doc.get('version')!r}")


def design_from_dict(doc: dict) -> RobotDesign:
    _check_header(doc, "walkroll-design")
    if doc.get("units") != DESIGN_UNITS:
        raise FileFormatError("unexpected unit tags")
    try:
        b = dict(doc["body"])
        b["com_offset"] = tuple(b["com_offset"])
        b["joint_offset"] = tuple(b["joint_offset"])
        return RobotDesign(
            body=BodyParams(**b),
            front_leg=_leg_from_dict(doc["front_leg"]),
            rear_leg=_leg_from_dict(doc["rear_leg"]),
            leg_mass=float(doc["leg_mass"]),
            leg_rate_limit=float(doc["leg_rate_limit"]),
        )
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"malformed design document: {exc}") from exc


def dumps(doc: dict) -> str:
    # repr-exact floats, stable key order -> byte-identical files for identical input
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def save_design(path, design: RobotDesign, manifest: dict | None = None) -> None:
    Path(path).write_text(dumps(design_to_dict(design, manifest)))


def load_design(path) -> RobotDesign:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return design_from_dict(doc)


def controller_to_dict(cfg: ControllerConfig) -> dict:
    return {
        "format": "walkroll-controller",
        "version": FORMAT_VERSION,
        "units": {"angle": "rad", "time": "s", "voltage": "V", "current": "A"},
        "config": cfg.to_dict(),
    }


def controller_from_dict(doc: dict) -> ControllerConfig:
    _check_header(doc, "walkroll-controller")
    try:
        return ControllerConfig.from_dict(doc["config"])
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"malformed controller document: {exc}") from exc


def save_controller(path, cfg: ControllerConfig) -> None:
    Path(path).write_text(dumps(controller_to_dict(cfg)))


def load_controller(path) -> ControllerConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return controller_from_dict(doc)


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

TRACE_HEADER = (
    "t[s]", "theta_G[deg]", "omega[deg/s]", "com_y[m]", "com_z[m]",
    "leg_front[deg]", "leg_rear[deg]", "cmd_front[deg]", "cmd_rear[deg]",
    "duty_front[1]", "duty_rear[1]", "theta_hat[deg]", "mode", "state", "events",
)
_DEG_COLS = {1, 2, 5, 6, 7, 8, 11}

SEARCH_HEADER = (
    "index", "seed", "J1[m*rad]", "J2[rad]", "max_leg_radius[m]",
    "com_y[m]", "com_z[m]", "joint_y[m]", "joint_z[m]", "inverted_pendulum",
)

CONTOUR_HEADER = ("theta_G[deg]", "dphi[deg]", "arm_front[m]", "arm_rear[m]", "arm[m]")


def _fmt(v: float) -> str:
    return "" if isinstance(v, float) and math.isnan(v) else repr(float(v))


def trace_to_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    events: dict[int, list[str]] = {}
    if len(trace):
        t = trace.column("t")
        for te, text in trace.events:
            k = int(np.clip(np.searchsorted(t, te - 1e-9), 0, len(t) - 1))
            events.setdefault(k, []).append(text)
    for i, row in enumerate(trace.rows):
        vals = [math.degrees(v) if j in _DEG_COLS else v for j, v in enumerate(row)]
        w.writerow([_fmt(v) for v in vals] + [trace.mode[i], trace.state[i], "|".join(events.get(i, []))])
    return buf.getvalue()


def read_table(path, header) -> list[dict]:
    """Parse a CSV, insisting on the exact header."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        try:
            got = next(r)
        except StopIteration as exc:
            raise FileFormatError(f"{path}: empty file") from exc
        if tuple(got) != tuple(header):
            raise FileFormatError(f"{path}: unexpected header {got}")
        rows = []
        for n, row in enumerate(r, start=2):
            if len(row) != len(header):
                raise FileFormatError(f"{path}:{n}: expected {len(header)} fields")
            rows.append(dict(zip(header, row)))
    return rows


def read_trace(path) -> dict[str, np.ndarray]:
    rows = read_table(path, TRACE_HEADER)
    out = {}
    for j, name in enumerate(TRACE_HEADER):
        vals = [row[name] for row in rows]
        if name in ("mode", "state", "events"):
            out[name] = np.array(vals, dtype=object)
        else:
            try:
                out[name] = np.array([float(v) if v else math.nan for v in vals])
            except ValueError as exc:
                raise FileFormatError(f"{path}: non-numeric {name}") from exc
    return out


def search_to_csv(scored) -> str:
    from .search import is_inverted_pendulum

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SEARCH_HEADER)
    for s in scored:
        b = s.design.body
        w.writerow([s.index, s.seed, _fmt(s.score.J1), _fmt(s.score.J2), _fmt(s.score.max_leg_radius),
                    _fmt(b.com_offset[0]), _fmt(b.com_offset[1]), _fmt(b.joint_offset[0]),
                    _fmt(b.joint_offset[1]), int(is_inverted_pendulum(s.design))])
    return buf.getvalue()


def contour_to_csv(field) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONTOUR_HEADER)
    af = field.arm_front.reshape(field.theta_grid.size, field.dphi_grid.size, -1)[..., 0]
    ar = field.arm_rear.reshape(field.theta_grid.size, field.dphi_grid.size, -1)[..., 0]
    arm = np.fmin(af, ar)
    for i, th in enumerate(field.theta_grid):
        for j, d in enumerate(field.dphi_grid):
            w.writerow([_fmt(math.degrees(th)), _fmt(math.degrees(d)), _fmt(af[i, j]), _fmt(ar[i, j]),
                        _fmt(arm[i, j])])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class SvgPlot:
    """Minimal x/y chart: polylines, markers, axes with a few ticks."""

    def __init__(self, width=640, height=400, title="", xlabel="", ylabel="", equal=False):
        self.w, self.h = width, height
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.equal = equal
        self.items: list[tuple] = []

    def line(self, x, y, color=None, width=1.5, label=None):
        self.items.append(("line", np.asarray(x, float), np.asarray(y, float), color, width, label))
        return self

    def points(self, x, y, color=None, r=2.0, label=None):
        self.items.append(("pts", np.asarray(x, float), np.asarray(y, float), color, r, label))
        return self

    def _bounds(self):
        xs = np.concatenate([i[1][np.isfinite(i[1])] for i in self.items] or [np.zeros(1)])
        ys = np.concatenate([i[2][np.isfinite(i[2])] for i in self.items] or [np.zeros(1)])
        x0, x1 = (xs.min(), xs.max()) if xs.size else (0.0, 1.0)
        y0, y1 = (ys.min(), ys.max()) if ys.size else (0.0, 1.0)
        if x1 - x0 < 1e-12:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 - y0 < 1e-12:
            y0, y1 = y0 - 0.5, y1 + 0.5
        return x0, x1, y0, y1

    def render(self) -> str:
        m = 50
        pw, ph = self.w - 2 * m, self.h - 2 * m
        x0, x1, y0, y1 = self._bounds()
        sx, sy = pw / (x1 - x0), ph / (y1 - y0)
        if self.equal:
            sx = sy = min(sx, sy)

        def X(v):
            return m + (v - x0) * sx

        def Y(v):
            return self.h - m - (v - y0) * sy

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
               f'viewBox="0 0 {self.w} {self.h}">',
               f'<rect width="{self.w}" height="{self.h}" fill="white"/>',
               f'<text x="{self.w / 2}" y="20" text-anchor="middle" font-size="14">{_esc(self.title)}</text>',
               f'<text x="{self.w / 2}" y="{self.h - 8}" text-anchor="middle" font-size="12">{_esc(self.xlabel)}</text>',
               f'<text x="12" y="{self.h / 2}" font-size="12" transform="rotate(-90 12 {self.h / 2})" '
               f'text-anchor="middle">{_esc(self.ylabel)}</text>',
               f'<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>']
        for v in np.linspace(x0, x1, 5):
            out.append(f'<text x="{X(v):.1f}" y="{self.h - m + 14}" font-size="10" '
                       f'text-anchor="middle">{v:.3g}</text>')
        for v in np.linspace(y0, y1, 5):
            out.append(f'<text x="{m - 4}" y="{Y(v) + 3:.1f}" font-size="10" text-anchor="end">{v:.3g}</text>')
        legend = []
        for k, (kind, x, y, color, size, label) in enumerate(self.items):
            color = color or PALETTE[k % len(PALETTE)]
            ok = np.isfinite(x) & np.isfinite(y)
            if kind == "line":
                # break polylines at gaps
                runs = np.split(np.arange(x.size), np.flatnonzero(~ok))
                for run in runs:
                    run = run[ok[run]]
                    if run.size > 1:
                        pts = " ".join(f"{X(x[i]):.2f},{Y(y[i]):.2f}" for i in run)
                        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{size}"/>')
            else:
                for i in np.flatnonzero(ok):
                    out.append(f'<circle cx="{X(x[i]):.2f}" cy="{Y(y[i]):.2f}" r="{size}" fill="{color}"/>')
            if label:
                legend.append((label, color))
        for k, (label, color) in enumerate(legend):
            yy = m + 14 + 14 * k
            out.append(f'<rect x="{self.w - m - 110}" y="{yy - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{self.w - m - 96}" y="{yy + 1}" font-size="11">{_esc(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def design_svg(design: RobotDesign, stances=(("closed", None), ("open", None))) -> str:
    """Body outline and both legs for each named stance (``None`` = range end)."""
    lo, hi = design.dphi_range
    plot = SvgPlot(width=360 * len(stances), height=380, title="leg profile", xlabel="y [mm]",
                   ylabel="z [mm]", equal=True)
    shift = 0.0
    for k, (name, dphi) in enumerate(stances):
        d = (lo if name == "closed" else hi) if dphi is None else dphi
        c = design.body.corners()
        ring = np.vstack([c, c[:1]])
        plot.line((ring[:, 0] + shift) * 1e3, ring[:, 1] * 1e3, color="#444")
        for side, color in (("front", PALETTE[0]), ("rear", PALETTE[1])):
            p = design.leg_points(side, d)
            plot.line((p[:, 0] + shift) * 1e3, p[:, 1] * 1e3, color=color,
                      label=f"{side}" if k == 0 else None)
        g = design.body.com
        plot.points([(g[0] + shift) * 1e3], [g[1] * 1e3], color="#000", r=3)
        shift += 2.6 * design.max_leg_radius
    return plot.render()

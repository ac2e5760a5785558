"""Brute-force randomised design search, Pareto fronts and radius binning."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import BodyParams, GeometryError, InfeasibleProfileError, RobotDesign, generate_leg
from .statics import DesignScore, score_design

log = logging.getLogger(__name__)

DEFAULT_RADIUS_BINS = (0.060, 0.075, 0.090, 0.105, 0.120)


class SearchAborted(RuntimeError):
    """Too many infeasible samples."""


@dataclass(frozen=True)
class SearchConstraints:
    """Sampling ranges for a search.

    The front joint is placed on the upper-front quarter of the body outline,
    parameterised by ``joint_arc`` in [0, 1]: 0 is the top-centre, 1 is
    mid-height on the front face.  The rear joint mirrors it.
    """

    body: BodyParams = field(default_factory=BodyParams)
    com_y: tuple[float, float] = (-0.018, 0.018)
    com_z: tuple[float, float] = (-0.018, 0.018)
    joint_arc: tuple[float, float] = (0.0, 1.0)
    radius_bins: tuple[float, ...] = DEFAULT_RADIUS_BINS
    n_samples: int = 2000
    seed: int = 0
    n_theta: int = 360
    n_dphi: int = 28
    margin: float | None = None
    failure_limit: float = 0.5

    def __post_init__(self):
        w, h = self.body.width, self.body.height
        for (lo, hi), half in ((self.com_y, w / 2), (self.com_z, h / 2)):
            if not (lo <= hi and -half < lo and hi < half):
                raise ValueError("CoM range must stay inside the body")
        lo, hi = self.joint_arc
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("joint_arc must lie in [0, 1]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if list(self.radius_bins) != sorted(self.radius_bins):
            raise ValueError("radius bin edges must be increasing")

    def joint_from_arc(self, s: float) -> tuple[float, float]:
        w, h = self.body.width, self.body.height
        run = s * (w / 2 + h / 2)
        if run <= w / 2:
            return run, h / 2
        return w / 2, h / 2 - (run - w / 2)

    def scaled(self, s: float) -> "SearchConstraints":
        return replace(
            self,
            body=self.body.scaled(s),
            com_y=(self.com_y[0] * s, self.com_y[1] * s),
            com_z=(self.com_z[0] * s, self.com_z[1] * s),
            radius_bins=tuple(e * s for e in self.radius_bins),
            margin=None if self.margin is None else self.margin * s,
        )


@dataclass(frozen=True)
class ScoredDesign:
    design: RobotDesign
    score: DesignScore
    seed: int
    index: int = -1


def sample_seeds(master_seed: int, n: int) -> list[int]:
    """Per-sample seeds from a SeedSequence spawn tree (order independent of worker count)."""
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def random_design(rng_seed: int, constraints: SearchConstraints) -> RobotDesign:
    rng = np.random.default_rng(rng_seed)
    yg = rng.uniform(*constraints.com_y)
    zg = rng.uniform(*constraints.com_z)
    yl, zl = constraints.joint_from_arc(rng.uniform(*constraints.joint_arc))
    body = replace(constraints.body, com_offset=(yg, zg), joint_offset=(yl, zl))
    leg_seed = int(rng.integers(0, 2**63 - 1))
    front = generate_leg(leg_seed, body, margin=constraints.margin)
    return RobotDesign.symmetric(body, front)


def _evaluate(args):
    index, seed, constraints = args
    try:
        design = random_design(seed, constraints)
    except (InfeasibleProfileError, GeometryError) as exc:
        return index, seed, None, str(exc)
    score = score_design(design, constraints.n_theta, constraints.n_dphi)
    return index, seed, ScoredDesign(design, score, seed, index), None


@dataclass
class SearchResult:
    designs: list[ScoredDesign]
    failures: list[tuple[int, int, str]]
    constraints: SearchConstraints

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / self.constraints.n_samples


def run_search(constraints: SearchConstraints, workers: int = 1, progress=None) -> SearchResult:
    """Score every feasible sample; output sorted by sample index."""
    seeds = sample_seeds(constraints.seed, constraints.n_samples)
    jobs = [(i, s, constraints) for i, s in enumerate(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_evaluate, jobs, chunksize=16))
    else:
        results = []
        for job in jobs:
            results.append(_evaluate(job))
            if progress is not None:
                progress(len(results), len(jobs))
    results.sort(key=lambda t: t[0])
    designs = [r[2] for r in results if r[2] is not None]
    failures = [(r[0], r[1], r[3]) for r in results if r[2] is None]
    res = SearchResult(designs, failures, constraints)
    if res.failure_rate > constraints.failure_limit:
        raise SearchAborted(
            f"{len(failures)}/{constraints.n_samples} samples infeasible "
            f"(limit {constraints.failure_limit:.0%})"
        )
    if failures:
        log.info("%d infeasible samples skipped", len(failures))
    return res


def dominates(a: DesignScore, b: DesignScore) -> bool:
    return a.J1 <= b.J1 and a.J2 <= b.J2 and (a.J1 < b.J1 or a.J2 < b.J2)


def pareto_front(scored: list[ScoredDesign]) -> list[ScoredDesign]:
    """Designs not dominated in (J1, J2), both minimised; sorted by J2."""
    if not scored:
        raise ValueError("pareto_front needs at least one design")
    order = sorted(range(len(scored)), key=lambda i: (scored[i].score.J2, scored[i].score.J1))
    front = []
    best_j1 = math.inf
    k = 0
    # sweep groups of equal J2: a point survives if its J1 beats everything with smaller J2
    while k < len(order):
        j2 = scored[order[k]].score.J2
        group = []
        while k < len(order) and scored[order[k]].score.J2 == j2:
            group.append(order[k])
            k += 1
        gmin = min(scored[i].score.J1 for i in group)
        if gmin < best_j1:
            front.extend(i for i in group if scored[i].score.J1 == gmin)
            best_j1 = gmin
    return [scored[i] for i in front]


def bin_by_max_radius(scored: list[ScoredDesign], bin_edges) -> list[list[ScoredDesign]]:
    """Partition by max leg radius.

    Returns ``len(bin_edges) + 1`` lists: below the first edge, each
    ``[edge_k, edge_k+1)``, and at or above the last edge.
    """
    edges = np.asarray(bin_edges, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    bins = [[] for _ in range(edges.size + 1)]
    for s in scored:
        bins[int(np.searchsorted(edges, s.score.max_leg_radius, side="right"))].append(s)
    return bins


def lower_envelope(scored: list[ScoredDesign], bin_width: float = 1.0, j2_max: float | None = None):
    """Smallest J1 per J2 bin: (bin centres, min J1), empty bins dropped."""
    j1 = np.array([s.score.J1 for s in scored])
    j2 = np.array([s.score.J2 for s in scored])
    top = j2.max() if j2_max is None else j2_max
    nb = max(1, int(math.ceil((top + 1e-12) / bin_width)))
    idx = np.minimum((j2 / bin_width).astype(int), nb - 1)
    centres, mins = [], []
    for b in range(nb):
        sel = (idx == b) & (j2 <= top)
        if sel.any():
            centres.append((b + 0.5) * bin_width)
            mins.append(j1[sel].min())
    return np.array(centres), np.array(mins)


def envelope_turn(centres: np.ndarray, mins: np.ndarray) -> float:
    """J2 at which the lower envelope stops decreasing (its global minimum)."""
    return float(centres[int(np.argmin(mins))])


def is_inverted_pendulum(design: RobotDesign) -> bool:
    """Tall-narrow class: tip starts above the body, joints above mid-height, CoM near centre."""
    body = design.body
    kp = design.front_leg.keypoints
    tip_high = kp.size > 0 and kp[0, 1] > body.height / 2
    return bool(tip_high and body.joint_offset[1] > 0 and abs(body.com_offset[0]) < body.width / 6)

import math

import numpy as np
import pytest

from walkroll.fixtures import circle_design, reference_design
from walkroll.geometry import BodyParams, RobotDesign, generate_leg


@pytest.fixture(scope="session")
def ref():
    return reference_design()


@pytest.fixture(scope="session")
def wheel():
    return circle_design(0.05)


def random_designs(seeds=(0, 1, 2, 3)):
    out = []
    for s in seeds:
        rng = np.random.default_rng(s)
        body = BodyParams(com_offset=(rng.uniform(-0.015, 0.015), rng.uniform(-0.015, 0.015)),
                          joint_offset=(0.03, rng.uniform(0.0, 0.03)))
        out.append(RobotDesign.symmetric(body, generate_leg(s, body)))
    return out


def dense_lowest(design, theta, df, dr, factor=10):
    """Brute-force lowest point over a ``factor``-times denser, linearly interpolated contour."""
    best = (math.inf, 0.0)
    c, s = math.cos(theta), math.sin(theta)
    for side, d in (("front", df), ("rear", dr)):
        leg = design.leg(side)
        n = (leg.phi.size - 1) * factor + 1
        phi = np.linspace(leg.phi[0], leg.phi[-1], n)
        phi = np.union1d(phi, leg.phi)
        r = np.interp(phi, leg.phi, leg.r)
        sign = 1.0 if side == "front" else -1.0
        jy, jz = design.body.joint(side)
        y = jy + sign * r * np.cos(phi + d)
        z = jz + r * np.sin(phi + d)
        Y, Z = c * y - s * z, s * y + c * z
        k = int(np.argmin(Z))
        if Z[k] < best[0]:
            best = (float(Z[k]), float(Y[k]))
    return best


_VERDICTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def verdict():
    """Record one acceptance line per criterion; printed at the end of the run."""
    def record(n: int, ok: bool, detail: str) -> None:
        _VERDICTS[n] = (bool(ok), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")

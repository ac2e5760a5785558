"""Packaged reference designs."""

from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources

from .geometry import N_PHI, BodyParams, RobotDesign, circle_profile

REFERENCE_FILE = "reference_design.json"


@lru_cache(maxsize=1)
def _reference_text() -> str:
    return resources.files("walkroll").joinpath("data", REFERENCE_FILE).read_text()


def reference_design() -> RobotDesign:
    """The selected rolling design (search seed 1, sample 280)."""
    from .storage import design_from_dict

    return design_from_dict(json.loads(_reference_text()))


def circle_design(radius: float = 0.05, n: int = N_PHI, com_offset=(0.0, 0.0),
                  dphi_range=(0.0, math.radians(55.0))) -> RobotDesign:
    """Two half-circle legs that close into a wheel of ``radius`` about the body centre."""
    body = BodyParams(com_offset=com_offset)
    return RobotDesign.symmetric(body, circle_profile(body, radius, dphi_range, n=n))

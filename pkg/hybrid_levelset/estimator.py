"""Dichotomy estimation of the largest admissible radius and the resulting level-set estimate."""

from __future__ import annotations

import logging
import math
from concurrent.futures import FIRST_COMPLETED
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import wait
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from hybrid_levelset.constants import BRACKET_HIGH_FACTOR
from hybrid_levelset.constants import BRACKET_LOW_FACTOR
from hybrid_levelset.constants import DEFAULT_J
from hybrid_levelset.constants import DEFAULT_NU
from hybrid_levelset.constants import MAX_BRACKET_EXPANSIONS
from hybrid_levelset.errors import EmptyLevelSetError
from hybrid_levelset.errors import InvalidBracketError
from hybrid_levelset.geometry import INFINITY
from hybrid_levelset.geometry import PointCloud
from hybrid_levelset.geometry import RConvexRegion
from hybrid_levelset.geometry import point_in_convex_hull
from hybrid_levelset.splitter import MODE_MARGIN
from hybrid_levelset.splitter import SplitSample

MINUS_CHUNK = 256

FLAG_SINGLETON_PLUS = "singleton_plus"
FLAG_HULL_MEETS_MINUS = "hull_meets_minus"
FLAG_CONVEX_FALLBACK = "convex_fallback"


@dataclass(frozen=True)
class RadiusEstimate:
    r_hat: float
    bracket_trace: tuple[tuple[float, float], ...]
    iterations_used: int
    convex_fallback: bool
    hull_meets_minus: bool = False
    expansions: int = 0

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.r_hat)

    def to_dict(self) -> dict[str, object]:
        return {
            "r_hat": self.r_hat,
            "bracket_trace": [list(pair) for pair in self.bracket_trace],
            "iterations_used": self.iterations_used,
            "convex_fallback": self.convex_fallback,
            "hull_meets_minus": self.hull_meets_minus,
            "expansions": self.expansions,
        }


@dataclass(frozen=True, eq=False)
class LevelSetEstimate:
    region: RConvexRegion
    radius_estimate: RadiusEstimate
    nu: float
    split: SplitSample
    threshold_info: dict[str, float]
    flags: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, object]:
        return {
            "radius": self.region.radius,
            "nu": self.nu,
            "generators": len(self.region.generators),
            "degenerate": self.region.degenerate,
            "thresholds": dict(self.threshold_info),
            "radius_estimate": self.radius_estimate.to_dict(),
            "flags": list(self.flags),
        }


def _any_member(region: RConvexRegion, minus: np.ndarray, workers: int) -> bool:
    """True iff some minus point is a member; stops at the first chunk with a hit."""
    if minus.shape[0] == 0:
        return False
    chunks = [minus[start : start + MINUS_CHUNK] for start in range(0, minus.shape[0], MINUS_CHUNK)]
    if workers <= 1 or len(chunks) == 1:
        return any(bool(region.contains_points(chunk).any()) for chunk in chunks)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        pending = {executor.submit(lambda c: bool(region.contains_points(c).any()), chunk) for chunk in chunks}
        while pending:
            done, pending = wait(pending, return_when=FIRST_COMPLETED)
            if any(future.result() for future in done):
                for future in pending:
                    future.cancel()
                return True
    return False


def predicate_hits(plus: PointCloud, minus: PointCloud, r: float, workers: int = 1) -> bool:
    """True iff some minus point lies in C_r(plus)."""
    if minus.is_empty:
        return False
    return _any_member(RConvexRegion(plus, r), minus.points, workers)


def default_bracket(plus: PointCloud, minus: PointCloud) -> tuple[float, float]:
    """(1e-3, 2) x the diameter of the labelled data."""
    data = plus.concat(minus) if not minus.is_empty else plus
    diameter = data.diameter()
    if diameter <= 0:
        diameter = 1.0
    return BRACKET_LOW_FACTOR * diameter, BRACKET_HIGH_FACTOR * diameter


def _convex_fallback(r_m0: float, r_M0: float, hull_meets_minus: bool = False, expansions: int = 0) -> RadiusEstimate:
    return RadiusEstimate(
        r_hat=INFINITY,
        bracket_trace=((r_m0, r_M0),),
        iterations_used=0,
        convex_fallback=True,
        hull_meets_minus=hull_meets_minus,
        expansions=expansions,
    )


def _estimate_r0(
    plus: PointCloud, minus: PointCloud, r_m0: float, r_M0: float, J: int, workers: int
) -> tuple[RadiusEstimate, RConvexRegion]:
    if plus.is_empty:
        raise EmptyLevelSetError("estimated level set empty at this threshold")
    if not (0 < r_m0 < r_M0) or math.isinf(r_M0):
        raise InvalidBracketError(f"the bracket must satisfy 0 < r_m0 < r_M0 < inf, got ({r_m0}, {r_M0})")
    if J < 1:
        raise ValueError(f"J must be a positive integer, got {J}")

    base = RConvexRegion(plus, r_m0)
    # C_r(plus) lies inside conv(plus) for every r
    candidates = minus.points
    if candidates.shape[0]:
        candidates = candidates[point_in_convex_hull(base.tri.sites, candidates, base.eps)]
    if candidates.shape[0] == 0:
        logging.debug("No minus point inside the convex hull of plus; the estimate is the convex hull")
        return _convex_fallback(r_m0, r_M0), base

    def hits(r: float) -> bool:
        return _any_member(base.with_radius(r), candidates, workers)

    if hits(r_m0):
        raise InvalidBracketError(
            f"a minus point is already inside C_r(plus) at r_m0={r_m0:.6g}; retry with a smaller lower bracket"
        )

    r_m, r_M = r_m0, r_M0
    expansions = 0
    while not hits(r_M):
        if expansions == MAX_BRACKET_EXPANSIONS:
            logging.warning(
                f"The hull of plus meets minus but no radius up to {r_M:.6g} reaches it; reporting an infinite radius"
            )
            return _convex_fallback(r_m0, r_M0, hull_meets_minus=True, expansions=expansions), base
        r_m, r_M = r_M, 2.0 * r_M
        expansions += 1
    if expansions:
        logging.info(f"🔁 Expanded the upper bracket {expansions} times to r_M={r_M:.6g}")

    trace = [(r_m, r_M)]
    for _ in range(J):
        middle = 0.5 * (r_m + r_M)
        if hits(middle):
            r_M = middle
        else:
            r_m = middle
        trace.append((r_m, r_M))
    logging.debug(f"Dichotomy finished after {J} steps: r_hat={r_m:.9g} (width {r_M - r_m:.3g})")
    return RadiusEstimate(r_m, tuple(trace), J, convex_fallback=False, expansions=expansions), base


def estimate_r0(
    plus: PointCloud,
    minus: PointCloud,
    r_m0: float,
    r_M0: float,
    J: int = DEFAULT_J,
    workers: int = 1,
) -> RadiusEstimate:
    """Bisect the monotone predicate "C_r(plus) meets minus" J times and return the lower end.

    Minus points outside conv(plus) are discarded first. When no remaining minus
    point exists the estimate is the convex hull (r_hat = INFINITY).

    Raises:
        EmptyLevelSetError: If plus is empty.
        InvalidBracketError: If the predicate already holds at r_m0.
    """
    return _estimate_r0(plus, minus, r_m0, r_M0, J, workers)[0]


def _threshold_info(split: SplitSample) -> dict[str, float]:
    if split.mode == MODE_MARGIN:
        return {"t": 0.5 * (split.t_plus + split.t_minus), "Dn": 0.5 * (split.t_plus - split.t_minus)}
    return {"f_plus": split.t_plus, "f_minus": split.t_minus}


def estimate_level_set(
    split: SplitSample,
    nu: float = DEFAULT_NU,
    J: int = DEFAULT_J,
    r_m0: float | None = None,
    r_M0: float | None = None,
    workers: int = 1,
) -> LevelSetEstimate:
    """Estimate r0 on the split and return C_(nu r0)(plus), or conv(plus) for an infinite radius.

    Raises:
        EmptyLevelSetError: If the split has no plus point.
    """
    if not (0 < nu <= 1):
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    if len(split.plus_index) == 0:
        raise EmptyLevelSetError("estimated level set empty at this threshold")
    plus, minus = split.plus, split.minus
    if r_m0 is None or r_M0 is None:
        low, high = default_bracket(plus, minus)
        r_m0 = low if r_m0 is None else r_m0
        r_M0 = high if r_M0 is None else r_M0

    estimate, base = _estimate_r0(plus, minus, r_m0, r_M0, J, workers)
    flags = []
    if base.is_singleton:
        logging.warning("Only one distinct plus point; the estimated level set is a single point")
        flags.append(FLAG_SINGLETON_PLUS)
    if estimate.convex_fallback:
        flags.append(FLAG_CONVEX_FALLBACK)
    if estimate.hull_meets_minus:
        flags.append(FLAG_HULL_MEETS_MINUS)

    radius = INFINITY if estimate.is_infinite else nu * estimate.r_hat
    return LevelSetEstimate(
        region=base.with_radius(radius),
        radius_estimate=estimate,
        nu=nu,
        split=split,
        threshold_info=_threshold_info(split),
        flags=tuple(flags),
    )

"""Partition a sample into confident inside / outside points and classify the remainder by kNN."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

from hybrid_levelset.constants import DEFAULT_SMOOTHNESS_ORDER
from hybrid_levelset.constants import DIMENSION
from hybrid_levelset.constants import MARGIN_REFITS
from hybrid_levelset.density import KdeModel
from hybrid_levelset.density import ThresholdPair
from hybrid_levelset.density import sample_kde
from hybrid_levelset.errors import EmptyInputError
from hybrid_levelset.errors import EmptyLevelSetError
from hybrid_levelset.geometry import PointCloud

MODE_MARGIN = "margin"
MODE_CALIBRATED = "calibrated"

FLAG_MINUS_VACUOUS = "minus_criterion_vacuous"
FLAG_EMPTY_PLUS = "empty_plus"
FLAG_EMPTY_MINUS = "empty_minus"
FLAG_K_CLAMPED = "k_clamped"


@dataclass(frozen=True)
class MarginSchedule:
    """D_n = M (log n / n)^(p / (d + 2p))."""

    M: float
    p: int = DEFAULT_SMOOTHNESS_ORDER
    d: int = DIMENSION

    def __post_init__(self) -> None:
        if not (self.M > 0 and math.isfinite(self.M)):
            raise ValueError(f"margin constant M must be positive, got {self.M}")
        if self.p < 1 or self.d < 1:
            raise ValueError("smoothness order p and dimension d must be positive integers")

    @property
    def exponent(self) -> float:
        return self.p / (self.d + 2 * self.p)


def dn(schedule: MarginSchedule, n: int) -> float:
    if n < 2:
        raise ValueError(f"the margin D_n needs n >= 2, got {n}")
    return schedule.M * (math.log(n) / n) ** schedule.exponent


@dataclass(frozen=True, eq=False)
class SplitSample:
    """Index-level partition of `sample` into plus, minus and unassigned parts."""

    sample: PointCloud
    plus_index: np.ndarray
    minus_index: np.ndarray
    unassigned_index: np.ndarray
    t_plus: float
    t_minus: float
    mode: str
    k: int | None = None
    flags: tuple[str, ...] = field(default=())

    @cached_property
    def plus(self) -> PointCloud:
        return self.sample.take(self.plus_index)

    @cached_property
    def minus(self) -> PointCloud:
        return self.sample.take(self.minus_index)

    @cached_property
    def unassigned(self) -> PointCloud:
        return self.sample.take(self.unassigned_index)

    def labels(self) -> np.ndarray:
        """Per-sample label: 1 plus, -1 minus, 0 unassigned."""
        labels = np.zeros(len(self.sample), dtype=int)
        labels[self.plus_index] = 1
        labels[self.minus_index] = -1
        return labels

    def summary(self) -> dict[str, object]:
        return {
            "mode": self.mode,
            "t_plus": self.t_plus,
            "t_minus": self.t_minus,
            "plus": int(len(self.plus_index)),
            "minus": int(len(self.minus_index)),
            "unassigned": int(len(self.unassigned_index)),
            "k": self.k,
            "flags": list(self.flags),
        }


def _sample_values(model: KdeModel, sample: PointCloud) -> np.ndarray:
    if sample is model.sample:
        return model.sample_values
    return model.evaluate(sample.points)


def _split(sample: PointCloud, values: np.ndarray, t_plus: float, t_minus: float, mode: str) -> SplitSample:
    if sample.is_empty:
        raise EmptyInputError("cannot split an empty sample")
    plus = values >= t_plus
    minus = (values < t_minus) & ~plus
    flags = []
    if t_minus <= 0:
        logging.warning(f"Lower threshold {t_minus:.6g} is not positive; the minus criterion is vacuous")
        flags.append(FLAG_MINUS_VACUOUS)
    if not plus.any():
        flags.append(FLAG_EMPTY_PLUS)
    if not minus.any():
        flags.append(FLAG_EMPTY_MINUS)
    return SplitSample(
        sample=sample,
        plus_index=np.flatnonzero(plus),
        minus_index=np.flatnonzero(minus),
        unassigned_index=np.flatnonzero(~plus & ~minus),
        t_plus=float(t_plus),
        t_minus=float(t_minus),
        mode=mode,
        flags=tuple(flags),
    )


def split_margin(model: KdeModel, sample: PointCloud, t: float, margin: float) -> SplitSample:
    """plus = {f_n >= t + D_n}, minus = {f_n < t - D_n}; the rest stays unassigned."""
    if not t > 0:
        raise ValueError(f"threshold t must be positive, got {t}")
    if margin < 0:
        raise ValueError(f"margin must be non-negative, got {margin}")
    return _split(sample, _sample_values(model, sample), t + margin, t - margin, MODE_MARGIN)


def split_calibrated(model: KdeModel, sample: PointCloud, thresholds: ThresholdPair) -> SplitSample:
    """plus = {f_n >= f_plus}, minus = {f_n < f_minus}."""
    return _split(sample, _sample_values(model, sample), thresholds.f_plus, thresholds.f_minus, MODE_CALIBRATED)


def knn_labels(plus: PointCloud, minus: PointCloud, k: int, queries: PointCloud) -> np.ndarray:
    """Majority vote of the k nearest labelled points; True means plus.

    Distance ties rank plus points first, then lower index within each class.
    """
    if plus.is_empty or minus.is_empty:
        raise ValueError("kNN classification needs both a plus and a minus training point")
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be an odd positive integer, got {k}")
    total = len(plus) + len(minus)
    if k > total:
        raise ValueError(f"k={k} exceeds the {total} labelled points")
    if queries.is_empty:
        return np.zeros(0, dtype=bool)

    labelled = np.vstack([plus.points, minus.points])
    is_plus = np.concatenate([np.ones(len(plus), dtype=bool), np.zeros(len(minus), dtype=bool)])
    class_rank = (~is_plus).astype(int)
    position = np.arange(total)

    block = max(1, 4_000_000 // total)
    votes = []
    for start in range(0, len(queries), block):
        distances = cdist(queries.points[start : start + block], labelled)
        shape = distances.shape
        order = np.lexsort((np.broadcast_to(position, shape), np.broadcast_to(class_rank, shape), distances), axis=-1)
        nearest = order[:, :k]
        votes.append(is_plus[nearest].sum(axis=1) * 2 > k)
    return np.concatenate(votes)


def knn_classify(plus: PointCloud, minus: PointCloud, k: int, queries: PointCloud) -> tuple[PointCloud, PointCloud]:
    """Split `queries` into (assigned_plus, assigned_minus) by k-nearest-neighbour vote."""
    labels = knn_labels(plus, minus, k, queries)
    return queries.take(labels), queries.take(~labels)


def assign_unassigned(split: SplitSample, k: int) -> SplitSample:
    """Classify the unassigned remainder with kNN trained on plus/minus and merge it in.

    Raises:
        EmptyLevelSetError: If there is no plus point to train on.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be an odd positive integer, got {k}")
    if len(split.unassigned_index) == 0:
        return replace(split, k=k)
    if len(split.plus_index) == 0:
        raise EmptyLevelSetError("estimated level set empty at this threshold")

    flags = list(split.flags)
    if len(split.minus_index) == 0:
        to_plus = np.ones(len(split.unassigned_index), dtype=bool)
        used_k = k
    else:
        total = len(split.plus_index) + len(split.minus_index)
        used_k = k
        if k > total:
            used_k = total if total % 2 == 1 else total - 1
            logging.warning(f"k={k} exceeds the {total} labelled points; using k={used_k}")
            flags.append(FLAG_K_CLAMPED)
        to_plus = knn_labels(split.plus, split.minus, used_k, split.unassigned)

    plus_index = np.sort(np.concatenate([split.plus_index, split.unassigned_index[to_plus]]))
    minus_index = np.sort(np.concatenate([split.minus_index, split.unassigned_index[~to_plus]]))
    logging.debug(f"kNN (k={used_k}) assigned {int(to_plus.sum())} plus and {int((~to_plus).sum())} minus points")
    if FLAG_EMPTY_MINUS in flags and len(minus_index):
        flags.remove(FLAG_EMPTY_MINUS)
    return replace(
        split,
        plus_index=plus_index,
        minus_index=minus_index,
        unassigned_index=np.zeros(0, dtype=int),
        k=used_k,
        flags=tuple(flags),
    )


def calibrate_margin_constant(
    model: KdeModel,
    rng: np.random.Generator,
    p: int = DEFAULT_SMOOTHNESS_ORDER,
    refits: int = MARGIN_REFITS,
) -> float:
    """Choose M so that D_n equals the typical bootstrap fluctuation of f_n.

    The fluctuation is the median over sample points of the standard deviation of
    f_n across `refits` smoothed-bootstrap refits at the same bandwidth.
    """
    if refits < 2:
        raise ValueError("at least two refits are needed to measure fluctuation")
    n = model.n
    if n < 2:
        raise ValueError("the margin constant needs n >= 2")
    curves = np.empty((refits, n))
    for b in range(refits):
        boot = KdeModel(sample_kde(model, n, rng), model.bandwidth)
        curves[b] = boot.evaluate(model.sample.points)
    fluctuation = float(np.median(curves.std(axis=0, ddof=1)))
    schedule_rate = (math.log(n) / n) ** MarginSchedule(1.0, p).exponent
    M = fluctuation / schedule_rate
    logging.info(f"📏 Margin constant M={M:.6g} (bootstrap fluctuation {fluctuation:.6g})")
    return M

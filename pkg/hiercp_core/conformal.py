import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import nodesets
from .covers import CoverSpace, NolCover
from .nodesets import NodeSet
from .propagation import GroundTruth, PropagatedScores
from .taxonomy import Taxonomy
from .workers import map_ordered

logger = logging.getLogger(__name__)

SPLIT = "split"


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationRecord:
    scores: PropagatedScores
    truth: GroundTruth


class CalibrationSet:
    def __init__(self, values: np.ndarray, truth: np.ndarray, taxonomy_hash: str):
        if values.shape[0] == 0:
            raise CalibrationError("Calibration set is empty")
        self.values = values
        self.truth = truth
        self.taxonomy_hash = taxonomy_hash

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def from_records(cls, t: Taxonomy, records: Sequence[CalibrationRecord]):
        if not records:
            raise CalibrationError("Calibration set is empty")
        values = np.vstack([r.scores.values for r in records])
        truth = np.zeros(values.shape, dtype=bool)
        for i, record in enumerate(records):
            truth[i, list(nodesets.iter_indices(record.truth.ancestor_set))] = True
        return cls(values, truth, t.fingerprint)

    @classmethod
    def from_arrays(cls, t: Taxonomy, propagated: np.ndarray, true_leaves: Sequence[int]):
        truth = np.zeros(propagated.shape, dtype=bool)
        for i, leaf in enumerate(true_leaves):
            leaf = int(leaf)
            truth[i, list(nodesets.iter_indices(t.ancestors[leaf] | nodesets.bit(leaf)))] = True
        return cls(propagated, truth, t.fingerprint)


def as_calibration_set(t: Taxonomy, records) -> CalibrationSet:
    if isinstance(records, CalibrationSet):
        return records
    return CalibrationSet.from_records(t, records)


@lru_cache(maxsize=4096)
def conformal_rank(n: int, alpha: float) -> int:
    return math.ceil((n + 1) * (1 - Fraction(repr(float(alpha)))))


def check_alpha(alpha: float):
    if not 0.0 <= alpha < 1.0:
        raise CalibrationError(f"alpha must lie in [0, 1), got {alpha}")


def conformity_score(ps: PropagatedScores, ind: np.ndarray, cover: NolCover) -> float:
    ind = np.asarray(ind, dtype=bool)
    if not ind.any():
        raise CalibrationError(f"Label indicator for cover {cover.cover_id} has no set bit")
    best = None
    for j, v in enumerate(cover.member_indices):
        if ind[j] and (best is None or ps.values[v] > ps.values[best]):
            best = v
    return float(ps.values[best])


def cover_conformity(cover: NolCover, calibration: CalibrationSet) -> np.ndarray:
    members = list(cover.member_indices)
    values = calibration.values[:, members]
    truth = calibration.truth[:, members]
    if not truth.any(axis=1).all():
        raise CalibrationError(f"Cover {cover.cover_id} misses the truth of some record")
    return np.where(truth, values, -np.inf).max(axis=1)


def select_members(cover: NolCover, values, tau: float) -> NodeSet:
    selected = 0
    for v in cover.member_indices:
        if values[v] >= tau:
            selected |= 1 << v
    return selected


def argmax_member(cover: NolCover, values) -> int:
    best = cover.member_indices[0]
    for v in cover.member_indices[1:]:
        if values[v] > values[best]:
            best = v
    return best


@dataclass(frozen=True, eq=False)
class CoverPredictor:
    cover: NolCover
    sorted_conformity: np.ndarray

    @property
    def n_c(self) -> int:
        return int(self.sorted_conformity.shape[0])

    def threshold(self, alpha: float) -> float:
        return threshold_at(self, alpha)

    def predict(self, values, alpha: float, pad_empty: bool = False) -> NodeSet:
        selected = select_members(self.cover, values, threshold_at(self, alpha))
        if not selected and pad_empty:
            selected = nodesets.bit(argmax_member(self.cover, values))
        return selected


def calibrate_cover(t: Taxonomy, cover: NolCover, records) -> CoverPredictor:
    calibration = as_calibration_set(t, records)
    scores = np.sort(cover_conformity(cover, calibration))
    scores.setflags(write=False)
    return CoverPredictor(cover=cover, sorted_conformity=scores)


def threshold_at(p: CoverPredictor, alpha: float) -> float:
    """Conformity threshold ``tau = 1 - q_hat``; members with score ``>= tau`` are kept.

    ``q_hat`` is the ``ceil((n+1)(1-alpha))``-th smallest nonconformity
    ``1 - s``, i.e. the same rank of the conformity scores counted from the
    top. Past the end of the sample ``q_hat`` is 1 and ``tau`` is 0.
    """
    check_alpha(alpha)
    n = p.n_c
    k = conformal_rank(n, alpha)
    if k > n:
        return 0.0
    return float(p.sorted_conformity[n - k])


def quantile_at(p: CoverPredictor, alpha: float) -> float:
    check_alpha(alpha)
    n = p.n_c
    k = conformal_rank(n, alpha)
    if k > n:
        return 1.0
    return 1.0 - float(p.sorted_conformity[n - k])


def predict_cover(
    p: CoverPredictor, ps: PropagatedScores, alpha: float, pad_empty: bool = False
) -> NodeSet:
    return p.predict(ps.values, alpha, pad_empty=pad_empty)


@dataclass(frozen=True, eq=False)
class PredictorFamily:
    predictors: tuple
    leaf_predictor_id: int
    n_c: int
    taxonomy_hash: str
    kind: str = SPLIT
    cover_mode: str = "exhaustive"

    def __len__(self):
        return len(self.predictors)

    def by_id(self, cover_id: int):
        return self.predictors[cover_id]

    @property
    def leaf_predictor(self):
        return self.predictors[self.leaf_predictor_id]

    @property
    def covers(self) -> tuple[NolCover, ...]:
        return tuple(p.cover for p in self.predictors)


def check_family(fam: PredictorFamily, t: Taxonomy):
    if fam.taxonomy_hash != t.fingerprint:
        raise CalibrationError(
            "Predictor family was calibrated on a different taxonomy "
            f"({fam.taxonomy_hash[:12]} != {t.fingerprint[:12]})"
        )


def calibrate_family(
    t: Taxonomy, space: CoverSpace, records, threads: int = 1
) -> PredictorFamily:
    if not len(space):
        raise CalibrationError("Cannot calibrate an empty cover space")
    if space.taxonomy_hash != t.fingerprint:
        raise CalibrationError("Cover space was built for a different taxonomy")
    calibration = as_calibration_set(t, records)
    predictors = map_ordered(
        lambda cover: calibrate_cover(t, cover, calibration), space.covers, threads
    )
    logger.debug(
        "calibrate_family: covers=%s n_c=%s threads=%s", len(predictors), len(calibration), threads
    )
    return PredictorFamily(
        predictors=tuple(predictors),
        leaf_predictor_id=space.all_leaves_id,
        n_c=len(calibration),
        taxonomy_hash=t.fingerprint,
        kind=SPLIT,
        cover_mode=space.mode,
    )

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nodesets
from .conformal import (
    CalibrationError,
    CalibrationSet,
    PredictorFamily,
    argmax_member,
    as_calibration_set,
    check_alpha,
    check_family,
)
from .covers import CoverSpace, NolCover
from .inference import (
    CandidatePool,
    CostParams,
    HccPrediction,
    candidate_pool,
    hcc_predict,
    make_candidate,
    select_candidate,
)
from .nodesets import NodeSet
from .propagation import LeafScores, PropagatedScores
from .taxonomy import Taxonomy, lca_set
from .workers import map_ordered

logger = logging.getLogger(__name__)

CRC = "crc"
LAMBDA_GRID = np.linspace(0.0, 1.0, 1001)
LAMBDA_GRID.setflags(write=False)

HCC_METHODS = {
    "hcc": {"prune": True, "correct": True},
    "hcc-no-prune": {"prune": False, "correct": True},
    "hcc-no-correction": {"prune": True, "correct": False},
    "hcc-crc": {"prune": True, "correct": True},
}


def _leaf_values(fam: PredictorFamily, ls: LeafScores) -> dict[int, float]:
    members = fam.leaf_predictor.cover.member_indices
    values = np.asarray(ls.values, dtype=float).tolist()
    if len(values) != len(members):
        raise ValueError(f"Expected {len(members)} leaf scores, got {len(values)}")
    return dict(zip(members, values))


def standard_cp_predict(
    fam: PredictorFamily, ls: LeafScores, alpha: float, pad_empty: bool = False
) -> NodeSet:
    return fam.leaf_predictor.predict(_leaf_values(fam, ls), alpha, pad_empty=pad_empty)


def lca_baseline_predict(t: Taxonomy, leaf_set: NodeSet, fallback_leaf: int | None = None) -> NodeSet:
    if not leaf_set and fallback_leaf is not None:
        return nodesets.bit(fallback_leaf)
    return lca_set(t, leaf_set)


def hcc_no_pruning_predict(fam, t, ls, alpha, cp, **options) -> HccPrediction:
    return hcc_predict(fam, t, ls, alpha, cp, prune=False, **options)


def hcc_no_correction_predict(fam, t, ls, alpha, cp, **options) -> HccPrediction:
    return hcc_predict(fam, t, ls, alpha, cp, correct=False, **options)


@dataclass(frozen=True, eq=False)
class RiskControlPredictor:
    """Conformal risk control with a ``1 - recall`` loss over one cover.

    A member is kept when ``1 - g <= lambda``. The mean calibration loss is
    stored for every grid point, so ``lambda_hat`` can be read off for any
    level, including Bonferroni-corrected ones.
    """

    cover: NolCover
    risk_curve: np.ndarray
    n_c: int
    calibrated_alpha: float
    _lambda_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def lambda_index(self, alpha: float) -> int | None:
        check_alpha(alpha)
        if alpha not in self._lambda_cache:
            n = self.n_c
            bound = (n / (n + 1)) * self.risk_curve + 1 / (n + 1)
            feasible = np.flatnonzero(bound <= alpha)
            self._lambda_cache[alpha] = int(feasible[0]) if feasible.size else None
        return self._lambda_cache[alpha]

    def is_feasible(self, alpha: float) -> bool:
        return self.lambda_index(alpha) is not None

    def lambda_at(self, alpha: float) -> float:
        index = self.lambda_index(alpha)
        if index is None:
            return 1.0
        return float(LAMBDA_GRID[index])

    @property
    def lambda_hat(self) -> float:
        return self.lambda_at(self.calibrated_alpha)

    def threshold(self, alpha: float) -> float:
        return 1.0 - self.lambda_at(alpha)

    def predict(self, values, alpha: float, pad_empty: bool = False) -> NodeSet:
        lam = self.lambda_at(alpha)
        selected = 0
        for v in self.cover.member_indices:
            if 1.0 - values[v] <= lam:
                selected |= 1 << v
        if not selected and pad_empty:
            selected = nodesets.bit(argmax_member(self.cover, values))
        return selected


def recall_risk_curve(cover: NolCover, calibration: CalibrationSet) -> np.ndarray:
    members = list(cover.member_indices)
    truth = calibration.truth[:, members]
    n_true = truth.sum(axis=1)
    if not n_true.all():
        raise CalibrationError(f"Cover {cover.cover_id} misses the truth of some record")
    rows, cols = np.nonzero(truth)
    entry = np.searchsorted(LAMBDA_GRID, 1.0 - calibration.values[:, members][rows, cols])
    weight = 1.0 / n_true[rows]
    inside = entry < LAMBDA_GRID.size
    recalled = np.zeros(LAMBDA_GRID.size)
    np.add.at(recalled, entry[inside], weight[inside])
    n = len(calibration)
    return (n - np.cumsum(recalled)) / n


def crc_recall_calibrate(t: Taxonomy, cover: NolCover, records, alpha: float) -> RiskControlPredictor:
    check_alpha(alpha)
    calibration = as_calibration_set(t, records)
    curve = recall_risk_curve(cover, calibration)
    curve.setflags(write=False)
    predictor = RiskControlPredictor(
        cover=cover, risk_curve=curve, n_c=len(calibration), calibrated_alpha=alpha
    )
    if not predictor.is_feasible(alpha):
        logger.warning(
            "crc_recall_calibrate: no feasible lambda for cover %s at alpha=%s, using lambda=1",
            cover.cover_id,
            alpha,
        )
    return predictor


def crc_recall_predict(
    p: RiskControlPredictor, ps: PropagatedScores, alpha: float | None = None
) -> NodeSet:
    return p.predict(ps.values, p.calibrated_alpha if alpha is None else alpha)


def calibrate_crc_family(
    t: Taxonomy, space: CoverSpace, records, alpha: float, threads: int = 1
) -> PredictorFamily:
    if not len(space):
        raise CalibrationError("Cannot calibrate an empty cover space")
    if space.taxonomy_hash != t.fingerprint:
        raise CalibrationError("Cover space was built for a different taxonomy")
    calibration = as_calibration_set(t, records)
    predictors = map_ordered(
        lambda cover: crc_recall_calibrate(t, cover, calibration, alpha), space.covers, threads
    )
    logger.debug("calibrate_crc_family: covers=%s n_c=%s", len(predictors), len(calibration))
    return PredictorFamily(
        predictors=tuple(predictors),
        leaf_predictor_id=space.all_leaves_id,
        n_c=len(calibration),
        taxonomy_hash=t.fingerprint,
        kind=CRC,
        cover_mode=space.mode,
    )


def _single_pool(fam: PredictorFamily, t: Taxonomy, alpha, leaf_set, cover_id, selected):
    candidates = (make_candidate(t, cover_id, selected),) if selected else ()
    return CandidatePool(
        candidates=candidates,
        leaf_set=leaf_set,
        leaf_cover_id=fam.leaf_predictor_id,
        m_effective=1,
        m_total=len(fam),
        alpha_corrected=alpha,
        pruned=0,
    )


def method_pool(
    method: str,
    fam: PredictorFamily,
    t: Taxonomy,
    values,
    alpha: float,
    pad_empty: bool = False,
) -> CandidatePool:
    if method == "standard":
        leaf_set = fam.leaf_predictor.predict(values, alpha, pad_empty=pad_empty)
        return _single_pool(fam, t, alpha, leaf_set, fam.leaf_predictor_id, leaf_set)
    if method == "lca":
        leaf_set = fam.leaf_predictor.predict(values, alpha)
        top_leaf = argmax_member(fam.leaf_predictor.cover, values)
        return _single_pool(
            fam, t, alpha, leaf_set, None, lca_baseline_predict(t, leaf_set, top_leaf)
        )
    if method not in HCC_METHODS:
        raise ValueError(f"Unknown method '{method}'")
    return candidate_pool(fam, t, values, alpha, pad_empty=pad_empty, **HCC_METHODS[method])


def check_method_family(method: str, fam: PredictorFamily):
    wants_crc = method == "hcc-crc"
    if wants_crc != (fam.kind == CRC):
        expected = "risk-control" if wants_crc else "split-conformal"
        raise ValueError(f"Method '{method}' needs a {expected} predictor family, got '{fam.kind}'")


def method_pools(
    method: str,
    fam: PredictorFamily,
    t: Taxonomy,
    propagated: np.ndarray,
    alpha: float,
    pad_empty: bool = False,
    threads: int = 1,
) -> list[CandidatePool]:
    check_family(fam, t)
    check_method_family(method, fam)
    check_alpha(alpha)
    rows = np.asarray(propagated).tolist()
    pools = map_ordered(
        lambda values: method_pool(method, fam, t, values, alpha, pad_empty), rows, threads
    )
    logger.debug("method_pools: method=%s instances=%s threads=%s", method, len(pools), threads)
    return pools


def predict_with_method(
    method: str,
    fam: PredictorFamily,
    t: Taxonomy,
    ps: PropagatedScores,
    alpha: float,
    cp: CostParams,
    pad_empty: bool = False,
) -> HccPrediction:
    check_family(fam, t)
    check_method_family(method, fam)
    check_alpha(alpha)
    pool = method_pool(method, fam, t, ps.values.tolist(), alpha, pad_empty)
    return select_candidate(t, pool, cp)

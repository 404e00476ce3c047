import logging
import math
from dataclasses import dataclass

import numpy as np

from . import nodesets
from .conformal import PredictorFamily, check_alpha, check_family
from .nodesets import NodeSet
from .propagation import LeafScores, propagate_scores
from .taxonomy import Taxonomy, lca_set, leaf_cover
from .workers import map_ordered

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostParams:
    beta: float

    def __post_init__(self):
        if not math.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be a nonnegative number, got {self.beta}")


@dataclass(frozen=True)
class Candidate:
    cover_id: int | None
    selected: NodeSet
    covered_leaves: NodeSet
    size: int
    n_covered: int


@dataclass(frozen=True)
class PruneResult:
    survivors: tuple[int, ...]
    lca: NodeSet
    pruned: int
    collapsed: int

    @property
    def m_effective(self) -> int:
        return len(self.survivors)


@dataclass(frozen=True)
class CandidatePool:
    candidates: tuple[Candidate, ...]
    leaf_set: NodeSet
    leaf_cover_id: int | None
    m_effective: int
    m_total: int
    alpha_corrected: float
    pruned: int


@dataclass(frozen=True)
class HccPrediction:
    selected: NodeSet
    cost: float
    covered_leaves: NodeSet
    m_effective: int
    alpha_corrected: float
    candidates_evaluated: int
    pruned: int
    selected_cover_id: int | None
    m_total: int = 0
    fallback: bool = False

    @property
    def size(self) -> int:
        return nodesets.size(self.selected)

    @property
    def n_covered(self) -> int:
        return nodesets.size(self.covered_leaves)


def set_cost(t: Taxonomy, s: NodeSet, cp: CostParams) -> float:
    return nodesets.size(s) + cp.beta * nodesets.size(leaf_cover(t, s))


def bonferroni(alpha: float, m: int) -> float:
    check_alpha(alpha)
    if m < 1:
        raise ValueError(f"Bonferroni correction needs m >= 1, got {m}")
    return alpha / m


def dynamic_prune(fam: PredictorFamily, t: Taxonomy, leaf_set: NodeSet) -> PruneResult:
    """Drop covers holding a strict ancestor of ``lca_set(leaf_set)``.

    Covers that contain every LCA node are interchangeable and collapse to
    the one with the lowest cover id. The all-leaves cover always survives.
    An empty probe set disables pruning.
    """
    all_ids = tuple(p.cover.cover_id for p in fam.predictors)
    if not leaf_set:
        return PruneResult(survivors=all_ids, lca=0, pruned=0, collapsed=0)

    lca = lca_set(t, leaf_set)
    above = 0
    for v in nodesets.iter_indices(lca):
        above |= t.ancestors[v]

    survivors = []
    group = []
    pruned = 0
    for p in fam.predictors:
        cover_id = p.cover.cover_id
        members = p.cover.members
        if cover_id == fam.leaf_predictor_id:
            survivors.append(cover_id)
        elif members & above:
            pruned += 1
        elif nodesets.is_subset(lca, members):
            group.append(cover_id)
        else:
            survivors.append(cover_id)
    if group:
        survivors.append(min(group))
    return PruneResult(
        survivors=tuple(sorted(survivors)),
        lca=lca,
        pruned=pruned,
        collapsed=max(len(group) - 1, 0),
    )


def make_candidate(t: Taxonomy, cover_id: int | None, selected: NodeSet) -> Candidate:
    covered = leaf_cover(t, selected)
    return Candidate(
        cover_id=cover_id,
        selected=selected,
        covered_leaves=covered,
        size=nodesets.size(selected),
        n_covered=nodesets.size(covered),
    )


def candidate_pool(
    fam: PredictorFamily,
    t: Taxonomy,
    values,
    alpha: float,
    *,
    prune: bool = True,
    correct: bool = True,
    pad_empty: bool = False,
) -> CandidatePool:
    leaf_set = fam.leaf_predictor.predict(values, alpha)
    if prune:
        result = dynamic_prune(fam, t, leaf_set)
        survivors, pruned = result.survivors, result.pruned + result.collapsed
    else:
        survivors, pruned = tuple(p.cover.cover_id for p in fam.predictors), 0
    alpha_corrected = bonferroni(alpha, len(survivors)) if correct else alpha

    candidates = []
    for cover_id in survivors:
        selected = fam.by_id(cover_id).predict(values, alpha_corrected, pad_empty=pad_empty)
        if selected:
            candidates.append(make_candidate(t, cover_id, selected))
    return CandidatePool(
        candidates=tuple(candidates),
        leaf_set=leaf_set,
        leaf_cover_id=fam.leaf_predictor_id,
        m_effective=len(survivors),
        m_total=len(fam),
        alpha_corrected=alpha_corrected,
        pruned=pruned,
    )


def _selection_key(candidate: Candidate, beta: float):
    cost = candidate.size + beta * candidate.n_covered
    cover_id = -1 if candidate.cover_id is None else candidate.cover_id
    return (cost, candidate.n_covered, candidate.size, cover_id)


def select_candidate(t: Taxonomy, pool: CandidatePool, cp: CostParams) -> HccPrediction:
    if pool.candidates:
        best = min(pool.candidates, key=lambda c: _selection_key(c, cp.beta))
        fallback = False
    else:
        best = make_candidate(t, pool.leaf_cover_id, pool.leaf_set)
        fallback = True
    return HccPrediction(
        selected=best.selected,
        cost=best.size + cp.beta * best.n_covered,
        covered_leaves=best.covered_leaves,
        m_effective=pool.m_effective,
        alpha_corrected=pool.alpha_corrected,
        candidates_evaluated=pool.m_effective,
        pruned=pool.pruned,
        selected_cover_id=best.cover_id,
        m_total=pool.m_total,
        fallback=fallback,
    )


def hcc_predict(
    fam: PredictorFamily,
    t: Taxonomy,
    ls: LeafScores,
    alpha: float,
    cp: CostParams,
    *,
    prune: bool = True,
    correct: bool = True,
    pad_empty: bool = False,
    renormalize: bool = False,
) -> HccPrediction:
    check_family(fam, t)
    check_alpha(alpha)
    ps = propagate_scores(t, ls, renormalize=renormalize)
    pool = candidate_pool(
        fam, t, ps.values.tolist(), alpha, prune=prune, correct=correct, pad_empty=pad_empty
    )
    prediction = select_candidate(t, pool, cp)
    if prediction.fallback:
        logger.warning(
            "hcc_predict: no nonempty candidate for instance '%s', returning leaf set",
            ls.instance_id,
        )
    return prediction


def candidate_pools(
    fam: PredictorFamily,
    t: Taxonomy,
    propagated: np.ndarray,
    alpha: float,
    *,
    prune: bool = True,
    correct: bool = True,
    pad_empty: bool = False,
    threads: int = 1,
) -> list[CandidatePool]:
    check_family(fam, t)
    check_alpha(alpha)
    rows = np.asarray(propagated).tolist()
    return map_ordered(
        lambda values: candidate_pool(
            fam, t, values, alpha, prune=prune, correct=correct, pad_empty=pad_empty
        ),
        rows,
        threads,
    )


def select_batch(t: Taxonomy, pools, cp: CostParams) -> list[HccPrediction]:
    predictions = [select_candidate(t, pool, cp) for pool in pools]
    fallbacks = sum(p.fallback for p in predictions)
    if fallbacks:
        logger.warning("select_batch: %s instances fell back to the leaf set", fallbacks)
    return predictions


def predict_batch(
    fam: PredictorFamily,
    t: Taxonomy,
    propagated: np.ndarray,
    alpha: float,
    cp: CostParams,
    **options,
) -> list[HccPrediction]:
    return select_batch(t, candidate_pools(fam, t, propagated, alpha, **options), cp)

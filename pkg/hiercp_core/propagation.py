import logging
from dataclasses import dataclass

import numpy as np

from . import nodesets
from .covers import NolCover
from .nodesets import NodeSet
from .taxonomy import Taxonomy, TaxonomyError

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-6


class ScoreError(ValueError):
    pass


@dataclass(frozen=True)
class LeafScores:
    values: np.ndarray
    instance_id: str = ""


@dataclass(frozen=True)
class PropagatedScores:
    values: np.ndarray


@dataclass(frozen=True)
class GroundTruth:
    true_leaf: int
    ancestor_set: NodeSet


def check_simplex(values: np.ndarray, renormalize: bool = False, label: str = "") -> np.ndarray:
    values = np.asarray(values, dtype=float)
    where = f" (instance '{label}')" if label else ""
    if not np.all(np.isfinite(values)):
        raise ScoreError(f"Leaf scores contain non-finite values{where}")
    total = float(values.sum())
    in_range = bool(np.all(values >= -SIMPLEX_TOLERANCE) and np.all(values <= 1 + SIMPLEX_TOLERANCE))
    if in_range and abs(total - 1.0) <= SIMPLEX_TOLERANCE:
        return values
    if renormalize and np.all(values >= 0) and total > 0:
        logger.warning("check_simplex: renormalized scores%s sum=%.8f", where, total)
        return values / total
    raise ScoreError(f"Leaf scores are not on the simplex{where}: sum={total:.8f}")


def _check_width(t: Taxonomy, width: int):
    expected = len(t.leaf_indices)
    if width != expected:
        raise ScoreError(f"Expected {expected} leaf scores, got {width}")


def propagate_scores(t: Taxonomy, ls: LeafScores, renormalize: bool = False) -> PropagatedScores:
    leaf_values = np.asarray(ls.values, dtype=float)
    if leaf_values.ndim != 1:
        raise ScoreError("Leaf scores must be a vector")
    _check_width(t, leaf_values.shape[0])
    leaf_values = check_simplex(leaf_values, renormalize, ls.instance_id)
    values = np.array([leaf_values[cols].sum() for cols in t.leaf_columns])
    return PropagatedScores(values=values)


def propagate_batch(t: Taxonomy, leaf_matrix: np.ndarray) -> np.ndarray:
    """Propagate an (instances x leaves) matrix to (instances x nodes).

    Rows are assumed to be validated already (see ``check_simplex``).
    """
    leaf_matrix = np.asarray(leaf_matrix, dtype=float)
    if leaf_matrix.ndim != 2:
        raise ScoreError("Leaf score batch must be a matrix")
    _check_width(t, leaf_matrix.shape[1])
    out = np.empty((leaf_matrix.shape[0], t.size))
    for v, cols in enumerate(t.leaf_columns):
        if cols.size == 1:
            out[:, v] = leaf_matrix[:, cols[0]]
        else:
            out[:, v] = leaf_matrix[:, cols].sum(axis=1)
    return out


def propagated_label_set(t: Taxonomy, true_leaf: int) -> GroundTruth:
    if not 0 <= true_leaf < t.size:
        raise TaxonomyError(f"Node index {true_leaf} outside [0, {t.size})")
    if not t.is_leaf(true_leaf):
        raise TaxonomyError(f"Ground truth '{t.names[true_leaf]}' is not a leaf")
    return GroundTruth(
        true_leaf=true_leaf, ancestor_set=t.ancestors[true_leaf] | nodesets.bit(true_leaf)
    )


def label_indicator(cover: NolCover, gt: GroundTruth) -> np.ndarray:
    indicator = np.fromiter(
        (nodesets.contains(gt.ancestor_set, v) for v in cover.member_indices),
        dtype=bool,
        count=cover.size,
    )
    assert indicator.any(), (
        f"cover {cover.cover_id} has no true member for leaf {gt.true_leaf}"
    )
    return indicator

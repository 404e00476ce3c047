import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
import pandas as pd
from scipy.special import softmax
from scipy.stats import spearmanr

from . import nodesets
from .baselines import method_pools
from .conformal import CalibrationRecord
from .inference import CostParams, HccPrediction, select_batch, set_cost
from .nodesets import NodeSet
from .propagation import LeafScores, PropagatedScores, propagate_batch, propagated_label_set
from .taxonomy import Taxonomy, TaxonomyError, leaf_cover

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeanSd:
    mean: float
    sd: float

    @classmethod
    def of(cls, values) -> "MeanSd":
        values = np.asarray(values, dtype=float)
        return cls(mean=float(values.mean()), sd=float(values.std(ddof=0)))

    def __str__(self):
        return f"{self.mean:.4f} ± {self.sd:.4f}"


@dataclass(frozen=True)
class Metrics:
    coverage: MeanSd
    cost: MeanSd
    ps_size: MeanSd
    covered_leaves: MeanSd
    n_test: int
    mean_m_effective: float | None = None
    mean_alpha_corrected: float | None = None
    mean_pruned: float | None = None
    fallbacks: int = 0
    empty: int = 0

    def to_row(self) -> dict:
        row = {}
        for name in ("coverage", "cost", "ps_size", "covered_leaves"):
            stat = getattr(self, name)
            row[f"{name}_mean"] = stat.mean
            row[f"{name}_sd"] = stat.sd
        row["n_test"] = self.n_test
        row["mean_m_effective"] = self.mean_m_effective
        row["mean_alpha_corrected"] = self.mean_alpha_corrected
        row["mean_pruned"] = self.mean_pruned
        row["fallbacks"] = self.fallbacks
        row["empty"] = self.empty
        return row

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SynthConfig:
    taxonomy: Taxonomy
    n: int
    signal: float = 4.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Synthetic instance count must be >= 1, got {self.n}")
        if self.signal < 0 or self.noise < 0:
            raise ValueError("Synthetic signal and noise must be nonnegative")


def default_beta(t: Taxonomy) -> float:
    """Inverse median leaf-cover size over the internal nodes, root included."""
    sizes = [nodesets.size(t.leaf_covers[v]) for v in t.internal_indices]
    if not sizes:
        raise TaxonomyError("default beta needs at least one internal node")
    return float(1.0 / np.median(sizes))


def default_betas(points: int = 10) -> list[float]:
    return np.linspace(0.0, 1.0, points).tolist()


def coverage_indicator(t: Taxonomy, prediction: NodeSet, truth_leaf: int) -> int:
    return int(nodesets.contains(leaf_cover(t, prediction), truth_leaf))


def _selected(prediction) -> NodeSet:
    if isinstance(prediction, HccPrediction):
        return prediction.selected
    return prediction


def evaluate_run(t: Taxonomy, predictions: Sequence, truths: Sequence[int], beta: float) -> Metrics:
    if len(predictions) != len(truths):
        raise ValueError(
            f"Got {len(predictions)} predictions for {len(truths)} ground-truth labels"
        )
    if not predictions:
        raise ValueError("No predictions to evaluate")
    cp = CostParams(beta)
    covered = []
    costs = []
    sizes = []
    n_leaves = []
    for prediction, truth in zip(predictions, truths):
        selected = _selected(prediction)
        leaves = leaf_cover(t, selected)
        covered.append(int(nodesets.contains(leaves, truth)))
        costs.append(set_cost(t, selected, cp))
        sizes.append(nodesets.size(selected))
        n_leaves.append(nodesets.size(leaves))

    audits = [p for p in predictions if isinstance(p, HccPrediction)]
    metrics = Metrics(
        coverage=MeanSd.of(covered),
        cost=MeanSd.of(costs),
        ps_size=MeanSd.of(sizes),
        covered_leaves=MeanSd.of(n_leaves),
        n_test=len(predictions),
        mean_m_effective=float(np.mean([p.m_effective for p in audits])) if audits else None,
        mean_alpha_corrected=float(np.mean([p.alpha_corrected for p in audits])) if audits else None,
        mean_pruned=float(np.mean([p.pruned for p in audits])) if audits else None,
        fallbacks=sum(p.fallback for p in audits),
        empty=sum(1 for s in sizes if s == 0),
    )
    logger.debug(
        "evaluate_run: n=%s coverage=%s ps_size=%s", metrics.n_test, metrics.coverage, metrics.ps_size
    )
    return metrics


def split_indices(n: int, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    n_cal = math.floor(n * Fraction(repr(float(ratio))))
    if n_cal < 1 or n - n_cal < 1:
        raise ValueError(
            f"Cannot split {n} records with ratio {ratio}: both sides need at least one record"
        )
    order = np.random.default_rng(seed).permutation(n)
    return order[:n_cal], order[n_cal:]


def split_data(records: Sequence, ratio: float, seed: int) -> tuple[list, list]:
    cal, test = split_indices(len(records), ratio, seed)
    return [records[i] for i in cal], [records[i] for i in test]


def build_records(t: Taxonomy, leaf_matrix: np.ndarray, true_leaves: Sequence[int]):
    propagated = propagate_batch(t, leaf_matrix)
    return [
        CalibrationRecord(
            scores=PropagatedScores(values=row), truth=propagated_label_set(t, int(leaf))
        )
        for row, leaf in zip(propagated, true_leaves)
    ]


def sweep_pools(t: Taxonomy, pools, truths: Sequence[int], betas: Sequence[float]) -> pd.DataFrame:
    if len(betas) == 0:
        raise ValueError("beta sweep needs at least one beta")
    rows = []
    for beta in betas:
        predictions = select_batch(t, pools, CostParams(beta))
        metrics = evaluate_run(t, predictions, truths, beta)
        rows.append(
            {
                "beta": float(beta),
                "ps_size": metrics.ps_size.mean,
                "covered_leaves": metrics.covered_leaves.mean,
                "cost": metrics.cost.mean,
                "coverage": metrics.coverage.mean,
            }
        )
    return pd.DataFrame(rows)


def sweep_beta(
    fam,
    t: Taxonomy,
    test_records: Sequence[CalibrationRecord],
    alpha: float,
    betas: Sequence[float],
    method: str = "hcc",
    pad_empty: bool = False,
    threads: int = 1,
) -> pd.DataFrame:
    if not test_records:
        raise ValueError("beta sweep needs at least one test record")
    propagated = np.vstack([r.scores.values for r in test_records])
    truths = [r.truth.true_leaf for r in test_records]
    pools = method_pools(method, fam, t, propagated, alpha, pad_empty=pad_empty, threads=threads)
    return sweep_pools(t, pools, truths, betas)


def _spearman(x, y) -> float:
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    return float(spearmanr(x, y).statistic)


def sweep_trend(frame: pd.DataFrame) -> dict[str, float]:
    betas = frame["beta"].to_numpy()
    return {
        "spearman_ps_size": _spearman(betas, frame["ps_size"].to_numpy()),
        "spearman_covered_leaves": _spearman(betas, frame["covered_leaves"].to_numpy()),
    }


def synth_arrays(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    t = cfg.taxonomy
    n_leaves = len(t.leaf_indices)
    rng = np.random.default_rng(cfg.seed)
    truth_columns = rng.integers(0, n_leaves, size=cfg.n)
    logits = cfg.noise * rng.standard_normal((cfg.n, n_leaves))
    logits[np.arange(cfg.n), truth_columns] += cfg.signal
    scores = softmax(logits, axis=1)
    true_leaves = np.asarray(t.leaf_indices, dtype=np.intp)[truth_columns]
    return scores, true_leaves


def synth_generate(cfg: SynthConfig) -> list[tuple[LeafScores, int]]:
    scores, true_leaves = synth_arrays(cfg)
    return [
        (LeafScores(values=row, instance_id=f"synth-{i:06d}"), int(leaf))
        for i, (row, leaf) in enumerate(zip(scores, true_leaves))
    ]

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import __version__
from .artifacts import (
    ArtifactBundle,
    ScoreTable,
    ingest_scores,
    load_model,
    metrics_frame,
    metrics_summary,
    model_text,
    predictions_frame,
)
from .baselines import CRC, calibrate_crc_family, method_pools
from .config import METHODS, RunConfigModel
from .conformal import SPLIT, CalibrationSet, calibrate_family
from .covers import CoverSpace, build_cover_space, cover_size_histogram
from .evaluation import (
    default_beta,
    default_betas,
    evaluate_run,
    split_indices,
    sweep_pools,
    sweep_trend,
)
from .inference import CostParams, select_batch
from .paths import run_artifact_paths
from .propagation import propagate_batch
from .taxonomy import Taxonomy, load_taxonomy

logger = logging.getLogger(__name__)


def family_kind(method: str) -> str:
    return CRC if method == "hcc-crc" else SPLIT


@dataclass
class PipelineState:
    cfg: RunConfigModel
    command: str
    taxonomy: Taxonomy | None = None
    beta: float | None = None
    table: ScoreTable | None = None
    space: CoverSpace | None = None
    calibration_rows: np.ndarray | None = None
    test_rows: np.ndarray | None = None
    families: dict = field(default_factory=dict)
    pools: dict = field(default_factory=dict)
    predictions: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    sweep: object = None
    trend: dict | None = None
    bundle: ArtifactBundle = field(default_factory=ArtifactBundle)
    summary: dict = field(default_factory=dict)

    @property
    def methods(self) -> tuple[str, ...]:
        if self.cfg.method == "all":
            return METHODS
        return (self.cfg.method,)

    @property
    def artifact_paths(self):
        return run_artifact_paths(self.cfg.output_path)

    def test_truths(self):
        if self.table is None or not self.table.labelled:
            return None
        return self.table.true_leaves[self.test_rows]


class JobBase:
    name = "Job"

    def __init__(self):
        self.size = 1

    def setup(self, state: PipelineState):
        pass

    def do(self, state: PipelineState, callback=None):
        raise NotImplementedError


def _tick(callback):
    if callback:
        callback()


class LoadTaxonomyJob(JobBase):
    name = "Taxonomy"

    def do(self, state, callback=None):
        t = load_taxonomy(state.cfg.taxonomy_path)
        state.taxonomy = t
        state.beta = default_beta(t) if state.cfg.beta == "auto" else float(state.cfg.beta)
        state.summary.update(
            {
                "nodes": t.size,
                "leaves": len(t.leaf_indices),
                "depth": t.depth,
                "beta": state.beta,
                "beta_source": "auto" if state.cfg.beta == "auto" else "config",
            }
        )
        _tick(callback)


class IngestScoresJob(JobBase):
    name = "Scores"

    def do(self, state, callback=None):
        state.table = ingest_scores(
            state.cfg.scores_path,
            state.taxonomy,
            renormalize=state.cfg.renormalize,
            require_truth=state.command != "predict",
        )
        state.summary["instances"] = len(state.table)
        _tick(callback)


class BuildCoversJob(JobBase):
    name = "Covers"

    def do(self, state, callback=None):
        space = build_cover_space(state.taxonomy, state.cfg.cover_mode, state.cfg.max_covers)
        state.space = space
        state.summary["covers"] = len(space)
        state.summary["cover_mode"] = space.mode
        state.summary["cover_sizes"] = cover_size_histogram(space)
        _tick(callback)


class SplitJob(JobBase):
    name = "Split"

    def do(self, state, callback=None):
        cal, test = split_indices(len(state.table), state.cfg.split_ratio, state.cfg.seed)
        state.calibration_rows = cal
        state.test_rows = test
        state.summary["calibration_size"] = len(cal)
        state.summary["test_size"] = len(test)
        _tick(callback)


class AllRowsJob(JobBase):
    name = "Rows"

    def do(self, state, callback=None):
        rows = np.arange(len(state.table))
        if state.command == "calibrate":
            state.calibration_rows = rows
            state.summary["calibration_size"] = len(rows)
        else:
            state.test_rows = rows
            state.summary["test_size"] = len(rows)
        _tick(callback)


class CalibrateJob(JobBase):
    name = "Calibrate"

    def setup(self, state):
        self.kinds = sorted({family_kind(method) for method in state.methods}, reverse=True)
        self.size = len(self.kinds)

    def do(self, state, callback=None):
        t = state.taxonomy
        rows = state.calibration_rows
        calibration = CalibrationSet.from_arrays(
            t, propagate_batch(t, state.table.scores[rows]), state.table.true_leaves[rows]
        )
        for kind in self.kinds:
            if kind == CRC:
                fam = calibrate_crc_family(
                    t, state.space, calibration, state.cfg.alpha, threads=state.cfg.threads
                )
            else:
                fam = calibrate_family(t, state.space, calibration, threads=state.cfg.threads)
            state.families[kind] = fam
            logger.debug("CalibrateJob: kind=%s covers=%s n_c=%s", kind, len(fam), fam.n_c)
            _tick(callback)


class LoadModelJob(JobBase):
    name = "Model"

    def do(self, state, callback=None):
        fam = load_model(state.cfg.model_path, state.taxonomy)
        state.families[fam.kind] = fam
        state.summary["covers"] = len(fam)
        state.summary["cover_mode"] = fam.cover_mode
        _tick(callback)


class PredictJob(JobBase):
    name = "Predict"

    def setup(self, state):
        self.size = len(state.methods)

    def do(self, state, callback=None):
        t = state.taxonomy
        propagated = propagate_batch(t, state.table.scores[state.test_rows])
        for method in state.methods:
            kind = family_kind(method)
            if kind not in state.families:
                raise ValueError(f"Method '{method}' needs a {kind} model, none is loaded")
            state.pools[method] = method_pools(
                method,
                state.families[kind],
                t,
                propagated,
                state.cfg.alpha,
                pad_empty=state.cfg.pad_empty,
                threads=state.cfg.threads,
            )
            _tick(callback)


class EvaluateJob(JobBase):
    name = "Evaluate"

    def setup(self, state):
        self.size = len(state.methods)

    def do(self, state, callback=None):
        t = state.taxonomy
        truths = state.test_truths()
        cp = CostParams(state.beta)
        for method in state.methods:
            predictions = select_batch(t, state.pools[method], cp)
            state.predictions[method] = predictions
            if truths is not None:
                state.metrics[method] = evaluate_run(t, predictions, truths, state.beta)
            _tick(callback)
        if state.metrics:
            state.summary["metrics"] = {
                method: {
                    "coverage": m.coverage.mean,
                    "cost": m.cost.mean,
                    "ps_size": m.ps_size.mean,
                    "covered_leaves": m.covered_leaves.mean,
                }
                for method, m in state.metrics.items()
            }


class SweepJob(JobBase):
    name = "Sweep"

    def setup(self, state):
        self.betas = state.cfg.betas or default_betas(state.cfg.beta_points)
        self.size = 1

    def do(self, state, callback=None):
        method = state.methods[0]
        state.sweep = sweep_pools(state.taxonomy, state.pools[method], state.test_truths(), self.betas)
        state.trend = sweep_trend(state.sweep)
        state.summary["betas"] = len(self.betas)
        state.summary.update(state.trend)
        _tick(callback)


class WriteArtifactsJob(JobBase):
    name = "Artifacts"

    def _settings(self, state):
        cfg = state.cfg
        return {
            "tool": "hiercp",
            "version": __version__,
            "command": state.command,
            "alpha": cfg.alpha,
            "beta": state.beta,
            "method": cfg.method,
            "seed": cfg.seed,
            "split_ratio": cfg.split_ratio,
            "cover_mode": cfg.cover_mode,
            "max_covers": cfg.max_covers,
            "pad_empty": cfg.pad_empty,
            "renormalize": cfg.renormalize,
        }

    def do(self, state, callback=None):
        paths = state.artifact_paths
        bundle = state.bundle
        settings = self._settings(state)
        t = state.taxonomy

        if state.command in ("calibrate", "evaluate", "sweep-beta"):
            metadata = {
                "tool": "hiercp",
                "version": __version__,
                "seed": state.cfg.seed,
                "alpha": state.cfg.alpha,
                "calibration_size": len(state.calibration_rows),
            }
            for kind, fam in sorted(state.families.items()):
                key = "model_crc" if kind == CRC else "model"
                bundle.stage_text(paths[key], model_text(fam, t, metadata))

        if state.predictions:
            ids = [state.table.instance_ids[i] for i in state.test_rows]
            truths = state.test_truths()
            frames = [
                predictions_frame(t, ids, method, predictions, truths)
                for method, predictions in state.predictions.items()
            ]
            bundle.stage_frame(paths["predictions"], pd.concat(frames, ignore_index=True))

        if state.metrics:
            bundle.stage_json(paths["metrics_summary"], metrics_summary(state.metrics, settings))
            bundle.stage_frame(paths["metrics_table"], metrics_frame(state.metrics, state.beta))

        if state.sweep is not None:
            bundle.stage_frame(paths["sweep_table"], state.sweep)
            bundle.stage_json(
                paths["metrics_summary"], {"settings": settings, "trend": state.trend}
            )
        state.summary["artifacts"] = len(bundle)
        _tick(callback)


def pipeline_jobs(command: str) -> list[JobBase]:
    if command == "calibrate":
        return [
            LoadTaxonomyJob(),
            IngestScoresJob(),
            BuildCoversJob(),
            AllRowsJob(),
            CalibrateJob(),
            WriteArtifactsJob(),
        ]
    if command == "predict":
        return [
            LoadTaxonomyJob(),
            LoadModelJob(),
            IngestScoresJob(),
            AllRowsJob(),
            PredictJob(),
            EvaluateJob(),
            WriteArtifactsJob(),
        ]
    if command in ("evaluate", "sweep-beta"):
        last = EvaluateJob() if command == "evaluate" else SweepJob()
        return [
            LoadTaxonomyJob(),
            IngestScoresJob(),
            BuildCoversJob(),
            SplitJob(),
            CalibrateJob(),
            PredictJob(),
            last,
            WriteArtifactsJob(),
        ]
    raise ValueError(f"Unknown pipeline command '{command}'")

import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from .baselines import CRC, LAMBDA_GRID, RiskControlPredictor
from .config import rank_name_matches
from .conformal import SPLIT, CoverPredictor, PredictorFamily, check_family
from .covers import NolCover, is_nol_cover
from .evaluation import Metrics, build_records
from .inference import HccPrediction
from .propagation import LeafScores, ScoreError, check_simplex
from .taxonomy import Taxonomy, TaxonomyError, leaf_cover

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
ID_COLUMN = "instance_id"
TRUTH_COLUMN = "true_leaf"
SELECTION_SEPARATOR = "|"


class ArtifactError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScoreTable:
    instance_ids: tuple[str, ...]
    scores: np.ndarray
    true_leaves: np.ndarray | None = None

    def __len__(self):
        return len(self.instance_ids)

    @property
    def labelled(self) -> bool:
        return self.true_leaves is not None

    def leaf_scores(self, row: int) -> LeafScores:
        return LeafScores(values=self.scores[row], instance_id=self.instance_ids[row])

    def records(self, t: Taxonomy, rows=None):
        if not self.labelled:
            raise ScoreError("Score table has no true_leaf column")
        rows = np.arange(len(self)) if rows is None else np.asarray(rows)
        return build_records(t, self.scores[rows], self.true_leaves[rows])


def _suggest(name, candidates):
    matches = rank_name_matches(name, candidates, limit=3)
    return f" (closest: {', '.join(matches)})" if matches else ""


def ingest_scores(path, t: Taxonomy, renormalize: bool = False, require_truth: bool = True) -> ScoreTable:
    path = Path(path)
    logger.debug("ingest_scores: path=%s renormalize=%s", path, renormalize)
    try:
        frame = pd.read_csv(
            path, dtype={ID_COLUMN: str, TRUTH_COLUMN: str}, keep_default_na=False, na_values=[""]
        )
    except FileNotFoundError:
        raise ScoreError(f"Score file '{path}' does not exist") from None
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ScoreError(f"Cannot parse score file '{path}': {exc}") from exc

    columns = [str(c) for c in frame.columns]
    frame.columns = columns
    if ID_COLUMN not in columns:
        raise ScoreError(f"Score file '{path}' has no '{ID_COLUMN}' column")
    has_truth = TRUTH_COLUMN in columns
    if require_truth and not has_truth:
        raise ScoreError(f"Score file '{path}' has no '{TRUTH_COLUMN}' column")

    leaf_names = t.leaf_names
    known = set(leaf_names)
    leaf_columns = [c for c in columns if c not in (ID_COLUMN, TRUTH_COLUMN)]
    for column in leaf_columns:
        if column not in known:
            raise ScoreError(f"Unknown leaf column '{column}'{_suggest(column, leaf_names)}")
    missing = [name for name in leaf_names if name not in set(leaf_columns)]
    if missing:
        raise ScoreError(f"Missing leaf column(s): {', '.join(missing)}")
    if frame.empty:
        raise ScoreError(f"Score file '{path}' has no rows")

    ids = frame[ID_COLUMN].fillna("").astype(str).tolist()
    numeric = frame[list(leaf_names)].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ScoreError(
            f"Row {row + 1} (instance '{ids[row]}'): non-numeric value in column '{leaf_names[col]}'"
        )
    scores = numeric.to_numpy(dtype=float)
    for row in range(scores.shape[0]):
        scores[row] = check_simplex(scores[row], renormalize, label=f"row {row + 1}: {ids[row]}")

    true_leaves = None
    if has_truth:
        resolved = []
        for row, name in enumerate(frame[TRUTH_COLUMN].fillna("").astype(str)):
            try:
                resolved.append(t.leaf_id(name))
            except TaxonomyError as exc:
                raise ScoreError(f"Row {row + 1} (instance '{ids[row]}'): {exc}") from None
        true_leaves = np.asarray(resolved, dtype=np.intp)

    logger.debug("ingest_scores: rows=%s labelled=%s", len(ids), has_truth)
    return ScoreTable(instance_ids=tuple(ids), scores=scores, true_leaves=true_leaves)


class CoverDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cover_id: int
    members: list[str]
    sorted_conformity: list[float] | None = None
    risk_curve: list[float] | None = None


class ModelDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: int
    kind: Literal["split", "crc"]
    taxonomy_hash: str
    cover_mode: str
    n_c: int
    leaf_cover_id: int
    calibrated_alpha: float | None = None
    covers: list[CoverDocument]
    metadata: dict[str, Any] = {}


def model_document(fam: PredictorFamily, t: Taxonomy, metadata=None) -> ModelDocument:
    check_family(fam, t)
    covers = []
    calibrated_alpha = None
    for p in fam.predictors:
        entry = {"cover_id": p.cover.cover_id, "members": t.names_of(p.cover.members)}
        if fam.kind == CRC:
            entry["risk_curve"] = p.risk_curve.tolist()
            calibrated_alpha = p.calibrated_alpha
        else:
            entry["sorted_conformity"] = p.sorted_conformity.tolist()
        covers.append(CoverDocument(**entry))
    return ModelDocument(
        format_version=FORMAT_VERSION,
        kind=fam.kind,
        taxonomy_hash=fam.taxonomy_hash,
        cover_mode=fam.cover_mode,
        n_c=fam.n_c,
        leaf_cover_id=fam.leaf_predictor_id,
        calibrated_alpha=calibrated_alpha,
        covers=covers,
        metadata=dict(metadata or {}),
    )


def model_text(fam: PredictorFamily, t: Taxonomy, metadata=None) -> str:
    return json.dumps(model_document(fam, t, metadata).model_dump(exclude_none=True), indent=2) + "\n"


def save_model(fam: PredictorFamily, path, t: Taxonomy, metadata=None):
    path = Path(path)
    write_atomic(path, model_text(fam, t, metadata))
    logger.debug("save_model: path=%s covers=%s kind=%s", path, len(fam), fam.kind)


def _frozen(values) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    array.setflags(write=False)
    return array


def load_model(path, t: Taxonomy) -> PredictorFamily:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"Cannot read model file '{path}': {exc}") from exc
    if not raw.strip():
        raise ArtifactError(f"Model file '{path}' is empty")
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"Model file '{path}' is truncated or not JSON: {exc}") from exc
    if isinstance(payload, dict) and payload.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(
            f"Model file '{path}' has format version {payload.get('format_version')}, "
            f"expected {FORMAT_VERSION}"
        )
    try:
        document = ModelDocument.model_validate(payload)
    except ValidationError as exc:
        raise ArtifactError(f"Model file '{path}' is malformed: {exc}") from exc
    if document.taxonomy_hash != t.fingerprint:
        raise ArtifactError(
            f"Model file '{path}' was calibrated on a different taxonomy "
            f"({document.taxonomy_hash[:12]} != {t.fingerprint[:12]})"
        )

    if document.kind == CRC and document.calibrated_alpha is None:
        raise ArtifactError(f"Model file '{path}': risk-control model without calibrated_alpha")

    predictors = []
    for position, entry in enumerate(document.covers):
        if entry.cover_id != position:
            raise ArtifactError(f"Model file '{path}': cover ids are not dense at {position}")
        try:
            members = t.mask_of(entry.members)
        except TaxonomyError as exc:
            raise ArtifactError(f"Model file '{path}', cover {entry.cover_id}: {exc}") from exc
        if not is_nol_cover(t, members):
            raise ArtifactError(f"Model file '{path}': cover {entry.cover_id} is not a valid cover")
        cover = NolCover(members=members, cover_id=entry.cover_id, covered_leaves=leaf_cover(t, members))
        if document.kind == SPLIT:
            if entry.sorted_conformity is None or len(entry.sorted_conformity) != document.n_c:
                raise ArtifactError(
                    f"Model file '{path}': cover {entry.cover_id} needs {document.n_c} conformity scores"
                )
            predictors.append(CoverPredictor(cover=cover, sorted_conformity=_frozen(entry.sorted_conformity)))
        else:
            if entry.risk_curve is None or len(entry.risk_curve) != LAMBDA_GRID.size:
                raise ArtifactError(
                    f"Model file '{path}': cover {entry.cover_id} needs a {LAMBDA_GRID.size}-point risk curve"
                )
            predictors.append(
                RiskControlPredictor(
                    cover=cover,
                    risk_curve=_frozen(entry.risk_curve),
                    n_c=document.n_c,
                    calibrated_alpha=document.calibrated_alpha,
                )
            )
    if not 0 <= document.leaf_cover_id < len(predictors):
        raise ArtifactError(f"Model file '{path}': leaf cover id {document.leaf_cover_id} out of range")
    if predictors[document.leaf_cover_id].cover.members != t.leaves:
        raise ArtifactError(f"Model file '{path}': cover {document.leaf_cover_id} is not the leaf cover")

    logger.debug("load_model: path=%s covers=%s kind=%s", path, len(predictors), document.kind)
    return PredictorFamily(
        predictors=tuple(predictors),
        leaf_predictor_id=document.leaf_cover_id,
        n_c=document.n_c,
        taxonomy_hash=document.taxonomy_hash,
        kind=document.kind,
        cover_mode=document.cover_mode,
    )


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


class ArtifactBundle:
    def __init__(self):
        self._staged: dict[Path, str] = {}

    def __len__(self):
        return len(self._staged)

    @property
    def paths(self) -> list[Path]:
        return list(self._staged)

    def stage_text(self, path, text: str):
        self._staged[Path(path)] = text

    def stage_json(self, path, payload):
        self.stage_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def stage_frame(self, path, frame: pd.DataFrame):
        self.stage_text(path, frame.to_csv(index=False, lineterminator="\n"))

    def commit(self) -> list[Path]:
        written = []
        for path, text in self._staged.items():
            write_atomic(path, text)
            written.append(path)
            logger.debug("ArtifactBundle.commit: path=%s bytes=%s", path, len(text))
        self._staged.clear()
        return written

    def discard(self):
        self._staged.clear()


def predictions_frame(
    t: Taxonomy,
    instance_ids,
    method: str,
    predictions: list[HccPrediction],
    true_leaves=None,
) -> pd.DataFrame:
    rows = []
    for i, (instance_id, p) in enumerate(zip(instance_ids, predictions)):
        row = {
            "instance_id": instance_id,
            "method": method,
            "selected": SELECTION_SEPARATOR.join(t.names_of(p.selected)),
            "cost": p.cost,
            "n_selected": p.size,
            "n_covered_leaves": p.n_covered,
            "m_effective": p.m_effective,
            "alpha_corrected": p.alpha_corrected,
            "selected_cover_id": -1 if p.selected_cover_id is None else p.selected_cover_id,
            "fallback": p.fallback,
        }
        if true_leaves is not None:
            truth = int(true_leaves[i])
            row["true_leaf"] = t.names[truth]
            row["covered"] = int(p.covered_leaves >> truth & 1)
        rows.append(row)
    return pd.DataFrame(rows)


def metrics_summary(metrics_by_method: dict[str, Metrics], settings: dict) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "settings": settings,
        "methods": {method: m.to_dict() for method, m in metrics_by_method.items()},
    }


def metrics_frame(metrics_by_method: dict[str, Metrics], beta: float) -> pd.DataFrame:
    rows = []
    for method, metrics in metrics_by_method.items():
        rows.append({"method": method, "beta": beta, **metrics.to_row()})
    return pd.DataFrame(rows)


def synthetic_scores_frame(t: Taxonomy, scores: np.ndarray, true_leaves) -> pd.DataFrame:
    frame = pd.DataFrame(scores, columns=list(t.leaf_names))
    frame.insert(0, TRUTH_COLUMN, [t.names[int(v)] for v in true_leaves])
    frame.insert(0, ID_COLUMN, [f"synth-{i:06d}" for i in range(len(frame))])
    return frame

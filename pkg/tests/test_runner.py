import json
from pathlib import Path

import pandas as pd
import pytest

from hiercp_core.artifacts import synthetic_scores_frame
from hiercp_core.config import METHODS, RunConfigModel
from hiercp_core.evaluation import SynthConfig, synth_arrays
from hiercp_core.events import EventType, MemoryEventSink
from hiercp_core.jobs import JobBase, PipelineState, pipeline_jobs
from hiercp_core.runner import (
    EXIT_RUNTIME,
    EXIT_VALIDATION,
    PipelineAbortError,
    PipelineRunner,
    error_record,
    exit_code_for,
    run_pipeline,
)
from hiercp_core.taxonomy import load_taxonomy

ASSETS = Path(__file__).parent / "assets"
TAXONOMY = ASSETS / "dish_taxonomy.json"


class DummyReporter:
    def __init__(self):
        self.started = False
        self.finished = False
        self.stages = []
        self.advance_calls = 0
        self.summary = None

    def start(self, *, total, command):
        self.started = True
        self.total = total

    def finish(self):
        self.finished = True

    def add_stage(self, *, name, total):
        self.stages.append(name)
        return len(self.stages)

    def advance_stage(self, task_id, *, advance=1):
        self.advance_calls += advance

    def finish_stage(self, task_id, *, description):
        pass

    def emit_summary(self, summary):
        self.summary = summary


class DummyFailJob(JobBase):
    name = "Boom"

    def do(self, state, callback=None):
        raise KeyError("kaboom")


def _scores(tmp_path, n=300, seed=0, labelled=True):
    t = load_taxonomy(TAXONOMY)
    scores, truths = synth_arrays(SynthConfig(taxonomy=t, n=n, signal=2.0, seed=seed))
    frame = synthetic_scores_frame(t, scores, truths)
    if not labelled:
        frame = frame.drop(columns=["true_leaf"])
    path = tmp_path / ("scores.csv" if labelled else "unlabelled.csv")
    frame.to_csv(path, index=False)
    return path


def _cfg(tmp_path, scores_path, out="out", **kwargs):
    return RunConfigModel(
        taxonomy_path=str(TAXONOMY),
        scores_path=str(scores_path),
        output_path=str(tmp_path / out),
        **kwargs,
    )


def test_evaluate_emits_success_event_sequence(tmp_path):
    reporter = DummyReporter()
    sink = MemoryEventSink()
    state = run_pipeline(
        _cfg(tmp_path, _scores(tmp_path)), command="evaluate", reporter=reporter, event_sink=sink
    )

    types = sink.types()
    assert types[0] == EventType.RUN_STARTED
    assert types.count(EventType.STAGE_STARTED) == len(pipeline_jobs("evaluate"))
    assert types.count(EventType.STAGE_FINISHED) == len(pipeline_jobs("evaluate"))
    assert types.count(EventType.ARTIFACT_COMMITTED) == 4
    assert types[-2:] == [EventType.RUN_FINISHED, EventType.SUMMARY_EMITTED]

    assert reporter.started and reporter.finished
    assert reporter.stages == [job.name for job in pipeline_jobs("evaluate")]
    assert reporter.advance_calls == reporter.total
    assert reporter.summary is state.summary


def test_evaluate_summary_and_artifacts(tmp_path):
    state = run_pipeline(_cfg(tmp_path, _scores(tmp_path)), command="evaluate")
    summary = state.summary
    assert summary["nodes"] == 12
    assert summary["leaves"] == 7
    assert summary["beta"] == pytest.approx(1 / 3)
    assert summary["beta_source"] == "auto"
    assert summary["covers"] == 11
    assert summary["cover_mode"] == "exhaustive"
    assert (summary["calibration_size"], summary["test_size"]) == (240, 60)
    assert set(summary["metrics"]) == {"hcc"}

    out = tmp_path / "out"
    assert sorted(p.name for p in out.iterdir()) == [
        "metrics.csv",
        "metrics.json",
        "model.json",
        "predictions.csv",
    ]
    predictions = pd.read_csv(out / "predictions.csv")
    assert len(predictions) == 60
    assert set(predictions["method"]) == {"hcc"}
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["settings"]["seed"] == 0
    assert metrics["methods"]["hcc"]["n_test"] == 60


def test_evaluate_all_methods(tmp_path):
    state = run_pipeline(_cfg(tmp_path, _scores(tmp_path), method="all", beta=0.5), command="evaluate")
    assert set(state.metrics) == set(METHODS)
    assert state.summary["beta_source"] == "config"
    out = tmp_path / "out"
    assert (out / "model-crc.json").exists()
    assert len(pd.read_csv(out / "metrics.csv")) == len(METHODS)
    assert len(pd.read_csv(out / "predictions.csv")) == 60 * len(METHODS)
    standard = state.metrics["standard"]
    assert standard.ps_size == standard.covered_leaves


def test_threads_do_not_change_outputs(tmp_path):
    scores = _scores(tmp_path)
    run_pipeline(_cfg(tmp_path, scores, out="one", threads=1), command="evaluate")
    run_pipeline(_cfg(tmp_path, scores, out="two", threads=2), command="evaluate")
    for name in ("predictions.csv", "model.json", "metrics.csv"):
        assert (tmp_path / "one" / name).read_text() == (tmp_path / "two" / name).read_text()


def test_calibrate_then_predict(tmp_path):
    scores = _scores(tmp_path)
    run_pipeline(_cfg(tmp_path, scores), command="calibrate")
    model = tmp_path / "out" / "model.json"
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["model.json"]

    unlabelled = _scores(tmp_path, n=40, seed=1, labelled=False)
    state = run_pipeline(
        _cfg(tmp_path, unlabelled, out="pred", model_path=str(model)), command="predict"
    )
    assert state.summary["test_size"] == 40
    assert state.metrics == {}
    predictions = pd.read_csv(tmp_path / "pred" / "predictions.csv")
    assert len(predictions) == 40
    assert "true_leaf" not in predictions.columns
    assert not (tmp_path / "pred" / "metrics.json").exists()

    labelled = _scores(tmp_path, n=40, seed=1)
    state = run_pipeline(
        _cfg(tmp_path, labelled, out="pred2", model_path=str(model)), command="predict"
    )
    assert state.metrics["hcc"].n_test == 40


def test_predict_needs_matching_model_kind(tmp_path):
    scores = _scores(tmp_path)
    run_pipeline(_cfg(tmp_path, scores), command="calibrate")
    cfg = _cfg(
        tmp_path, scores, out="pred", model_path=str(tmp_path / "out" / "model.json"), method="hcc-crc"
    )
    with pytest.raises(ValueError, match="needs a crc model"):
        run_pipeline(cfg, command="predict")
    assert not (tmp_path / "pred").exists()


def test_sweep_beta_writes_table(tmp_path):
    state = run_pipeline(
        _cfg(tmp_path, _scores(tmp_path), betas=[0.0, 0.5, 1.0]), command="sweep-beta"
    )
    assert state.summary["betas"] == 3
    assert "spearman_ps_size" in state.summary
    sweep = pd.read_csv(tmp_path / "out" / "sweep.csv")
    assert sweep["beta"].tolist() == [0.0, 0.5, 1.0]
    assert sweep["ps_size"].is_monotonic_increasing
    trend = json.loads((tmp_path / "out" / "metrics.json").read_text())["trend"]
    assert trend["spearman_ps_size"] >= 0


def test_failed_run_writes_nothing(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("instance_id,true_leaf,omelette\nx,omelette,1.0\n")
    sink = MemoryEventSink()
    reporter = DummyReporter()
    with pytest.raises(ValueError, match="Missing leaf column"):
        run_pipeline(_cfg(tmp_path, bad), command="evaluate", reporter=reporter, event_sink=sink)
    assert not (tmp_path / "out").exists()
    assert reporter.finished is True
    assert reporter.summary is None
    failed = sink.events[-1]
    assert failed.event_type == EventType.RUN_FAILED
    assert failed.stage == "Scores"
    assert failed.error == "ScoreError"


def test_unexpected_errors_are_wrapped(tmp_path):
    sink = MemoryEventSink()
    state = PipelineState(cfg=RunConfigModel(output_path=str(tmp_path / "out")), command="evaluate")
    state.bundle.stage_text(tmp_path / "out" / "x.txt", "x")
    runner = PipelineRunner(event_sink=sink)
    with pytest.raises(PipelineAbortError, match="Stage 'Boom' failed"):
        runner.run([DummyFailJob()], state)
    assert len(state.bundle) == 0
    assert not (tmp_path / "out").exists()
    assert sink.events[-1].event_type == EventType.RUN_FAILED


def test_unknown_command():
    with pytest.raises(ValueError, match="Unknown pipeline command"):
        pipeline_jobs("train")


def test_exit_codes_and_error_records():
    assert exit_code_for(ValueError("x")) == EXIT_VALIDATION
    assert exit_code_for(PipelineAbortError("x")) == EXIT_RUNTIME
    record = error_record(ValueError("bad alpha"))
    assert record == {"error": {"kind": "validation", "type": "ValueError", "message": "bad alpha"}}
    assert error_record(PipelineAbortError("boom"))["error"]["kind"] == "runtime"

import logging
import uuid
from typing import Protocol

from .config import RunConfigModel
from .events import EventType, NullEventSink, PipelineEvent
from .jobs import JobBase, PipelineState, pipeline_jobs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class PipelineReporter(Protocol):
    def start(self, *, total: int, command: str) -> None: ...

    def finish(self) -> None: ...

    def add_stage(self, *, name: str, total: int) -> int: ...

    def advance_stage(self, task_id: int, *, advance: int = 1) -> None: ...

    def finish_stage(self, task_id: int, *, description: str) -> None: ...

    def emit_summary(self, summary: dict) -> None: ...


class NullReporter:
    def start(self, *, total, command):
        pass

    def finish(self):
        pass

    def add_stage(self, *, name, total):
        return 0

    def advance_stage(self, task_id, *, advance=1):
        pass

    def finish_stage(self, task_id, *, description):
        pass

    def emit_summary(self, summary):
        pass


class PipelineAbortError(RuntimeError):
    pass


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ValueError):
        return EXIT_VALIDATION
    return EXIT_RUNTIME


def error_record(exc: BaseException) -> dict:
    return {
        "error": {
            "kind": "validation" if isinstance(exc, ValueError) else "runtime",
            "type": type(exc).__name__,
            "message": str(exc),
        }
    }


class PipelineRunner:
    def __init__(self, *, reporter: PipelineReporter | None = None, event_sink=None):
        self.reporter = reporter or NullReporter()
        self.event_sink = event_sink or NullEventSink()
        self.run_id = str(uuid.uuid4())

    def _emit(self, event_type: EventType, **kwargs):
        event = PipelineEvent(event_type=event_type, run_id=self.run_id, **kwargs)
        logger.debug(
            "event: type=%s run_id=%s command=%s stage=%s msg=%s err=%s total=%s path=%s",
            event.event_type.value,
            event.run_id,
            event.command,
            event.stage,
            event.message,
            event.error,
            event.total,
            event.path,
        )
        self.event_sink.emit(event)

    def run(self, jobs: list[JobBase], state: PipelineState) -> PipelineState:
        for job in jobs:
            job.setup(state)
        total = sum(job.size for job in jobs)

        self.reporter.start(total=total, command=state.command)
        self._emit(EventType.RUN_STARTED, command=state.command, total=total)
        current = None
        try:
            for job in jobs:
                current = job.name
                self._emit(EventType.STAGE_STARTED, stage=job.name, total=job.size)
                task_id = self.reporter.add_stage(name=job.name, total=job.size)

                def callback(task_id=task_id):
                    self.reporter.advance_stage(task_id, advance=1)

                job.do(state, callback=callback)
                self.reporter.finish_stage(task_id, description=f"[bold green]{job.name} done")
                self._emit(EventType.STAGE_FINISHED, stage=job.name)

            current = "commit"
            for path in state.bundle.commit():
                self._emit(EventType.ARTIFACT_COMMITTED, path=str(path))
            self._emit(EventType.RUN_FINISHED, command=state.command)
        except (ValueError, RuntimeError) as exc:
            state.bundle.discard()
            self._emit(EventType.RUN_FAILED, stage=current, message=str(exc), error=type(exc).__name__)
            raise
        except KeyboardInterrupt as exc:
            state.bundle.discard()
            self._emit(EventType.RUN_FAILED, stage=current, message="Interrupted", error=str(exc))
            raise PipelineAbortError("Interrupted by user") from exc
        except Exception as exc:
            state.bundle.discard()
            self._emit(EventType.RUN_FAILED, stage=current, message=str(exc), error=type(exc).__name__)
            raise PipelineAbortError(f"Stage '{current}' failed: {exc}") from exc
        finally:
            self.reporter.finish()

        self.reporter.emit_summary(state.summary)
        self._emit(EventType.SUMMARY_EMITTED, command=state.command, data=dict(state.summary))
        return state


def run_pipeline(
    cfg: RunConfigModel,
    *,
    command: str = "evaluate",
    reporter: PipelineReporter | None = None,
    event_sink=None,
) -> PipelineState:
    state = PipelineState(cfg=cfg, command=command)
    runner = PipelineRunner(reporter=reporter, event_sink=event_sink)
    return runner.run(pipeline_jobs(command), state)

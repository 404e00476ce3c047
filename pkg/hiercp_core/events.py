from dataclasses import dataclass, field
from enum import Enum
import time
from typing import Any, Protocol


class EventType(str, Enum):
    RUN_STARTED = "run_started"
    RUN_FINISHED = "run_finished"
    RUN_FAILED = "run_failed"
    STAGE_STARTED = "stage_started"
    STAGE_FINISHED = "stage_finished"
    ARTIFACT_COMMITTED = "artifact_committed"
    SUMMARY_EMITTED = "summary_emitted"


@dataclass(frozen=True)
class PipelineEvent:
    event_type: EventType
    run_id: str
    ts: float = field(default_factory=time.time)
    message: str | None = None
    command: str | None = None
    stage: str | None = None
    total: int | None = None
    path: str | None = None
    error: str | None = None
    data: dict[str, Any] = field(default_factory=dict)


class EventSink(Protocol):
    def emit(self, event: PipelineEvent) -> None: ...


class NullEventSink:
    def emit(self, event: PipelineEvent) -> None:
        _ = event


class MemoryEventSink:
    def __init__(self):
        self.events: list[PipelineEvent] = []

    def emit(self, event: PipelineEvent) -> None:
        self.events.append(event)

    def types(self) -> list[EventType]:
        return [event.event_type for event in self.events]

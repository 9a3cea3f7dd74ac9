"""Transitions of the process configuration rewriting system."""

from dataclasses import dataclass
from enum import StrEnum

from sill_refine.domain.ast import Channel

# client of an observed root channel
ENV = Channel("@env")


class StepKind(StrEnum):
    FWD = "fwd"
    SPAWN = "spawn"
    DEFUNFOLD = "defunfold"
    CLOSE = "close"
    SEND_TENSOR = "send-tensor"
    SELECT = "select"
    SEND_LOLLI = "send-lolli"
    CASE_RECV = "case-recv"


COMMUNICATION = frozenset(
    {StepKind.CLOSE, StepKind.SEND_TENSOR, StepKind.SELECT, StepKind.SEND_LOLLI, StepKind.CASE_RECV}
)


@dataclass(frozen=True)
class StepEvent:
    """
    One rewriting step.

    For communication the subjects are the channel carrying the message and
    the client process on it; a forward lists the forwarder and its source; a
    spawn or unfolding lists the process that took the step. `fresh` is the
    channel the step allocated, if any.
    """

    kind: StepKind
    subjects: tuple[Channel, ...]
    label: str | None = None
    fresh: Channel | None = None

    @property
    def channel(self) -> Channel:
        return self.subjects[0]

    @property
    def observed(self) -> bool:
        return ENV in self.subjects

    def __str__(self) -> str:
        line = f"{self.kind} {','.join(str(s) for s in self.subjects)}"
        return f"{line} {self.label}" if self.label is not None else line

    def as_dict(self) -> dict[str, object]:
        return {
            "kind": str(self.kind),
            "subjects": [str(s) for s in self.subjects],
            "label": self.label,
            "fresh": str(self.fresh) if self.fresh is not None else None,
        }

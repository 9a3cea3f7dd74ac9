"""
Session fidelity monitor.

Each monitored channel carries the types it may still have. Intersections and
unions are read as alternatives; an observed message keeps the alternatives
that allow it, advanced past the message, and a message no alternative allows
is a violation.
"""

from collections.abc import Mapping

from sill_refine.domain.ast import (
    Channel,
    End,
    External,
    Internal,
    Join,
    Lolli,
    Meet,
    Name,
    SessionType,
    Signature,
    Tensor,
    unfold,
)
from sill_refine.domain.events import StepEvent, StepKind
from sill_refine.domain.subtype import TypeMultiset
from sill_refine.infrastructure.logging import get_logger

logger = get_logger(__name__)

Monitor = dict[Channel, TypeMultiset]


class FidelityViolation(Exception):
    """A channel carried a message that none of its types allows."""

    def __init__(self, channel: Channel, event: StepEvent, before: TypeMultiset):
        super().__init__(f"'{event}' on channel '{channel}' is not allowed by any of {before}")
        self.channel = channel
        self.event = event
        self.before = before


def alternatives(sig: Signature, types: TypeMultiset) -> list[SessionType]:
    """Structural types reachable by splitting intersections, unions and names."""
    found: dict[SessionType, None] = {}
    pending = list(types)
    while pending:
        ty = pending.pop()
        match ty:
            case Meet(left=a, right=b) | Join(left=a, right=b):
                pending.extend((b, a))
            case Name(id=name):
                pending.append(unfold(sig, name))
            case _:
                found[ty] = None
    return list(found)


def _advance(ty: SessionType, event: StepEvent) -> tuple[SessionType, SessionType | None] | None:
    """Continuation (and payload type) of `ty` after `event`, or None if `ty` forbids it."""
    match event.kind, ty:
        case StepKind.CLOSE, End():
            return ty, None
        case StepKind.SELECT, Internal() if event.label in ty.labels:
            return ty.branch(event.label), None
        case StepKind.CASE_RECV, External() if event.label in ty.labels:
            return ty.branch(event.label), None
        case StepKind.SEND_TENSOR, Tensor(left=a, right=b):
            return b, a
        case StepKind.SEND_LOLLI, Lolli(arg=a, cont=b):
            return b, a
    return None


def fidelity_update(sig: Signature, monitor: Mapping[Channel, TypeMultiset], event: StepEvent) -> Monitor:
    """Monitor after `event`; raises `FidelityViolation` if the event contradicts every type."""
    updated = dict(monitor)
    if event.kind is StepKind.FWD:
        forwarder, source = event.subjects
        carried = updated.pop(forwarder, None)
        if source not in updated and carried is not None:
            updated[source] = carried
        return updated
    if event.kind in (StepKind.SPAWN, StepKind.DEFUNFOLD) or event.channel not in updated:
        return updated

    before = updated[event.channel]
    continuations: list[SessionType] = []
    payloads: list[SessionType] = []
    for ty in alternatives(sig, before):
        stepped = _advance(ty, event)
        if stepped is None:
            continue
        continuations.append(stepped[0])
        if stepped[1] is not None:
            payloads.append(stepped[1])
    if not continuations:
        logger.warning("fidelity violation", channel=str(event.channel), step=str(event), types=str(before))
        raise FidelityViolation(event.channel, event, before)

    if event.kind is StepKind.CLOSE:
        del updated[event.channel]
    else:
        updated[event.channel] = TypeMultiset(tuple(dict.fromkeys(continuations)))
    if payloads and event.fresh is not None:
        updated[event.fresh] = TypeMultiset(tuple(dict.fromkeys(payloads)))
    return updated

"""
Unary and binary numerals as processes, and readers for what a run emits.

A unary numeral sends `succ` n times, then `zero`, then closes. A binary
numeral sends its bits least significant first as `zero`/`one`, then `eps`,
then closes; it is in standard form when its most significant bit is `one`.
"""

from collections.abc import Sequence

from sill_refine.domain.ast import (
    Channel,
    Close,
    Name,
    ProcessTerm,
    Select,
    SessionType,
    Signature,
)
from sill_refine.domain.runtime import END_TOKEN, Configuration
from sill_refine.infrastructure.parser import desugar_call

ROOT = Channel("c")

Argument = tuple[Channel, ProcessTerm, SessionType]


class MalformedObservationError(ValueError):
    """The labels seen on a channel do not spell a numeral."""


def _emit(labels: Sequence[str], offer: Channel) -> ProcessTerm:
    term: ProcessTerm = Close(offer)
    for label in reversed(labels):
        term = Select(offer, label, term)
    return term


def nat_labels(n: int) -> list[str]:
    if n < 0:
        raise ValueError(f"natural numbers are non-negative, got {n}")
    return ["succ"] * n + ["zero"]


def bits_labels(n: int) -> list[str]:
    if n < 0:
        raise ValueError(f"natural numbers are non-negative, got {n}")
    bits = []
    while n:
        bits.append("one" if n & 1 else "zero")
        n >>= 1
    return [*bits, "eps"]


def encode_nat(n: int, offer: Channel = ROOT) -> ProcessTerm:
    return _emit(nat_labels(n), offer)


def encode_bits(n: int, offer: Channel = ROOT) -> ProcessTerm:
    return _emit(bits_labels(n), offer)


def _closed(labels: Sequence[str]) -> list[str]:
    if not labels or labels[-1] != END_TOKEN:
        raise MalformedObservationError(f"channel did not close: {' '.join(labels)}")
    return list(labels[:-1])


def decode_nat(labels: Sequence[str]) -> int:
    body = _closed(labels)
    if not body or body[-1] != "zero" or any(label != "succ" for label in body[:-1]):
        raise MalformedObservationError(f"not a unary numeral: {' '.join(labels)}")
    return len(body) - 1


def decode_bits(labels: Sequence[str]) -> int:
    body = _closed(labels)
    if not body or body[-1] != "eps":
        raise MalformedObservationError(f"not a binary numeral: {' '.join(labels)}")
    value = 0
    for position, bit in enumerate(body[:-1]):
        if bit not in ("zero", "one"):
            raise MalformedObservationError(f"unexpected bit '{bit}'")
        value |= (bit == "one") << position
    return value


def is_standard_bits(labels: Sequence[str]) -> bool:
    """No leading zeros: the last bit before `eps`, if any, is `one`."""
    body = _closed(labels)
    return len(body) < 2 or body[-2] == "one"


def nat_argument(n: int, channel: Channel) -> Argument:
    return channel, encode_nat(n, channel), Name("Nat")


def bits_argument(n: int, channel: Channel) -> Argument:
    return channel, encode_bits(n, channel), Name("Std")


def apply_definition(
    sig: Signature,
    name: str,
    args: Sequence[Argument],
    result: SessionType,
    root: Channel = ROOT,
    checked: bool = True,
) -> Configuration:
    """
    Configuration running `name` applied to `args` on `root`, with every
    argument provided by its own process and `root` observed.
    """
    procs: dict[Channel, ProcessTerm] = {channel: term for channel, term, _ in args}
    interface = {channel: ty for channel, _, ty in args}
    procs[root] = desugar_call(name, [channel for channel, _, _ in args], root, tail=True)
    interface[root] = result
    return Configuration.build(sig, procs, interface, checked)

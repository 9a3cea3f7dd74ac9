"""
Core syntax trees for session types and processes.

Types and process terms are immutable dataclasses. Branch mappings are stored as
label-sorted tuples so equality and hashing ignore the order labels were written in.
"""

from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from functools import total_ordering


class UndefinedNameError(Exception):
    """Raised when a type or process name has no definition in the signature."""

    def __init__(self, name: str, kind: str = "type"):
        super().__init__(f"undefined {kind} name '{name}'")
        self.name = name
        self.kind = kind


@total_ordering
@dataclass(frozen=True)
class Channel:
    """A channel name; `gen` > 0 marks a generated name that source text cannot clash with."""

    name: str
    gen: int = 0

    def __str__(self) -> str:
        return self.name if self.gen == 0 else f"{self.name}#{self.gen}"

    def __lt__(self, other: "Channel") -> bool:
        return (self.name, self.gen) < (other.name, other.gen)


def fresh_channel(stem: Channel, avoid: Iterable[Channel]) -> Channel:
    """Return a channel named like `stem` whose generation is above everything in `avoid`."""
    top = max((c.gen for c in avoid), default=0)
    return Channel(stem.name, max(top, stem.gen) + 1)


# ---------------------------------------------------------------------------
# Session types
# ---------------------------------------------------------------------------


Branches = tuple[tuple[str, "SessionType"], ...]


def _sorted_branches(branches: Mapping[str, "SessionType"] | Iterable[tuple[str, "SessionType"]]) -> Branches:
    items = list(branches.items()) if isinstance(branches, Mapping) else list(branches)
    labels = [label for label, _ in items]
    if not items:
        raise ValueError("a choice needs at least one label")
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate labels in choice: {sorted(labels)}")
    return tuple(sorted(items, key=lambda item: item[0]))


@dataclass(frozen=True)
class End:
    """The terminated session `1`."""


END = End()


@dataclass(frozen=True)
class Tensor:
    left: "SessionType"
    right: "SessionType"


@dataclass(frozen=True)
class Lolli:
    arg: "SessionType"
    cont: "SessionType"


@dataclass(frozen=True)
class _Choice:
    branches: Branches

    def __post_init__(self) -> None:
        object.__setattr__(self, "branches", _sorted_branches(self.branches))

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(label for label, _ in self.branches)

    def branch(self, label: str) -> "SessionType":
        for key, ty in self.branches:
            if key == label:
                return ty
        raise KeyError(label)


@dataclass(frozen=True)
class Internal(_Choice):
    """Internal choice `+{l: A, ...}`: the provider sends the label."""

    @classmethod
    def of(cls, **branches: "SessionType") -> "Internal":
        return cls(tuple(branches.items()))


@dataclass(frozen=True)
class External(_Choice):
    """External choice `&{l: A, ...}`: the client sends the label."""

    @classmethod
    def of(cls, **branches: "SessionType") -> "External":
        return cls(tuple(branches.items()))


@dataclass(frozen=True)
class Meet:
    left: "SessionType"
    right: "SessionType"


@dataclass(frozen=True)
class Join:
    left: "SessionType"
    right: "SessionType"


@dataclass(frozen=True)
class Name:
    id: str


SessionType = End | Tensor | Lolli | Internal | External | Meet | Join | Name

STRUCTURAL = (End, Tensor, Lolli, Internal, External)


def is_structural(ty: SessionType) -> bool:
    return isinstance(ty, STRUCTURAL)


def type_names(ty: SessionType) -> Iterator[str]:
    """Yield every type name occurring in `ty`."""
    match ty:
        case Name(id=name):
            yield name
        case Tensor(left=a, right=b) | Meet(left=a, right=b) | Join(left=a, right=b):
            yield from type_names(a)
            yield from type_names(b)
        case Lolli(arg=a, cont=b):
            yield from type_names(a)
            yield from type_names(b)
        case Internal() | External():
            for _, branch in ty.branches:
                yield from type_names(branch)


# ---------------------------------------------------------------------------
# Process terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spawn:
    """Cut: `bound` is offered by `child` and used by `cont`."""

    bound: Channel
    annotation: SessionType | None
    child: "ProcessTerm"
    cont: "ProcessTerm"


@dataclass(frozen=True)
class Fwd:
    offer: Channel
    source: Channel


@dataclass(frozen=True)
class Close:
    ch: Channel


@dataclass(frozen=True)
class Wait:
    ch: Channel
    cont: "ProcessTerm"


@dataclass(frozen=True)
class SendFresh:
    """`send ch (bound <- payload); cont`; `bound` scopes over `payload` only."""

    ch: Channel
    bound: Channel
    payload: "ProcessTerm"
    cont: "ProcessTerm"


@dataclass(frozen=True)
class Recv:
    bound: Channel
    ch: Channel
    cont: "ProcessTerm"


@dataclass(frozen=True)
class Select:
    ch: Channel
    label: str
    cont: "ProcessTerm"


@dataclass(frozen=True)
class Case:
    ch: Channel
    branches: tuple[tuple[str, "ProcessTerm"], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "branches", _sorted_branches(self.branches))

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(label for label, _ in self.branches)

    def branch(self, label: str) -> "ProcessTerm":
        for key, term in self.branches:
            if key == label:
                return term
        raise KeyError(label)


@dataclass(frozen=True)
class Call:
    name: str


ProcessTerm = Spawn | Fwd | Close | Wait | SendFresh | Recv | Select | Case | Call


@dataclass(frozen=True)
class ProcDef:
    """`name :: (offer : declared) = body`."""

    name: str
    offer: Channel
    declared: SessionType
    body: ProcessTerm


@dataclass(frozen=True)
class Signature:
    """Mutually recursive type and process definitions."""

    typedefs: dict[str, SessionType] = field(default_factory=dict)
    procdefs: dict[str, ProcDef] = field(default_factory=dict)

    def declared_type(self, name: str) -> SessionType:
        try:
            return self.procdefs[name].declared
        except KeyError:
            raise UndefinedNameError(name, kind="process") from None


def unfold(sig: Signature, name: str) -> SessionType:
    """One-step unfolding of a type name."""
    try:
        return sig.typedefs[name]
    except KeyError:
        raise UndefinedNameError(name) from None


# ---------------------------------------------------------------------------
# Channels, substitution and erasure
# ---------------------------------------------------------------------------


def free_channels(term: ProcessTerm) -> frozenset[Channel]:
    match term:
        case Spawn(bound=x, child=child, cont=cont):
            return (free_channels(child) | free_channels(cont)) - {x}
        case Fwd(offer=c, source=d):
            return frozenset({c, d})
        case Close(ch=c):
            return frozenset({c})
        case Wait(ch=c, cont=cont) | Select(ch=c, cont=cont):
            return free_channels(cont) | {c}
        case SendFresh(ch=c, bound=x, payload=payload, cont=cont):
            return (free_channels(payload) - {x}) | free_channels(cont) | {c}
        case Recv(bound=x, ch=c, cont=cont):
            return (free_channels(cont) - {x}) | {c}
        case Case(ch=c, branches=branches):
            out: frozenset[Channel] = frozenset({c})
            for _, branch in branches:
                out |= free_channels(branch)
            return out
        case Call():
            return frozenset()
    raise TypeError(f"not a process term: {term!r}")


def all_channels(term: ProcessTerm) -> set[Channel]:
    """Free and bound channels of `term`."""
    match term:
        case Spawn(bound=x, child=child, cont=cont):
            return {x} | all_channels(child) | all_channels(cont)
        case SendFresh(ch=c, bound=x, payload=payload, cont=cont):
            return {c, x} | all_channels(payload) | all_channels(cont)
        case Recv(bound=x, ch=c, cont=cont):
            return {x, c} | all_channels(cont)
        case Wait(ch=c, cont=cont) | Select(ch=c, cont=cont):
            return {c} | all_channels(cont)
        case Case(ch=c, branches=branches):
            out = {c}
            for _, branch in branches:
                out |= all_channels(branch)
            return out
        case _:
            return set(free_channels(term))


def _under_binder(
    bound: Channel, scope: ProcessTerm, new: Channel, old: Channel
) -> tuple[Channel, ProcessTerm]:
    """Substitute inside the scope of `bound`, renaming it when it would capture `new`."""
    if bound == old:
        return bound, scope
    if bound == new and old in free_channels(scope):
        renamed = fresh_channel(bound, all_channels(scope) | {new, old})
        scope = subst_channel(scope, renamed, bound)
        return renamed, subst_channel(scope, new, old)
    return bound, subst_channel(scope, new, old)


def subst_channel(term: ProcessTerm, new: Channel, old: Channel) -> ProcessTerm:
    """Capture-avoiding substitution of `new` for the free occurrences of `old`."""
    if new == old:
        return term

    def swap(c: Channel) -> Channel:
        return new if c == old else c

    match term:
        case Spawn(bound=x, annotation=ann, child=child, cont=cont):
            if x == old:
                return term
            if x == new and old in free_channels(term):
                renamed = fresh_channel(x, all_channels(term) | {new, old})
                child = subst_channel(child, renamed, x)
                cont = subst_channel(cont, renamed, x)
                x = renamed
            return Spawn(x, ann, subst_channel(child, new, old), subst_channel(cont, new, old))
        case Fwd(offer=c, source=d):
            return Fwd(swap(c), swap(d))
        case Close(ch=c):
            return Close(swap(c))
        case Wait(ch=c, cont=cont):
            return Wait(swap(c), subst_channel(cont, new, old))
        case SendFresh(ch=c, bound=x, payload=payload, cont=cont):
            x, payload = _under_binder(x, payload, new, old)
            return SendFresh(swap(c), x, payload, subst_channel(cont, new, old))
        case Recv(bound=x, ch=c, cont=cont):
            x, cont = _under_binder(x, cont, new, old)
            return Recv(x, swap(c), cont)
        case Select(ch=c, label=label, cont=cont):
            return Select(swap(c), label, subst_channel(cont, new, old))
        case Case(ch=c, branches=branches):
            return Case(swap(c), tuple((label, subst_channel(b, new, old)) for label, b in branches))
        case Call():
            return term
    raise TypeError(f"not a process term: {term!r}")


def erase(term: ProcessTerm) -> ProcessTerm:
    """Remove every cut annotation."""
    match term:
        case Spawn(bound=x, child=child, cont=cont):
            return Spawn(x, None, erase(child), erase(cont))
        case Wait(ch=c, cont=cont):
            return Wait(c, erase(cont))
        case SendFresh(ch=c, bound=x, payload=payload, cont=cont):
            return SendFresh(c, x, erase(payload), erase(cont))
        case Recv(bound=x, ch=c, cont=cont):
            return Recv(x, c, erase(cont))
        case Select(ch=c, label=label, cont=cont):
            return Select(c, label, erase(cont))
        case Case(ch=c, branches=branches):
            return Case(c, tuple((label, erase(b)) for label, b in branches))
        case _:
            return term


def process_names(term: ProcessTerm) -> Iterator[str]:
    """Yield every definition name called in `term`."""
    match term:
        case Call(name=name):
            yield name
        case Spawn(child=child, cont=cont) | SendFresh(payload=child, cont=cont):
            yield from process_names(child)
            yield from process_names(cont)
        case Wait(cont=cont) | Recv(cont=cont) | Select(cont=cont):
            yield from process_names(cont)
        case Case(branches=branches):
            for _, branch in branches:
                yield from process_names(branch)


def annotations(term: ProcessTerm) -> Iterator[SessionType]:
    """Yield every cut annotation in `term`."""
    match term:
        case Spawn(annotation=ann, child=child, cont=cont):
            if ann is not None:
                yield ann
            yield from annotations(child)
            yield from annotations(cont)
        case SendFresh(payload=payload, cont=cont):
            yield from annotations(payload)
            yield from annotations(cont)
        case Wait(cont=cont) | Recv(cont=cont) | Select(cont=cont):
            yield from annotations(cont)
        case Case(branches=branches):
            for _, branch in branches:
                yield from annotations(branch)


# ---------------------------------------------------------------------------
# Alpha equivalence
# ---------------------------------------------------------------------------


def debruijn(term: ProcessTerm, scope: tuple[Channel, ...] = ()) -> tuple:
    """Nameless form of `term`: bound channels become binder depths, free ones stay named."""

    def ref(c: Channel) -> tuple:
        for depth, bound in enumerate(reversed(scope)):
            if bound == c:
                return ("bound", depth)
        return ("free", c.name, c.gen)

    match term:
        case Spawn(bound=x, annotation=ann, child=child, cont=cont):
            inner = (*scope, x)
            return ("spawn", ann, debruijn(child, inner), debruijn(cont, inner))
        case Fwd(offer=c, source=d):
            return ("fwd", ref(c), ref(d))
        case Close(ch=c):
            return ("close", ref(c))
        case Wait(ch=c, cont=cont):
            return ("wait", ref(c), debruijn(cont, scope))
        case SendFresh(ch=c, bound=x, payload=payload, cont=cont):
            return ("send", ref(c), debruijn(payload, (*scope, x)), debruijn(cont, scope))
        case Recv(bound=x, ch=c, cont=cont):
            return ("recv", ref(c), debruijn(cont, (*scope, x)))
        case Select(ch=c, label=label, cont=cont):
            return ("select", ref(c), label, debruijn(cont, scope))
        case Case(ch=c, branches=branches):
            return ("case", ref(c), tuple((label, debruijn(b, scope)) for label, b in branches))
        case Call(name=name):
            return ("call", name)
    raise TypeError(f"not a process term: {term!r}")


def alpha_equivalent(p: ProcessTerm, q: ProcessTerm) -> bool:
    return debruijn(p) == debruijn(q)

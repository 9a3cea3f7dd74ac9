"""
Coinductive subtyping over multisets of session types.

A judgment `delta <= theta` reads the left multiset as an intersection and the
right one as a union. Invertible rules (intersection, union, definition
unfolding) are applied eagerly by `saturate`; once every member is structural,
`structural_step` enumerates the applicable structural rules and `decide`
backtracks over them. A memo of previously seen pairs closes cycles.
"""

import itertools
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from functools import lru_cache

from sill_refine.domain.ast import (
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
from sill_refine.infrastructure.logging import get_logger
from sill_refine.infrastructure.printer import format_type

logger = get_logger(__name__)

MEMO_LIMIT = 100_000

_RANK = {End: 0, Tensor: 1, Lolli: 2, Internal: 3, External: 4, Meet: 5, Join: 6, Name: 7}


@lru_cache(maxsize=65536)
def type_key(ty: SessionType) -> tuple:
    """Total structural order on types."""
    rank = _RANK[type(ty)]
    match ty:
        case End():
            return (rank,)
        case Tensor(left=a, right=b) | Meet(left=a, right=b) | Join(left=a, right=b):
            return (rank, type_key(a), type_key(b))
        case Lolli(arg=a, cont=b):
            return (rank, type_key(a), type_key(b))
        case Internal() | External():
            return (rank, tuple((label, type_key(branch)) for label, branch in ty.branches))
        case Name(id=name):
            return (rank, name)
    raise TypeError(f"not a session type: {ty!r}")


@dataclass(frozen=True)
class TypeMultiset:
    """An unordered multiset of types, kept sorted so equal multisets compare equal."""

    items: tuple[SessionType, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(sorted(self.items, key=type_key)))

    @classmethod
    def of(cls, *types: SessionType) -> "TypeMultiset":
        return cls(types)

    def __iter__(self) -> Iterator[SessionType]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, ty: object) -> bool:
        return ty in self.items

    def key(self) -> tuple:
        return tuple(type_key(t) for t in self.items)

    def replace(self, index: int, *types: SessionType) -> "TypeMultiset":
        """Multiset with the member at `index` replaced by `types`."""
        return TypeMultiset(self.items[:index] + types + self.items[index + 1 :])

    def distinct(self) -> list[SessionType]:
        """Members without repetition, in canonical order."""
        return list(dict.fromkeys(self.items))

    def __str__(self) -> str:
        return "{" + ", ".join(format_type(t) for t in self.items) + "}"


Goal = tuple[TypeMultiset, TypeMultiset]


@dataclass
class MemoTable:
    """Previously seen comparisons, with a trail so failed branches can be undone."""

    seen: set[tuple[tuple, tuple]] = field(default_factory=set)
    trail: list[tuple[tuple, tuple]] = field(default_factory=list)
    peak: int = 0

    def __contains__(self, goal: Goal) -> bool:
        return (goal[0].key(), goal[1].key()) in self.seen

    def __len__(self) -> int:
        return len(self.seen)

    def add(self, goal: Goal) -> None:
        entry = (goal[0].key(), goal[1].key())
        if entry not in self.seen:
            self.seen.add(entry)
            self.trail.append(entry)
            self.peak = max(self.peak, len(self.seen))

    def mark(self) -> int:
        return len(self.trail)

    def rollback(self, mark: int) -> None:
        while len(self.trail) > mark:
            self.seen.discard(self.trail.pop())


class MemoOverflowError(Exception):
    """Raised when a query visits more distinct pairs than `MEMO_LIMIT`."""


# ---------------------------------------------------------------------------
# Invertible rules
# ---------------------------------------------------------------------------


def saturate_left(sig: Signature, ms: TypeMultiset) -> list[TypeMultiset]:
    """Saturate a conjunctive multiset: meets flatten, names unfold, joins branch."""
    return _saturate_side(sig, ms, flatten=Meet, branch=Join)


def saturate_right(sig: Signature, ms: TypeMultiset) -> list[TypeMultiset]:
    """Saturate a disjunctive multiset: joins flatten, names unfold, meets branch."""
    return _saturate_side(sig, ms, flatten=Join, branch=Meet)


def _saturate_side(sig: Signature, ms: TypeMultiset, flatten: type, branch: type) -> list[TypeMultiset]:
    done: list[TypeMultiset] = []
    pending = [ms]
    while pending:
        current = pending.pop()
        index, rewritten = _rewrite_once(sig, current, flatten)
        if rewritten is not None:
            pending.append(current.replace(index, *rewritten))
            continue
        for index, ty in enumerate(current.items):
            if isinstance(ty, branch):
                # pushed in reverse so the left component is explored first
                pending.append(current.replace(index, ty.right))
                pending.append(current.replace(index, ty.left))
                break
        else:
            done.append(current)
    return done


def _rewrite_once(sig: Signature, ms: TypeMultiset, flatten: type) -> tuple[int, tuple[SessionType, ...] | None]:
    for index, ty in enumerate(ms.items):
        if isinstance(ty, flatten):
            return index, (ty.left, ty.right)
        if isinstance(ty, Name):
            return index, (unfold(sig, ty.id),)
    return -1, None


def saturate(sig: Signature, delta: TypeMultiset, theta: TypeMultiset) -> list[Goal]:
    """Frontier of structural goals left after applying every invertible rule."""
    return [(d, t) for d in saturate_left(sig, delta) for t in saturate_right(sig, theta)]


# ---------------------------------------------------------------------------
# Structural rules
# ---------------------------------------------------------------------------


Premises = tuple[tuple[SessionType, SessionType], ...]


def structural_step(delta: TypeMultiset, theta: TypeMultiset) -> list[Premises]:
    """
    Every way to close a structural goal with one structural rule.

    Each candidate is the list of `(sub, super)` premises to prove. Choices may
    be covered member-wise: each label of a left internal choice is matched
    against some right internal choice offering it, and each label of a right
    external choice against some left external choice accepting it.
    """
    candidates: dict[Premises, None] = {}
    lefts, rights = delta.distinct(), theta.distinct()
    for left in lefts:
        for right in rights:
            match left, right:
                case End(), End():
                    candidates[()] = None
                case Tensor(), Tensor():
                    candidates[((left.left, right.left), (left.right, right.right))] = None
                case Lolli(), Lolli():
                    candidates[((right.arg, left.arg), (left.cont, right.cont))] = None
    for left in lefts:
        if isinstance(left, Internal):
            offers = [r for r in rights if isinstance(r, Internal)]
            for premises in _cover(left, offers, sub_first=True):
                candidates[premises] = None
    for right in rights:
        if isinstance(right, External):
            offers = [other for other in lefts if isinstance(other, External)]
            for premises in _cover(right, offers, sub_first=False):
                candidates[premises] = None
    return list(candidates)


def _cover(choice: Internal | External, others: list, sub_first: bool) -> Iterator[Premises]:
    """Assign each label of `choice` to one of `others` that has it."""
    per_label = []
    for label, ty in choice.branches:
        options = [other.branch(label) for other in others if label in other.labels]
        if not options:
            return
        per_label.append([(ty, option) if sub_first else (option, ty) for option in options])
    for combination in itertools.product(*per_label):
        yield tuple(combination)


# ---------------------------------------------------------------------------
# Decision procedure
# ---------------------------------------------------------------------------


def decide(sig: Signature, delta: TypeMultiset, theta: TypeMultiset, memo: MemoTable) -> bool:
    """Decide `delta <= theta`, treating a repeated pair as proven."""
    goal = (delta, theta)
    if goal in memo:
        return True
    if len(memo) >= MEMO_LIMIT:
        raise MemoOverflowError(f"subtyping query exceeded {MEMO_LIMIT} memo entries")
    memo.add(goal)
    return all(_close(sig, d, t, memo) for d, t in saturate(sig, delta, theta))


def _close(sig: Signature, delta: TypeMultiset, theta: TypeMultiset, memo: MemoTable) -> bool:
    for premises in structural_step(delta, theta):
        mark = memo.mark()
        if all(decide(sig, TypeMultiset.of(a), TypeMultiset.of(b), memo) for a, b in premises):
            return True
        memo.rollback(mark)
    return False


def subtype(sig: Signature, a: SessionType, b: SessionType) -> bool:
    """Decide `a <= b` with a fresh memo."""
    return decide_sets(sig, [a], [b])


def decide_sets(sig: Signature, delta: Iterable[SessionType], theta: Iterable[SessionType]) -> bool:
    memo = MemoTable()
    verdict = decide(sig, TypeMultiset(tuple(delta)), TypeMultiset(tuple(theta)), memo)
    logger.debug("subtyping decided", verdict=verdict, memo_size=len(memo), memo_peak=memo.peak)
    return verdict


def equivalent(sig: Signature, a: SessionType, b: SessionType) -> bool:
    return subtype(sig, a, b) and subtype(sig, b, a)


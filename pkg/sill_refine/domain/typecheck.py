"""
Algorithmic process typing over multiset contexts.

Every channel carries a multiset of types: conjunctive for the channels a
process uses and disjunctive for the channel it offers. Intersections on the
left, unions on the right and definition names are handled eagerly by the same
saturation as subtyping; the remaining structural rules pick one member of the
relevant multiset and backtrack on failure. Subtyping is consulted only when a
process forwards.
"""

import itertools
from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any, NoReturn

from sill_refine.domain.ast import (
    Call,
    Case,
    Channel,
    Close,
    End,
    External,
    Fwd,
    Internal,
    Lolli,
    ProcessTerm,
    Recv,
    Select,
    SendFresh,
    SessionType,
    Signature,
    Spawn,
    Tensor,
    Wait,
    fresh_channel,
    free_channels,
    subst_channel,
)
from sill_refine.domain.subtype import (
    MemoTable,
    TypeMultiset,
    decide,
    saturate_left,
    saturate_right,
)
from sill_refine.infrastructure.logging import get_logger
from sill_refine.infrastructure.printer import format_process

logger = get_logger(__name__)


@dataclass(frozen=True)
class ChannelContext:
    """Channels a process uses, each with the multiset of types it is known to have."""

    entries: Mapping[Channel, TypeMultiset] = field(default_factory=dict)

    @classmethod
    def of(cls, entries: Mapping[Channel, SessionType | TypeMultiset] | None = None) -> "ChannelContext":
        converted = {}
        for channel, types in (entries or {}).items():
            converted[channel] = types if isinstance(types, TypeMultiset) else TypeMultiset.of(types)
        return cls(converted)

    def __contains__(self, channel: object) -> bool:
        return channel in self.entries

    def __getitem__(self, channel: Channel) -> TypeMultiset:
        return self.entries[channel]

    def __iter__(self) -> Iterator[Channel]:
        return iter(sorted(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def with_entry(self, channel: Channel, types: TypeMultiset) -> "ChannelContext":
        return ChannelContext({**self.entries, channel: types})

    def without(self, *channels: Channel) -> "ChannelContext":
        return ChannelContext({c: t for c, t in self.entries.items() if c not in channels})

    def __str__(self) -> str:
        if not self.entries:
            return "."
        return ", ".join(f"{c} : {self.entries[c]}" for c in self)


class SessionTypeError(Exception):
    """
    A process does not have the type it is checked against.

    `judgment` is the failing sub-judgment in printed form, `candidates` the
    structural types that were tried for it and `causes` the failures of those
    attempts.
    """

    def __init__(
        self,
        message: str,
        judgment: str = "",
        term: ProcessTerm | None = None,
        candidates: Iterable[SessionType] = (),
        causes: Iterable["SessionTypeError"] = (),
    ):
        super().__init__(message)
        self.message = message
        self.judgment = judgment
        self.term = term
        self.candidates = list(candidates)
        self.causes = list(causes)

    def explain(self, depth: int = 0, limit: int = 6) -> list[str]:
        """Indented failure tree, cut off below `limit` levels."""
        lines = ["  " * depth + self.message]
        if self.judgment:
            lines.append("  " * depth + f"  in {self.judgment}")
        if depth + 1 < limit:
            for cause in self.causes:
                lines.extend(cause.explain(depth + 1, limit))
        return lines


class LinearityError(SessionTypeError):
    """A channel is used by no sub-process or by more than one."""


def judgment(ctx: ChannelContext, term: ProcessTerm, offer: Channel, theta: TypeMultiset) -> str:
    text = format_process(term)
    if len(text) > 60:
        text = text[:57] + "..."
    return f"{ctx} |- {text} :: ({offer} : {theta})"


def split_context(
    ctx: ChannelContext, needed: Iterable[Channel], needed_by_rest: Iterable[Channel]
) -> tuple[ChannelContext, ChannelContext]:
    """
    Divide `ctx` between a sub-process needing `needed` and the rest of the
    process needing `needed_by_rest`. Every channel goes to exactly one side.
    """
    needed, needed_by_rest = set(needed), set(needed_by_rest)
    left: dict[Channel, TypeMultiset] = {}
    right: dict[Channel, TypeMultiset] = {}
    for channel in ctx:
        if channel in needed and channel in needed_by_rest:
            raise LinearityError(f"channel '{channel}' is used by two processes")
        if channel in needed:
            left[channel] = ctx[channel]
        elif channel in needed_by_rest:
            right[channel] = ctx[channel]
        else:
            raise LinearityError(f"channel '{channel}' is never used")
    return ChannelContext(left), ChannelContext(right)


def check(
    sig: Signature,
    ctx: ChannelContext | Mapping[Channel, SessionType | TypeMultiset],
    term: ProcessTerm,
    offer: Channel,
    theta: TypeMultiset | SessionType,
) -> None:
    """Check `ctx |- term :: (offer : theta)`, raising `SessionTypeError` on failure."""
    if not isinstance(ctx, ChannelContext):
        ctx = ChannelContext.of(ctx)
    if not isinstance(theta, TypeMultiset):
        theta = TypeMultiset.of(theta)
    if offer in ctx:
        raise LinearityError(
            f"offered channel '{offer}' also appears in the context", judgment(ctx, term, offer, theta), term
        )
    _Checker(sig).check(ctx, term, offer, theta)
    logger.debug("process checked", offer=str(offer), theta=str(theta), context=str(ctx))


def accepts(
    sig: Signature,
    ctx: ChannelContext | Mapping[Channel, SessionType | TypeMultiset],
    term: ProcessTerm,
    offer: Channel,
    theta: TypeMultiset | SessionType,
) -> bool:
    try:
        check(sig, ctx, term, offer, theta)
    except SessionTypeError:
        return False
    return True


class _Checker:
    def __init__(self, sig: Signature):
        self.sig = sig

    # -- invertible phase ---------------------------------------------------

    def check(self, ctx: ChannelContext, term: ProcessTerm, offer: Channel, theta: TypeMultiset) -> None:
        channels = list(ctx)
        left_options = [saturate_left(self.sig, ctx[c]) for c in channels]
        right_options = saturate_right(self.sig, theta)
        for choice in itertools.product(*left_options):
            saturated = ChannelContext(dict(zip(channels, choice, strict=True)))
            for goal in right_options:
                self.dispatch(saturated, term, offer, goal)

    # -- structural phase ---------------------------------------------------

    def dispatch(self, ctx: ChannelContext, term: ProcessTerm, offer: Channel, theta: TypeMultiset) -> None:
        match term:
            case Fwd():
                self.forward(ctx, term, offer, theta)
            case Spawn():
                self.spawn(ctx, term, offer, theta)
            case Close(ch=c):
                if c != offer:
                    self.fail(f"'close {c}' must close the offered channel '{offer}'", ctx, term, offer, theta)
                if len(ctx):
                    raise LinearityError(
                        f"channels {', '.join(str(d) for d in ctx)} are still open at 'close {c}'",
                        judgment(ctx, term, offer, theta),
                        term,
                    )
                if not any(isinstance(t, End) for t in theta):
                    self.fail(f"'{offer}' is not allowed to close here", ctx, term, offer, theta, theta.distinct())
            case Wait(ch=c, cont=cont):
                types = self.used(ctx, c, term, offer, theta)
                if not any(isinstance(t, End) for t in types):
                    self.fail(f"'{c}' is not known to close", ctx, term, offer, theta, types.distinct())
                self.check(ctx.without(c), cont, offer, theta)
            case SendFresh(ch=c) if c == offer:
                self.tensor_right(ctx, term, offer, theta)
            case SendFresh():
                self.lolli_left(ctx, term, offer, theta)
            case Recv(ch=c) if c == offer:
                self.lolli_right(ctx, term, offer, theta)
            case Recv():
                self.tensor_left(ctx, term, offer, theta)
            case Select(ch=c) if c == offer:
                self.internal_right(ctx, term, offer, theta)
            case Select():
                self.external_left(ctx, term, offer, theta)
            case Case(ch=c) if c == offer:
                self.external_right(ctx, term, offer, theta)
            case Case():
                self.internal_left(ctx, term, offer, theta)
            case Call(name=name):
                self.call(ctx, term, name, offer, theta)
            case _:
                raise TypeError(f"not a process term: {term!r}")

    def forward(self, ctx: ChannelContext, term: Fwd, offer: Channel, theta: TypeMultiset) -> None:
        if term.offer != offer:
            self.fail(f"'{term.offer} <- {term.source}' must forward to the offered channel '{offer}'", ctx, term, offer, theta)
        if set(ctx) != {term.source}:
            raise LinearityError(
                f"a forward from '{term.source}' must be the only use of the context",
                judgment(ctx, term, offer, theta),
                term,
            )
        delta = ctx[term.source]
        if not decide(self.sig, delta, theta, MemoTable()):
            self.fail(f"{delta} is not a subtype of {theta}", ctx, term, offer, theta)

    def spawn(self, ctx: ChannelContext, term: Spawn, offer: Channel, theta: TypeMultiset) -> None:
        annotation = term.annotation
        if annotation is None:
            if not isinstance(term.child, Call):
                self.fail(f"cut on '{term.bound}' needs a type annotation", ctx, term, offer, theta)
            annotation = self.sig.declared_type(term.child.name)
        bound, child, cont = term.bound, term.child, term.cont
        if bound in ctx or bound == offer:
            renamed = fresh_channel(bound, [*ctx, offer, *free_channels(child), *free_channels(cont)])
            child, cont = subst_channel(child, renamed, bound), subst_channel(cont, renamed, bound)
            bound = renamed
        mine, rest = self.split(ctx, free_channels(child) - {bound}, free_channels(cont) - {bound, offer}, term, offer, theta)
        self.check(mine, child, bound, TypeMultiset.of(annotation))
        self.check(rest.with_entry(bound, TypeMultiset.of(annotation)), cont, offer, theta)

    def call(self, ctx: ChannelContext, term: Call, name: str, offer: Channel, theta: TypeMultiset) -> None:
        if len(ctx):
            raise LinearityError(
                f"'{name}' is closed but channels {', '.join(str(d) for d in ctx)} are still open",
                judgment(ctx, term, offer, theta),
                term,
            )
        declared = TypeMultiset.of(self.sig.declared_type(name))
        if declared.items[0] not in theta and not decide(self.sig, declared, theta, MemoTable()):
            self.fail(f"'{name}' has type {declared}, which is not a subtype of {theta}", ctx, term, offer, theta)

    # -- right rules --------------------------------------------------------

    def tensor_right(self, ctx: ChannelContext, term: SendFresh, offer: Channel, theta: TypeMultiset) -> None:
        mine, rest = self.split(
            ctx, free_channels(term.payload) - {term.bound}, free_channels(term.cont) - {offer}, term, offer, theta
        )

        def attempt(ty: Tensor) -> None:
            self.check(mine, term.payload, term.bound, TypeMultiset.of(ty.left))
            self.check(rest, term.cont, offer, TypeMultiset.of(ty.right))

        self.backtrack([t for t in theta.distinct() if isinstance(t, Tensor)], attempt, "send", ctx, term, offer, theta)

    def lolli_right(self, ctx: ChannelContext, term: Recv, offer: Channel, theta: TypeMultiset) -> None:
        bound, cont = self.binder(term.bound, term.cont, [*ctx, offer])

        def attempt(ty: Lolli) -> None:
            self.check(ctx.with_entry(bound, TypeMultiset.of(ty.arg)), cont, offer, TypeMultiset.of(ty.cont))

        self.backtrack([t for t in theta.distinct() if isinstance(t, Lolli)], attempt, "receive", ctx, term, offer, theta)

    def internal_right(self, ctx: ChannelContext, term: Select, offer: Channel, theta: TypeMultiset) -> None:
        options = [t for t in theta.distinct() if isinstance(t, Internal) and term.label in t.labels]

        def attempt(ty: Internal) -> None:
            self.check(ctx, term.cont, offer, TypeMultiset.of(ty.branch(term.label)))

        self.backtrack(options, attempt, f"send label '{term.label}'", ctx, term, offer, theta)

    def external_right(self, ctx: ChannelContext, term: Case, offer: Channel, theta: TypeMultiset) -> None:
        options = [t for t in theta.distinct() if isinstance(t, External) and t.labels <= term.labels]

        def attempt(ty: External) -> None:
            for label, branch in ty.branches:
                self.check(ctx, term.branch(label), offer, TypeMultiset.of(branch))

        self.backtrack(options, attempt, f"offer labels {sorted(term.labels)}", ctx, term, offer, theta)

    # -- left rules ---------------------------------------------------------

    def tensor_left(self, ctx: ChannelContext, term: Recv, offer: Channel, theta: TypeMultiset) -> None:
        types = self.used(ctx, term.ch, term, offer, theta)
        bound, cont = self.binder(term.bound, term.cont, [*ctx, offer])

        def attempt(ty: Tensor) -> None:
            extended = ctx.with_entry(term.ch, TypeMultiset.of(ty.right)).with_entry(bound, TypeMultiset.of(ty.left))
            self.check(extended, cont, offer, theta)

        options = [t for t in types.distinct() if isinstance(t, Tensor)]
        self.backtrack(options, attempt, f"receive on '{term.ch}'", ctx, term, offer, theta)

    def lolli_left(self, ctx: ChannelContext, term: SendFresh, offer: Channel, theta: TypeMultiset) -> None:
        types = self.used(ctx, term.ch, term, offer, theta)
        mine, rest = self.split(
            ctx.without(term.ch),
            free_channels(term.payload) - {term.bound},
            free_channels(term.cont) - {offer, term.ch},
            term,
            offer,
            theta,
        )

        def attempt(ty: Lolli) -> None:
            self.check(mine, term.payload, term.bound, TypeMultiset.of(ty.arg))
            self.check(rest.with_entry(term.ch, TypeMultiset.of(ty.cont)), term.cont, offer, theta)

        options = [t for t in types.distinct() if isinstance(t, Lolli)]
        self.backtrack(options, attempt, f"send on '{term.ch}'", ctx, term, offer, theta)

    def external_left(self, ctx: ChannelContext, term: Select, offer: Channel, theta: TypeMultiset) -> None:
        types = self.used(ctx, term.ch, term, offer, theta)
        options = [t for t in types.distinct() if isinstance(t, External) and term.label in t.labels]

        def attempt(ty: External) -> None:
            self.check(ctx.with_entry(term.ch, TypeMultiset.of(ty.branch(term.label))), term.cont, offer, theta)

        self.backtrack(options, attempt, f"send label '{term.label}' on '{term.ch}'", ctx, term, offer, theta)

    def internal_left(self, ctx: ChannelContext, term: Case, offer: Channel, theta: TypeMultiset) -> None:
        types = self.used(ctx, term.ch, term, offer, theta)
        options = [t for t in types.distinct() if isinstance(t, Internal) and t.labels <= term.labels]

        def attempt(ty: Internal) -> None:
            for label, branch in ty.branches:
                self.check(ctx.with_entry(term.ch, TypeMultiset.of(branch)), term.branch(label), offer, theta)

        self.backtrack(options, attempt, f"branch on '{term.ch}'", ctx, term, offer, theta)

    # -- helpers ------------------------------------------------------------

    def used(
        self, ctx: ChannelContext, channel: Channel, term: ProcessTerm, offer: Channel, theta: TypeMultiset
    ) -> TypeMultiset:
        if channel not in ctx:
            self.fail(f"channel '{channel}' is not available here", ctx, term, offer, theta)
        return ctx[channel]

    def binder(self, bound: Channel, scope: ProcessTerm, taken: list[Channel]) -> tuple[Channel, ProcessTerm]:
        if bound not in taken:
            return bound, scope
        renamed = fresh_channel(bound, [*taken, *free_channels(scope)])
        return renamed, subst_channel(scope, renamed, bound)

    def split(
        self,
        ctx: ChannelContext,
        needed: Iterable[Channel],
        needed_by_rest: Iterable[Channel],
        term: ProcessTerm,
        offer: Channel,
        theta: TypeMultiset,
    ) -> tuple[ChannelContext, ChannelContext]:
        try:
            return split_context(ctx, needed, needed_by_rest)
        except LinearityError as exc:
            raise LinearityError(exc.message, judgment(ctx, term, offer, theta), term) from None

    def backtrack(
        self,
        options: list[Any],
        attempt: Callable[[Any], None],
        action: str,
        ctx: ChannelContext,
        term: ProcessTerm,
        offer: Channel,
        theta: TypeMultiset,
    ) -> None:
        if not options:
            self.fail(f"no type allows the process to {action}", ctx, term, offer, theta)
        causes = []
        for option in options:
            try:
                attempt(option)
                return
            except SessionTypeError as exc:
                causes.append(exc)
        raise SessionTypeError(
            f"every candidate type failed when the process tried to {action}",
            judgment(ctx, term, offer, theta),
            term,
            options,
            causes,
        )

    def fail(
        self,
        message: str,
        ctx: ChannelContext,
        term: ProcessTerm,
        offer: Channel,
        theta: TypeMultiset,
        candidates: Iterable[SessionType] = (),
    ) -> NoReturn:
        raise SessionTypeError(message, judgment(ctx, term, offer, theta), term, candidates)

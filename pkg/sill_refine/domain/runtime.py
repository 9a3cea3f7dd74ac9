"""
Execution of process configurations.

A configuration is a set of processes, each labelled by the channel it
offers. Processes are rewritten one step at a time by a seeded scheduler that
picks uniformly among the enabled steps. Communication is synchronous: a
message moves only when both the provider and the client of a channel are
ready. Root channels can be observed by the environment, which accepts labels
and the final close so a run's result can be read off its trace.
"""

import random
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from enum import StrEnum

import networkx as nx

from sill_refine.domain.ast import (
    Call,
    Case,
    Channel,
    Close,
    Fwd,
    ProcessTerm,
    Recv,
    Select,
    SendFresh,
    SessionType,
    Signature,
    Spawn,
    Wait,
    all_channels,
    free_channels,
    subst_channel,
)
from sill_refine.domain.events import ENV, StepEvent, StepKind
from sill_refine.domain.fidelity import fidelity_update
from sill_refine.domain.subtype import TypeMultiset
from sill_refine.domain.typecheck import SessionTypeError, check
from sill_refine.infrastructure.logging import get_logger

logger = get_logger(__name__)

DEFAULT_FUEL = 1_000_000
DEFAULT_SEED = 0

END_TOKEN = "end"


class ConfigurationError(Exception):
    """An initial configuration is not a well-formed, well-typed forest."""


class CyclicDependencyError(ConfigurationError):
    def __init__(self, cycle: list[Channel]):
        path = " -> ".join(str(c) for c in [*cycle, cycle[0]])
        super().__init__(f"processes depend on each other in a cycle: {path}")
        self.cycle = cycle


class UnclaimedChannelError(ConfigurationError):
    def __init__(self, channel: Channel, user: Channel):
        super().__init__(f"process '{user}' uses channel '{channel}', which no process offers")
        self.channel = channel
        self.user = user


class ConfigurationTypeError(ConfigurationError):
    def __init__(self, channel: Channel, cause: Exception):
        super().__init__(f"process offering '{channel}' is ill-typed: {cause}")
        self.channel = channel
        self.cause = cause


def _uses(channel: Channel, term: ProcessTerm) -> frozenset[Channel]:
    return free_channels(term) - {channel}


def config_check(
    sig: Signature, procs: Mapping[Channel, ProcessTerm], interface: Mapping[Channel, SessionType]
) -> None:
    """
    Check that `procs` forms a forest in which every process has its
    interface type, given the interface types of the channels it uses.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(procs)
    clients: dict[Channel, Channel] = {}
    for channel, term in procs.items():
        for used in _uses(channel, term):
            if used not in procs:
                raise UnclaimedChannelError(used, channel)
            if used in clients:
                raise ConfigurationError(f"channel '{used}' is used by both '{clients[used]}' and '{channel}'")
            clients[used] = channel
            graph.add_edge(channel, used)
    if not nx.is_directed_acyclic_graph(graph):
        raise CyclicDependencyError([edge[0] for edge in nx.find_cycle(graph)])

    for channel, term in procs.items():
        if channel not in interface:
            raise ConfigurationError(f"no interface type for channel '{channel}'")
        context = {}
        for used in _uses(channel, term):
            if used not in interface:
                raise ConfigurationError(f"no interface type for channel '{used}'")
            context[used] = interface[used]
        try:
            check(sig, context, term, channel, interface[channel])
        except SessionTypeError as exc:
            raise ConfigurationTypeError(channel, exc) from exc


def poised(term: ProcessTerm, offer: Channel) -> bool:
    """Whether `term` is waiting to communicate with its client along `offer`."""
    match term:
        case Close(ch=c) | SendFresh(ch=c) | Select(ch=c) | Case(ch=c) | Recv(ch=c):
            return c == offer
    return False


def _head(term: ProcessTerm) -> Channel | None:
    """Channel the next communication of `term` happens on."""
    match term:
        case Close(ch=c) | Wait(ch=c) | SendFresh(ch=c) | Select(ch=c) | Case(ch=c) | Recv(ch=c):
            return c
    return None


@dataclass
class Configuration:
    """
    Processes keyed by the channel they offer, together with the fidelity
    monitor and the observed root channels (current name to original root).
    """

    sig: Signature
    procs: dict[Channel, ProcessTerm]
    monitor: dict[Channel, TypeMultiset] = field(default_factory=dict)
    observed: dict[Channel, Channel] = field(default_factory=dict)
    fresh: int = 0
    last: StepEvent | None = None

    def __post_init__(self) -> None:
        if self.fresh:
            return
        gens = [c.gen for term in self.procs.values() for c in all_channels(term)]
        gens.extend(c.gen for c in self.procs)
        self.fresh = max(gens, default=0) + 1

    @classmethod
    def build(
        cls,
        sig: Signature,
        procs: Mapping[Channel, ProcessTerm],
        interface: Mapping[Channel, SessionType],
        checked: bool = True,
        observe: bool = True,
    ) -> "Configuration":
        """Check `procs` against `interface` and monitor every channel from it."""
        if checked:
            config_check(sig, procs, interface)
        config = cls(sig, dict(procs))
        config.monitor = {c: TypeMultiset.of(t) for c, t in interface.items() if c in procs}
        if observe:
            config.observed = {root: root for root in config.roots()}
        return config

    @classmethod
    def for_entry(cls, sig: Signature, name: str, checked: bool = True) -> "Configuration":
        """A configuration running the closed definition `name` on its own offered channel."""
        definition = sig.procdefs[name]
        return cls.build(sig, {definition.offer: Call(name)}, {definition.offer: definition.declared}, checked)

    def roots(self) -> list[Channel]:
        used = {u for c, term in self.procs.items() for u in _uses(c, term)}
        return sorted(c for c in self.procs if c not in used)

    def allocate(self, stem: Channel) -> Channel:
        channel = Channel(stem.name, self.fresh)
        self.fresh += 1
        return channel

    def copy(self) -> "Configuration":
        return Configuration(self.sig, dict(self.procs), dict(self.monitor), dict(self.observed), self.fresh)


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------


def enabled(config: Configuration) -> list[StepEvent]:
    """Every step the configuration can take, in a deterministic order."""
    clients: dict[Channel, tuple[Channel, ProcessTerm]] = {}
    for channel, term in config.procs.items():
        head = _head(term)
        if head is not None and head != channel:
            clients[head] = (channel, term)

    events = []
    for channel in sorted(config.procs):
        events.extend(_steps_of(config, channel, config.procs[channel], clients))
    return events


def _steps_of(
    config: Configuration,
    channel: Channel,
    term: ProcessTerm,
    clients: Mapping[Channel, tuple[Channel, ProcessTerm]],
) -> Iterator[StepEvent]:
    match term:
        case Fwd(source=d):
            yield StepEvent(StepKind.FWD, (channel, d))
            return
        case Spawn():
            yield StepEvent(StepKind.SPAWN, (channel,))
            return
        case Call(name=name):
            yield StepEvent(StepKind.DEFUNFOLD, (channel,), name)
            return

    head = _head(term)
    if head is None:
        return
    if head == channel:
        client = clients.get(channel)
        partner = client[1] if client is not None else None
        match term, partner:
            case Close(), Wait():
                yield StepEvent(StepKind.CLOSE, (channel, client[0]))
            case Close(), None if channel in config.observed:
                yield StepEvent(StepKind.CLOSE, (channel, ENV), END_TOKEN)
            case Select(label=label), Case() if label in partner.labels:
                yield StepEvent(StepKind.SELECT, (channel, client[0]), label)
            case Select(label=label), None if channel in config.observed:
                yield StepEvent(StepKind.SELECT, (channel, ENV), label)
            case SendFresh(), Recv():
                yield StepEvent(StepKind.SEND_TENSOR, (channel, client[0]))
        return

    # client side of a used channel; the provider must be ready on it
    provider = config.procs.get(head)
    match term, provider:
        case SendFresh(), Recv(ch=c) if c == head:
            yield StepEvent(StepKind.SEND_LOLLI, (head, channel))
        case Select(label=label), Case(ch=c) if c == head and label in provider.labels:
            yield StepEvent(StepKind.CASE_RECV, (head, channel), label)


def step(config: Configuration, event: StepEvent) -> Configuration:
    """
    Apply `event`, which must be enabled, returning the next configuration.
    Raises `FidelityViolation` if the step contradicts a monitored type.
    """
    after = config.copy()
    procs = after.procs
    match event.kind:
        case StepKind.FWD:
            forwarder, source = event.subjects
            del procs[forwarder]
            for channel, term in procs.items():
                procs[channel] = subst_channel(term, source, forwarder)
            if forwarder in after.observed:
                after.observed[source] = after.observed.pop(forwarder)
        case StepKind.SPAWN:
            (channel,) = event.subjects
            spawn = procs[channel]
            assert isinstance(spawn, Spawn)
            fresh = after.allocate(spawn.bound)
            procs[fresh] = subst_channel(spawn.child, fresh, spawn.bound)
            procs[channel] = subst_channel(spawn.cont, fresh, spawn.bound)
            annotation = spawn.annotation
            if annotation is None and isinstance(spawn.child, Call):
                annotation = config.sig.declared_type(spawn.child.name)
            if annotation is not None:
                after.monitor[fresh] = TypeMultiset.of(annotation)
            event = StepEvent(event.kind, event.subjects, event.label, fresh)
        case StepKind.DEFUNFOLD:
            (channel,) = event.subjects
            definition = config.sig.procdefs[event.label]
            procs[channel] = subst_channel(definition.body, channel, definition.offer)
        case StepKind.CLOSE:
            channel, client = event.subjects
            del procs[channel]
            if client == ENV:
                after.observed.pop(channel, None)
            else:
                wait = procs[client]
                assert isinstance(wait, Wait)
                procs[client] = wait.cont
        case StepKind.SELECT | StepKind.CASE_RECV:
            channel, client = event.subjects
            sender, receiver = (channel, client) if event.kind is StepKind.SELECT else (client, channel)
            select = procs[sender]
            assert isinstance(select, Select)
            procs[sender] = select.cont
            if receiver != ENV:
                case = procs[receiver]
                assert isinstance(case, Case)
                procs[receiver] = case.branch(select.label)
        case StepKind.SEND_TENSOR | StepKind.SEND_LOLLI:
            channel, client = event.subjects
            sender, receiver = (channel, client) if event.kind is StepKind.SEND_TENSOR else (client, channel)
            send, recv = procs[sender], procs[receiver]
            assert isinstance(send, SendFresh) and isinstance(recv, Recv)
            fresh = after.allocate(send.bound)
            procs[fresh] = subst_channel(send.payload, fresh, send.bound)
            procs[sender] = send.cont
            procs[receiver] = subst_channel(recv.cont, fresh, recv.bound)
            event = StepEvent(event.kind, event.subjects, event.label, fresh)
    after.monitor = fidelity_update(config.sig, after.monitor, event)
    after.last = event
    return after


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


class Outcome(StrEnum):
    POISED = "poised"
    DEADLOCK = "deadlock"
    FUEL_EXHAUSTED = "fuel-exhausted"


@dataclass
class RunResult:
    outcome: Outcome
    trace: list[StepEvent]
    final: Configuration
    observations: dict[Channel, list[str]] = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.trace)

    def labels(self, root: Channel | None = None) -> list[str]:
        """What the environment saw on `root` (the only root when omitted)."""
        if root is None:
            (root,) = self.observations
        return self.observations[root]


def run(config: Configuration, seed: int = DEFAULT_SEED, fuel: int = DEFAULT_FUEL) -> RunResult:
    """
    Step `config` until nothing is enabled or `fuel` steps have been taken.
    Raises `FidelityViolation` as soon as a monitored channel misbehaves.
    """
    rng = random.Random(seed)
    observations: dict[Channel, list[str]] = {root: [] for root in config.observed.values()}
    trace: list[StepEvent] = []
    while True:
        events = enabled(config)
        if not events:
            stuck = [c for c, term in config.procs.items() if not poised(term, c)]
            outcome = Outcome.DEADLOCK if stuck else Outcome.POISED
            if stuck:
                logger.warning("run deadlocked", stuck=[str(c) for c in sorted(stuck)], steps=len(trace))
            break
        if len(trace) >= fuel:
            outcome = Outcome.FUEL_EXHAUSTED
            break
        event = events[rng.randrange(len(events))]
        root = config.observed.get(event.channel) if event.observed else None
        config = step(config, event)
        assert config.last is not None
        trace.append(config.last)
        if root is not None:
            observations[root].append(event.label)
    logger.info("run finished", outcome=str(outcome), steps=len(trace), seed=seed)
    return RunResult(outcome, trace, config, observations)


def format_trace(trace: list[StepEvent]) -> str:
    return "".join(f"{event}\n" for event in trace)

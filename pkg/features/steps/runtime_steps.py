"""
Behave step definitions for configurations, scheduling and the fidelity monitor.
"""

import random

import networkx as nx
from behave import given, then, when

from sill_refine.domain import runtime
from sill_refine.domain.ast import Channel, Name, alpha_equivalent, free_channels
from sill_refine.domain.events import ENV, StepEvent, StepKind
from sill_refine.domain.fidelity import FidelityViolation, fidelity_update
from sill_refine.domain.numerals import (
    MalformedObservationError,
    apply_definition,
    bits_argument,
    bits_labels,
    decode_bits,
    decode_nat,
    encode_nat,
    is_standard_bits,
    nat_argument,
)
from sill_refine.domain.runtime import DEFAULT_FUEL, Configuration, Outcome, config_check, enabled, poised, run, step
from sill_refine.domain.subtype import TypeMultiset
from sill_refine.infrastructure.parser import parse_process, parse_type
from sill_refine.infrastructure.printer import format_process

ENTRY_POINTS = ("main_z", "main_double3", "main_inc7", "main_disp")


def _channel(text):
    name, _, gen = text.partition("#")
    return Channel(name, int(gen) if gen else 0)


# Configurations

@given("the configuration")
def step_configuration(context):
    context.procs = {}
    context.interface = {}
    for row in context.table:
        channel = _channel(row["channel"])
        context.procs[channel] = parse_process(row["process"], context.sig)
        context.interface[channel] = parse_type(row["type"])


@given("an empty configuration")
def step_empty_configuration(context):
    context.procs, context.interface = {}, {}


@given("the configuration is built without checking")
def step_build_unchecked(context):
    context.config = Configuration.build(context.sig, context.procs, context.interface, checked=False)


@given("the configuration is built without an observer")
def step_build_unobserved(context):
    context.config = Configuration.build(context.sig, context.procs, context.interface, observe=False)


@given("the configuration is built")
def step_build_checked(context):
    context.config = Configuration.build(context.sig, context.procs, context.interface)


@given('the configuration running "{entry}"')
def step_entry_configuration(context, entry):
    context.config = Configuration.for_entry(context.sig, entry)


@when("the configuration is checked")
def step_config_check(context):
    try:
        config_check(context.sig, context.procs, context.interface)
        context.error = None
    except runtime.ConfigurationError as e:
        context.error = e


@then("the configuration should be accepted")
def step_config_accepted(context):
    assert context.error is None, str(context.error)


@then("the configuration should be rejected with a {kind}")
def step_config_rejected(context, kind):
    expected = getattr(runtime, kind)
    assert type(context.error) is expected, f"Expected {kind}, got {context.error!r}"


# Steps

@then('the enabled steps should be "{steps}"')
def step_enabled(context, steps):
    actual = "; ".join(str(event) for event in enabled(context.config)) or "none"
    assert actual == steps, f"Expected '{steps}', got '{actual}'"


@when('the step "{event}" is taken')
def step_take(context, event):
    matching = [e for e in enabled(context.config) if str(e) == event]
    assert matching, f"'{event}' is not enabled"
    context.config = step(context.config, matching[0])


@then('the process offering "{ch}" should be "{text}"')
def step_process_is(context, ch, text):
    actual = format_process(context.config.procs[_channel(ch)])
    assert actual == text, f"Expected '{text}', got '{actual}'"


@then('no process should offer "{ch}"')
def step_no_process(context, ch):
    assert _channel(ch) not in context.config.procs


@then('"{process}" offering "{ch}" should be poised')
def step_poised(context, process, ch):
    assert poised(parse_process(process, context.sig), _channel(ch))


@then('"{process}" offering "{ch}" should not be poised')
def step_not_poised(context, process, ch):
    assert not poised(parse_process(process, context.sig), _channel(ch))


# Runs

@when("it is run with seed {seed:d}")
def step_run(context, seed):
    context.result = run(context.config, seed=seed)


@when("it is run with seed {seed:d} and fuel {fuel:d}")
def step_run_with_fuel(context, seed, fuel):
    context.result = run(context.config, seed=seed, fuel=fuel)


@then('the run should end "{outcome}"')
def step_outcome(context, outcome):
    assert context.result.outcome == Outcome(outcome), f"Expected {outcome}, got {context.result.outcome}"


@then('the environment should have seen "{labels}"')
def step_observed(context, labels):
    actual = " ".join(context.result.labels())
    assert actual == labels, f"Expected '{labels}', got '{actual}'"


@then("the run should have taken {count:d} steps")
def step_step_count(context, count):
    assert context.result.steps == count, context.result.steps


@then("running it under seed {seed:d} should report a fidelity violation")
def step_run_violation(context, seed):
    try:
        run(context.config, seed=seed)
    except FidelityViolation:
        return
    raise AssertionError("Expected a fidelity violation")


@then("double maps every unary numeral from {low:d} to {high:d} to its double under {seeds:d} seeds")
def step_double_oracle(context, low, high, seeds):
    for n in range(low, high + 1):
        for seed in range(seeds):
            config = apply_definition(context.sig, "double", [nat_argument(n, Channel("d"))], Name("Nat"))
            result = run(config, seed=seed)
            assert result.outcome is Outcome.POISED, (n, seed, result.outcome)
            assert decode_nat(result.labels()) == 2 * n, (n, seed, result.labels())


@then("inc maps every binary numeral from {low:d} to {high:d} to its successor in standard form")
def step_inc_oracle(context, low, high):
    for n in range(low, high + 1):
        config = apply_definition(context.sig, "inc", [bits_argument(n, Channel("d"))], Name("Std"))
        result = run(config, seed=n)
        labels = result.labels()
        assert decode_bits(labels) == n + 1, (n, labels)
        assert is_standard_bits(labels), (n, labels)


@then("every corpus entry point finishes without deadlock under {seeds:d} seeds with the same output")
def step_progress(context, seeds):
    for entry in ENTRY_POINTS:
        reference = None
        for seed in range(seeds):
            result = run(Configuration.for_entry(context.sig, entry), seed=seed)
            assert result.outcome is Outcome.POISED, (entry, seed, result.outcome)
            assert not result.final.procs, (entry, seed, result.final.procs)
            if reference is None:
                reference = result.labels()
            assert result.labels() == reference, (entry, seed, result.labels(), reference)


def assert_forest(config):
    """Every used channel is offered, has exactly one client, and nothing uses itself in a cycle."""
    graph = nx.DiGraph()
    graph.add_nodes_from(config.procs)
    clients = {}
    for channel, term in config.procs.items():
        for used in free_channels(term) - {channel}:
            assert used in config.procs, f"{used} is used by {channel} but offered by nobody"
            assert used not in clients, f"{used} is used by both {clients[used]} and {channel}"
            clients[used] = channel
            graph.add_edge(channel, used)
    assert nx.is_directed_acyclic_graph(graph), nx.find_cycle(graph)


def channels_in(config):
    return set(config.procs).union(*(free_channels(term) for term in config.procs.values()))


@then("every corpus entry point keeps a forest of fresh channels at every step under {seeds:d} seeds")
def step_forest_preserved(context, seeds):
    for entry in ENTRY_POINTS:
        for seed in range(seeds):
            rng = random.Random(seed)
            config = Configuration.for_entry(context.sig, entry)
            seen = channels_in(config)
            for _ in range(DEFAULT_FUEL):
                events = enabled(config)
                if not events:
                    break
                config = step(config, rng.choice(events))
                fresh = config.last.fresh
                if fresh is not None:
                    assert fresh not in seen, (entry, seed, str(fresh))
                assert_forest(config)
                seen |= channels_in(config)
            assert not enabled(config), (entry, seed, "out of fuel")


@then('"{entry}" should produce "{labels}"')
def step_entry_output(context, entry, labels):
    result = run(Configuration.for_entry(context.sig, entry), seed=0)
    assert " ".join(result.labels()) == labels, result.labels()


# Fidelity monitor

@given('a monitor where "{ch}" has the types "{types}"')
def step_monitor(context, ch, types):
    context.monitor = {_channel(ch): TypeMultiset(tuple(parse_type(t) for t in types.split(";")))}


def _update(context, event):
    try:
        context.monitor = fidelity_update(context.sig, context.monitor, event)
        context.error = None
    except FidelityViolation as e:
        context.error = e


@when('"{ch}" is observed sending the label "{label}"')
def step_observe_label(context, ch, label):
    _update(context, StepEvent(StepKind.SELECT, (_channel(ch), ENV), label))


@when('"{ch}" is observed closing')
def step_observe_close(context, ch):
    _update(context, StepEvent(StepKind.CLOSE, (_channel(ch), ENV), runtime.END_TOKEN))


@when('"{client}" sends the label "{label}" to "{ch}"')
def step_client_label(context, client, label, ch):
    _update(context, StepEvent(StepKind.CASE_RECV, (_channel(ch), _channel(client)), label))


@when('"{ch}" sends a fresh channel "{fresh}" to "{client}"')
def step_send_fresh(context, ch, fresh, client):
    _update(context, StepEvent(StepKind.SEND_TENSOR, (_channel(ch), _channel(client)), None, _channel(fresh)))


@when('"{forwarder}" forwards to "{source}"')
def step_forward(context, forwarder, source):
    _update(context, StepEvent(StepKind.FWD, (_channel(forwarder), _channel(source))))


@then('the monitor should give "{ch}" the types "{types}"')
def step_monitor_types(context, ch, types):
    assert context.error is None, str(context.error)
    actual = str(context.monitor[_channel(ch)])
    assert actual == types, f"Expected '{types}', got '{actual}'"


@then('"{ch}" should no longer be monitored')
def step_not_monitored(context, ch):
    assert context.error is None, str(context.error)
    assert _channel(ch) not in context.monitor


@then("the monitor should report a fidelity violation")
def step_violation(context):
    assert isinstance(context.error, FidelityViolation), "Expected a fidelity violation"


# Numerals

@then('the unary numeral {n:d} should be alpha-equivalent to "{text}"')
def step_encode_nat(context, n, text):
    assert alpha_equivalent(encode_nat(n), parse_process(text, context.sig))


@then('{n:d} in binary should be sent as "{labels}"')
def step_bits_labels(context, n, labels):
    assert " ".join(bits_labels(n)) == labels, bits_labels(n)


@then("running the unary numeral {n:d} should decode to {expected:d}")
def step_nat_round_trip(context, n, expected):
    config = Configuration.build(context.sig, {Channel("c"): encode_nat(n)}, {Channel("c"): Name("Nat")})
    assert decode_nat(run(config).labels()) == expected


@then('doubling the unary numeral {n:d} should decode to {expected:d}')
def step_double_decodes(context, n, expected):
    config = apply_definition(context.sig, "double", [nat_argument(n, Channel("d"))], Name("Nat"))
    assert decode_nat(run(config).labels()) == expected


@then('the labels "{labels}" should not decode as a unary numeral')
def step_not_nat(context, labels):
    try:
        decode_nat(labels.split())
    except MalformedObservationError:
        return
    raise AssertionError(f"'{labels}' decoded")


@then('the labels "{labels}" should not be in standard form')
def step_not_standard(context, labels):
    assert not is_standard_bits(labels.split())

"""
Behave step definitions for process typing and signature validation.
"""

import itertools
import random

from behave import given, then, when

from sill_refine.domain import sigcheck
from sill_refine.domain.ast import (
    END,
    Call,
    Channel,
    External,
    Internal,
    Join,
    Lolli,
    Meet,
    Name,
    ProcDef,
    Recv,
    Signature,
    Tensor,
)
from sill_refine.domain.subtype import TypeMultiset, decide_sets, subtype
from sill_refine.domain.typecheck import (
    ChannelContext,
    LinearityError,
    SessionTypeError,
    accepts,
    check,
    split_context,
)
from sill_refine.infrastructure.parser import parse_process, parse_signature, parse_type

NAMED = ("Nat", "Pos", "Even", "Odd", "Bits", "Std", "Empty", "StdPos", "Dispenser")
NUMBERS = ("Nat", "Pos", "Even", "Odd")


def context_of(text):
    """`d : Nat, e : 1`; `.` is the empty context."""
    entries = {}
    if text.strip() != ".":
        for entry in text.split(","):
            name, _, ty = entry.partition(":")
            entries[Channel(name.strip())] = parse_type(ty)
    return ChannelContext.of(entries)


def _check(context, ctx, term, offer, theta):
    try:
        check(context.sig, ctx, term, offer, theta)
        context.error = None
    except SessionTypeError as e:
        context.error = e


def candidate_types():
    names = [Name(n) for n in NAMED]
    arrows = [Lolli(Name(a), Name(b)) for a, b in itertools.product(NUMBERS, repeat=2)]
    binary = [Lolli(Name(a), Name(b)) for a, b in itertools.product(("Std", "StdPos", "Empty", "Bits"), repeat=2)]
    return [END, *names, *arrows, *binary]


# Process typing

@when('the body of "{name}" is checked against "{ty}"')
def step_check_body(context, name, ty):
    definition = context.sig.procdefs[name]
    _check(context, {}, definition.body, definition.offer, parse_type(ty))


@when('"{process}" offering "{offer}" is checked against "{ty}" using "{ctx}"')
def step_check_process(context, process, offer, ty, ctx):
    term = parse_process(process, context.sig)
    _check(context, context_of(ctx), term, Channel(offer), parse_type(ty))


@then("the process should be accepted")
def step_accepted(context):
    assert context.error is None, "\n".join(context.error.explain())


@then("the process should be rejected")
def step_rejected(context):
    assert isinstance(context.error, SessionTypeError), "Expected a type error"


@then("the process should be rejected for linearity")
def step_rejected_linearity(context):
    assert isinstance(context.error, LinearityError), f"Expected a linearity error, got {context.error!r}"


@then('the explanation should mention "{text}"')
def step_explanation(context, text):
    lines = context.error.explain()
    assert any(text in line for line in lines), "\n".join(lines)


@when('the context "{ctx}" is split between a process using "{mine}" and one using "{rest}"')
def step_split(context, ctx, mine, rest):
    def channels(text):
        return [Channel(c.strip()) for c in text.split(",") if c.strip() and c.strip() != "nothing"]

    try:
        context.split = split_context(context_of(ctx), channels(mine), channels(rest))
        context.error = None
    except LinearityError as e:
        context.error = e


@then('the parts should be "{first}" and "{second}"')
def step_split_parts(context, first, second):
    assert context.error is None, context.error
    actual = tuple(str(part) for part in context.split)
    assert actual == (first, second), f"Expected ({first}, {second}), got {actual}"


@then("the split should fail for linearity")
def step_split_fails(context):
    assert isinstance(context.error, LinearityError)


@then("every definition stays well-typed at each candidate supertype of its declared type")
def step_delayed_subtyping(context):
    candidates = candidate_types()
    tried = 0
    for definition in context.sig.procdefs.values():
        for ty in candidates:
            if subtype(context.sig, definition.declared, ty):
                tried += 1
                assert accepts(context.sig, {}, definition.body, definition.offer, ty), (
                    f"{definition.name} fails at supertype {ty}"
                )
    assert tried > len(context.sig.procdefs)


@then('the body of "{name}" stays well-typed when its argument is any corpus subtype of "{arg}"')
def step_argument_strengthening(context, name, arg):
    definition = context.sig.procdefs[name]
    body = definition.body
    assert isinstance(body, Recv) and body.ch == definition.offer
    declared = Name(arg)
    result = [ty.cont for ty in _lollis(definition.declared) if ty.arg == declared]
    assert result, f"{name} has no declared component taking {arg}"
    for candidate in (Name(n) for n in NAMED):
        if subtype(context.sig, candidate, declared):
            assert accepts(context.sig, {body.bound: candidate}, body.cont, definition.offer, result[0]), (
                f"{name} rejects an argument of type {candidate.id}"
            )


def _lollis(ty):
    if isinstance(ty, Lolli):
        return [ty]
    return [*_lollis(ty.left), *_lollis(ty.right)]


# Signatures

@given("the signature")
def step_signature(context):
    context.sig = parse_signature(context.text)


@given("the empty signature")
def step_empty_signature(context):
    context.sig = Signature()


@given('the corpus with "{old}" replaced by "{new}"')
def step_corpus_replaced(context, old, new):
    assert old in context.corpus_source
    context.sig = parse_signature(context.corpus_source.replace(old, new))


@given('a signature whose definition "{name}" calls the undefined "{callee}"')
def step_undefined_call(context, name, callee):
    context.sig = Signature(procdefs={name: ProcDef(name, Channel("c"), END, Call(callee))})


@when("the signature is checked")
def step_check_signature(context):
    context.errors = sigcheck.check_signature(context.sig)


@then("the signature should be accepted")
def step_signature_accepted(context):
    assert context.errors == [], [str(e) for e in context.errors]


@then('the signature should be rejected because of "{name}" with a {kind}')
def step_signature_rejected(context, name, kind):
    expected = getattr(sigcheck, kind)
    matching = [e for e in context.errors if isinstance(e, expected) and e.name == name]
    assert matching, f"No {kind} for '{name}' in {[str(e) for e in context.errors]}"


@then('the unresolved names should be "{names}"')
def step_unresolved(context, names):
    actual = ", ".join(e.name for e in sigcheck.check_names(context.sig))
    assert actual == names, f"Expected '{names}', got '{actual}'"


@then('the non-contractive cycles should be "{cycles}"')
def step_cycles(context, cycles):
    report = sigcheck.check_contractive(context.sig)
    actual = "; ".join(" -> ".join(cycle) for _, cycle in report.offenders)
    assert actual == cycles, f"Expected '{cycles}', got '{actual}'"


@then("every type definition should be contractive")
def step_contractive(context):
    assert sigcheck.check_contractive(context.sig).ok


@then("checking the definitions in reverse order should give the same verdicts")
def step_order_independent(context):
    reversed_sig = Signature(
        typedefs=dict(reversed(context.sig.typedefs.items())),
        procdefs=dict(reversed(context.sig.procdefs.items())),
    )
    forward = sorted(e.name for e in context.errors)
    backward = sorted(e.name for e in sigcheck.check_signature(reversed_sig))
    assert forward == backward, f"{forward} != {backward}"


@then('the rejection of "{name}" should explain "{text}"')
def step_rejection_explains(context, name, text):
    (error,) = [e for e in context.errors if getattr(e, "name", None) == name]
    lines = error.cause.explain()
    assert any(text in line for line in lines), "\n".join(lines)


@then('a multiset "{types}" context prints as "{text}"')
def step_context_prints(context, types, text):
    ctx = ChannelContext({Channel("d"): TypeMultiset(tuple(parse_type(t) for t in types.split(";")))})
    assert str(ctx) == text, str(ctx)


@then("the number of reported errors should be {count:d}")
def step_error_count(context, count):
    assert len(context.errors) == count, [str(e) for e in context.errors]


def random_definition(rng, names, depth):
    """Bodies lean towards names, intersections and unions so that unguarded cycles are common."""
    if depth <= 1:
        return rng.choice([END, Name(rng.choice(names)), Name(rng.choice(names))])

    def sub():
        return random_definition(rng, names, depth - 1)

    match rng.choice(["name", "name", "meet", "join", "tensor", "lolli", "internal", "external", "end"]):
        case "name":
            return Name(rng.choice(names))
        case "meet":
            return Meet(sub(), sub())
        case "join":
            return Join(sub(), sub())
        case "tensor":
            return Tensor(sub(), sub())
        case "lolli":
            return Lolli(sub(), sub())
        case "internal":
            return Internal((("a", sub()),))
        case "external":
            return External((("a", sub()),))
        case _:
            return END


def _unguarded_names(ty):
    if isinstance(ty, Name):
        return {ty.id}
    if isinstance(ty, Meet | Join):
        return _unguarded_names(ty.left) | _unguarded_names(ty.right)
    return set()


def exhaustive_cycles(typedefs):
    """Every elementary cycle of unguarded references, each starting at its least name."""
    edges = {name: sorted(_unguarded_names(body)) for name, body in typedefs.items()}
    found = set()

    def walk(start, path):
        for target in edges[path[-1]]:
            if target == start:
                found.add(tuple(path))
            elif target > start and target not in path:
                walk(start, [*path, target])

    for start in sorted(typedefs):
        walk(start, [start])
    return sorted(found)


@then("on {count:d} random signatures of at most {size:d} types the non-contractive cycles are exactly those found by exhaustive search")
def step_contractive_oracle(context, count, size):
    rng = random.Random(8128)
    with_cycles = 0
    for _ in range(count):
        names = [f"t{i}" for i in range(rng.randint(1, size))]
        sig = Signature(typedefs={name: random_definition(rng, names, 3) for name in names})
        expected = exhaustive_cycles(sig.typedefs)
        actual = [cycle for _, cycle in sigcheck.check_contractive(sig).offenders]
        assert actual == expected, f"{sig.typedefs}: expected {expected}, got {actual}"
        assert [name for name, _ in sigcheck.check_contractive(sig).offenders] == [c[0] for c in expected]
        with_cycles += bool(expected)
    assert 0 < with_cycles < count, with_cycles


def _members(text):
    return [parse_type(part) for part in text.split(";")]


def _orderings(types):
    return [TypeMultiset(perm) for perm in itertools.permutations(types)]


@then('"{process}" offering "{offer}" should be {verdict} against every ordering of "{theta}" using every ordering of "{ctx}"')
def step_check_every_ordering(context, process, offer, verdict, theta, ctx):
    term = parse_process(process, context.sig)
    entries = []
    for entry in ctx.split(","):
        name, _, types = entry.partition(":")
        entries.append((Channel(name.strip()), _orderings(_members(types))))

    verdicts = set()
    for channel_order in itertools.permutations(entries):
        channels = [ch for ch, _ in channel_order]
        for members in itertools.product(*(orders for _, orders in channel_order)):
            for offered in _orderings(_members(theta)):
                ctx_in_order = ChannelContext(dict(zip(channels, members, strict=True)))
                verdicts.add(accepts(context.sig, ctx_in_order, term, Channel(offer), offered))
    assert verdicts == {verdict == "accepted"}, f"verdicts {verdicts} for {process}"


@then('the multisets "{delta}" and "{theta}" should compare {verdict} in every order')
def step_decide_every_ordering(context, delta, theta, verdict):
    left, right = _members(delta), _members(theta)
    printed = {str(ms) for ms in _orderings(left)}
    assert len(printed) == 1, printed
    for sub in itertools.permutations(left):
        for sup in itertools.permutations(right):
            actual = decide_sets(context.sig, sub, sup)
            assert actual == (verdict == "true"), f"{sub} <= {sup}: got {actual}"

"""
Behave step definitions for the syntax trees, the parser and the printer.
"""

import random

from behave import given, then, when

from sill_refine.domain.ast import (
    END,
    Call,
    Case,
    Channel,
    Close,
    End,
    External,
    Fwd,
    Internal,
    Join,
    Lolli,
    Meet,
    Name,
    Recv,
    Select,
    SendFresh,
    Spawn,
    Tensor,
    UndefinedNameError,
    Wait,
    all_channels,
    alpha_equivalent,
    erase,
    free_channels,
    fresh_channel,
    subst_channel,
    unfold,
)
from sill_refine.domain.subtype import MemoOverflowError
from sill_refine.domain.typecheck import SessionTypeError, check
from sill_refine.infrastructure import parser as parser_module
from sill_refine.infrastructure.parser import (
    ParseError,
    parse_process,
    parse_signature,
    parse_source,
    parse_type,
)
from sill_refine.infrastructure.printer import format_process, format_signature, format_type


def channel(text):
    name, _, gen = text.partition("#")
    return Channel(name, int(gen) if gen else 0)


def shape(ty):
    """Fully bracketed prefix rendering of a type tree."""
    match ty:
        case End():
            return "End"
        case Name(id=name):
            return name
        case Tensor(left=a, right=b):
            return f"Tensor({shape(a)}, {shape(b)})"
        case Lolli(arg=a, cont=b):
            return f"Lolli({shape(a)}, {shape(b)})"
        case Meet(left=a, right=b):
            return f"Meet({shape(a)}, {shape(b)})"
        case Join(left=a, right=b):
            return f"Join({shape(a)}, {shape(b)})"
        case Internal() | External():
            inner = ", ".join(f"{label}: {shape(branch)}" for label, branch in ty.branches)
            return f"{type(ty).__name__}({inner})"
    raise AssertionError(f"not a type: {ty!r}")


def _attempt(context, action):
    try:
        context.result = action()
        context.error = None
    except ParseError as e:
        context.result = None
        context.error = e


# Process terms

@given('the process "{text}"')
def step_process(context, text):
    context.term = parse_process(text, context.sig)


@when('I try to parse the process "{text}"')
def step_try_process(context, text):
    _attempt(context, lambda: parse_process(text, context.sig))


@when('"{new}" is substituted for "{old}"')
def step_substitute(context, new, old):
    context.term = subst_channel(context.term, channel(new), channel(old))


@when("the annotations are erased")
def step_erase(context):
    context.term = erase(context.term)


@then('the process should print as "{text}"')
def step_process_prints(context, text):
    actual = format_process(context.term)
    assert actual == text, f"Expected '{text}', got '{actual}'"


@then('the process should be alpha-equivalent to "{text}"')
def step_alpha_equivalent(context, text):
    other = parse_process(text, context.sig)
    assert alpha_equivalent(context.term, other), f"{format_process(context.term)} is not alpha-equivalent to {text}"


@then('the process should not be alpha-equivalent to "{text}"')
def step_not_alpha_equivalent(context, text):
    assert not alpha_equivalent(context.term, parse_process(text, context.sig))


@then('the free channels should be "{names}"')
def step_free_channels(context, names):
    actual = ", ".join(str(c) for c in sorted(free_channels(context.term)))
    assert actual == names, f"Expected free channels '{names}', got '{actual}'"


# Types

@when('I parse the type "{text}"')
def step_parse_type(context, text):
    _attempt(context, lambda: parse_type(text))


@then('the type should have the shape "{expected}"')
def step_type_shape(context, expected):
    assert context.error is None, f"unexpected parse error: {context.error}"
    assert shape(context.result) == expected, f"Expected {expected}, got {shape(context.result)}"


@then("printing and re-parsing the type should give the same type")
def step_type_round_trip(context):
    printed = format_type(context.result)
    assert parse_type(printed) == context.result, f"'{printed}' does not re-parse to the same type"


@then('unfolding "{name}" should give the shape "{expected}"')
def step_unfold(context, name, expected):
    assert shape(unfold(context.sig, name)) == expected


@then('unfolding "{name}" should fail with an undefined name error')
def step_unfold_missing(context, name):
    try:
        unfold(context.sig, name)
    except UndefinedNameError as e:
        assert e.name == name
    else:
        raise AssertionError(f"unfolding '{name}' should have failed")


# Sources

@when("I parse the source")
def step_parse_source(context):
    _attempt(context, lambda: parse_source(context.text))
    if context.result is not None:
        context.sig = context.result.signature()


@then("parsing should succeed")
def step_parse_succeeds(context):
    assert context.error is None, f"unexpected parse error: {context.error}"


@then("parsing should fail with a {kind} at line {line:d} column {column:d}")
def step_parse_fails_at(context, kind, line, column):
    step_parse_fails(context, kind)
    assert (context.error.line, context.error.column) == (line, column), (
        f"Expected {line}:{column}, got {context.error.line}:{context.error.column}"
    )


@then("parsing should fail with a {kind}")
def step_parse_fails(context, kind):
    assert context.error is not None, "Expected parsing to fail"
    expected = getattr(parser_module, kind)
    assert type(context.error) is expected, f"Expected {kind}, got {type(context.error).__name__}: {context.error}"


@then('the parse error should mention "{text}"')
def step_parse_error_mentions(context, text):
    assert text in str(context.error), f"'{text}' not in '{context.error}'"


@then('the definition "{name}" should have the body "{text}"')
def step_definition_body(context, name, text):
    actual = format_process(context.sig.procdefs[name].body)
    assert actual == text, f"Expected '{text}', got '{actual}'"


@then('the type definition "{name}" should have the shape "{expected}"')
def step_typedef_shape(context, name, expected):
    assert shape(context.sig.typedefs[name]) == expected


@then('"{name}" should be declared at line {line:d}')
def step_declared_at(context, name, line):
    assert context.result.span_of(name).line == line


@then("printing and re-parsing the corpus should give the same signature")
def step_corpus_round_trip(context):
    printed = format_signature(context.corpus)
    assert parse_signature(printed) == context.corpus, printed


# Random process terms

POOL = tuple(Channel(n) for n in ("a", "b", "c", "x", "y"))
LABELS = ("zero", "succ", "one", "eps")
CALLEES = ("z", "s", "double")
CUT_TYPES = (None, None, END, Name("Nat"), Lolli(Name("Nat"), Name("Nat")))


def random_process(rng, depth):
    """A syntactically valid process over a few channels; it is usually ill-typed."""
    pick = rng.choice
    if depth == 0:
        return pick([Close(pick(POOL)), Fwd(pick(POOL), pick(POOL)), Call(pick(CALLEES))])
    sub = depth - 1
    match rng.randrange(7):
        case 0:
            return Spawn(pick(POOL), pick(CUT_TYPES), random_process(rng, sub), random_process(rng, sub))
        case 1:
            return Wait(pick(POOL), random_process(rng, sub))
        case 2:
            return SendFresh(pick(POOL), pick(POOL), random_process(rng, sub), random_process(rng, sub))
        case 3:
            return Recv(pick(POOL), pick(POOL), random_process(rng, sub))
        case 4:
            return Select(pick(POOL), pick(LABELS), random_process(rng, sub))
        case 5:
            labels = rng.sample(LABELS, rng.randint(1, 2))
            return Case(pick(POOL), tuple((label, random_process(rng, sub)) for label in labels))
    return random_process(rng, 0)


def random_processes(count, depth=4, seed=31337):
    rng = random.Random(seed)
    return [random_process(rng, depth) for _ in range(count)]


def rename_binders(term, avoid):
    """Alpha-variant of `term` whose binders are all new channels; `avoid` grows as they are picked."""

    def fresh(bound):
        renamed = fresh_channel(bound, avoid)
        avoid.add(renamed)
        return renamed

    match term:
        case Spawn(bound=x, annotation=ann, child=child, cont=cont):
            y = fresh(x)
            child = rename_binders(subst_channel(child, y, x), avoid)
            return Spawn(y, ann, child, rename_binders(subst_channel(cont, y, x), avoid))
        case SendFresh(ch=c, bound=x, payload=payload, cont=cont):
            y = fresh(x)
            return SendFresh(c, y, rename_binders(subst_channel(payload, y, x), avoid), rename_binders(cont, avoid))
        case Recv(bound=x, ch=c, cont=cont):
            y = fresh(x)
            return Recv(y, c, rename_binders(subst_channel(cont, y, x), avoid))
        case Wait(ch=c, cont=cont):
            return Wait(c, rename_binders(cont, avoid))
        case Select(ch=c, label=label, cont=cont):
            return Select(c, label, rename_binders(cont, avoid))
        case Case(ch=c, branches=branches):
            return Case(c, tuple((label, rename_binders(b, avoid)) for label, b in branches))
    return term


def variant(term):
    return rename_binders(term, all_channels(term) | set(POOL))


def cut_annotations(term):
    """Every cut annotation of `term` in order, `None` for unannotated cuts."""
    match term:
        case Spawn(annotation=ann, child=child, cont=cont):
            yield ann
            yield from cut_annotations(child)
            yield from cut_annotations(cont)
        case SendFresh(payload=payload, cont=cont):
            yield from cut_annotations(payload)
            yield from cut_annotations(cont)
        case Wait(cont=cont) | Recv(cont=cont) | Select(cont=cont):
            yield from cut_annotations(cont)
        case Case(branches=branches):
            for _, branch in branches:
                yield from cut_annotations(branch)


def reannotate(term, anns):
    """Put the annotations from the iterator `anns` back on the cuts of `term`, in order."""
    match term:
        case Spawn(bound=x, child=child, cont=cont):
            ann = next(anns)
            child = reannotate(child, anns)
            return Spawn(x, ann, child, reannotate(cont, anns))
        case SendFresh(ch=c, bound=x, payload=payload, cont=cont):
            payload = reannotate(payload, anns)
            return SendFresh(c, x, payload, reannotate(cont, anns))
        case Wait(ch=c, cont=cont):
            return Wait(c, reannotate(cont, anns))
        case Recv(bound=x, ch=c, cont=cont):
            return Recv(x, c, reannotate(cont, anns))
        case Select(ch=c, label=label, cont=cont):
            return Select(c, label, reannotate(cont, anns))
        case Case(ch=c, branches=branches):
            return Case(c, tuple((label, reannotate(b, anns)) for label, b in branches))
    return term


def restored(term):
    return reannotate(erase(term), iter(list(cut_annotations(term))))


def verdict(sig, term, offer, declared):
    """Whether `term` offers `declared` along `offer`, with every other free channel at Nat."""
    ctx = {ch: Name("Nat") for ch in free_channels(term) - {offer}}
    try:
        check(sig, ctx, term, offer, declared)
    except (SessionTypeError, MemoOverflowError):
        return False
    return True


@then("erasing {count:d} random processes is idempotent and keeps their free channels")
def step_random_erase(context, count):
    for term in random_processes(count):
        erased = erase(term)
        assert erase(erased) == erased, format_process(term)
        assert free_channels(erased) == free_channels(term), format_process(term)
        assert not any(ann is not None for ann in cut_annotations(erased)), format_process(erased)


@then("renaming the binders of {count:d} random processes commutes with every substitution")
def step_random_substitution(context, count):
    rng = random.Random(4242)
    for term in random_processes(count):
        renamed = variant(term)
        assert alpha_equivalent(term, renamed), f"{format_process(term)} vs {format_process(renamed)}"
        for old in sorted(free_channels(term)):
            new = rng.choice(POOL)
            left, right = subst_channel(term, new, old), subst_channel(renamed, new, old)
            assert alpha_equivalent(left, right), (
                f"[{new}/{old}] {format_process(term)}: {format_process(left)} vs {format_process(right)}"
            )
            assert old == new or old not in free_channels(left), format_process(left)


@then("renaming the binders of {count:d} random processes keeps their typing verdict")
def step_random_verdict(context, count):
    offer, declared = Channel("c"), Name("Nat")
    accepted = 0
    for term in random_processes(count):
        expected = verdict(context.sig, term, offer, declared)
        assert verdict(context.sig, variant(term), offer, declared) == expected, format_process(term)
        accepted += expected
    assert accepted < count


@then("erasing and restoring the annotations of {count:d} random processes gives them back")
def step_random_restore(context, count):
    for term in random_processes(count):
        assert restored(term) == term, format_process(term)


@then("every corpus definition is accepted again after its annotations are erased and restored")
def step_corpus_restore(context):
    for name, definition in context.sig.procdefs.items():
        body = restored(definition.body)
        assert body == definition.body, name
        assert verdict(context.sig, body, definition.offer, definition.declared), name

"""
Behave step definitions for multiset subtyping.
"""

import itertools
import random

from behave import given, then, when

from sill_refine.domain.ast import (
    END,
    External,
    Internal,
    Join,
    Lolli,
    Meet,
    Name,
    Tensor,
    unfold,
)
from sill_refine.domain.subtype import (
    MEMO_LIMIT,
    MemoTable,
    TypeMultiset,
    decide,
    equivalent,
    saturate,
    structural_step,
    subtype,
)
from sill_refine.infrastructure.parser import parse_type
from sill_refine.infrastructure.printer import format_type

NAMED = ("Nat", "Pos", "Even", "Odd", "Bits", "Std", "Empty", "StdPos", "Dispenser")


def multiset(text):
    """`{A; B}` or a single type; members are separated by semicolons."""
    text = text.strip()
    if text.startswith("{"):
        return TypeMultiset(tuple(parse_type(part) for part in text[1:-1].split(";") if part.strip()))
    return TypeMultiset.of(parse_type(text))


def render(ms):
    return "{" + "; ".join(format_type(t) for t in ms) + "}"


def random_type(rng, depth):
    if depth <= 1 or rng.random() < 0.3:
        return rng.choice([END, *(Name(n) for n in NAMED)])
    labels = rng.sample(["a", "b", "c"], rng.randint(1, 2))
    kind = rng.choice(["tensor", "lolli", "internal", "external", "meet", "join"])

    def sub():
        return random_type(rng, depth - 1)

    match kind:
        case "tensor":
            return Tensor(sub(), sub())
        case "lolli":
            return Lolli(sub(), sub())
        case "internal":
            return Internal(tuple((label, sub()) for label in labels))
        case "external":
            return External(tuple((label, sub()) for label in labels))
        case "meet":
            return Meet(sub(), sub())
        case _:
            return Join(sub(), sub())


def _singletons(choice, constructor, combine):
    parts = [constructor(((label, branch),)) for label, branch in choice.branches]
    result = parts[0]
    for part in parts[1:]:
        result = combine(result, part)
    return result


@given("the types of the corpus")
def step_corpus_types(context):
    context.sig = context.corpus


@then('"{sub}" <= "{sup}" should be {verdict}')
def step_subtype_verdict(context, sub, sup, verdict):
    expected = verdict == "true"
    actual = subtype(context.sig, parse_type(sub), parse_type(sup))
    assert actual == expected, f"{sub} <= {sup}: expected {expected}, got {actual}"


@then('"{left}" and "{right}" should be equivalent')
def step_equivalent(context, left, right):
    assert equivalent(context.sig, parse_type(left), parse_type(right))


@when('the goal "{delta}" <= "{theta}" is saturated')
def step_saturate(context, delta, theta):
    context.goals = saturate(context.sig, multiset(delta), multiset(theta))


@then('the saturated goals should be')
def step_saturated_goals(context):
    expected = [(row["left"], row["right"]) for row in context.table]
    actual = [(render(d), render(t)) for d, t in context.goals]
    assert actual == expected, f"Expected {expected}, got {actual}"


@when('a structural rule is applied to "{delta}" <= "{theta}"')
def step_structural(context, delta, theta):
    context.candidates = structural_step(multiset(delta), multiset(theta))


@then("there should be no candidate")
def step_no_candidate(context):
    assert context.candidates == [], context.candidates


@then("there should be one candidate with no premises")
def step_one_empty_candidate(context):
    assert context.candidates == [()], context.candidates


@then('there should be one candidate with premises "{premises}"')
def step_one_candidate(context, premises):
    assert len(context.candidates) == 1, context.candidates
    actual = "; ".join(f"{format_type(a)} <= {format_type(b)}" for a, b in context.candidates[0])
    assert actual == premises, f"Expected '{premises}', got '{actual}'"


@then("there should be {count:d} candidates")
def step_candidate_count(context, count):
    assert len(context.candidates) == count, context.candidates


@when('"{delta}" <= "{theta}" is decided with a fresh memo')
def step_decide_with_memo(context, delta, theta):
    context.memo = MemoTable()
    context.verdict = decide(context.sig, multiset(delta), multiset(theta), context.memo)


@then("the verdict should be {verdict}")
def step_verdict(context, verdict):
    assert context.verdict == (verdict == "true")


@then("the memo should have seen {count:d} pairs")
def step_memo_pairs(context, count):
    assert len(context.memo) == count, f"Expected {count} pairs, memo has {len(context.memo)}"


def distributive_laws(pool):
    """Both sides of each distributive law for every choice of operands from `pool`."""
    for a1, a2, b in itertools.product(pool, repeat=3):
        yield Meet(Join(a1, b), Join(a2, b)), Join(Meet(a1, a2), b)
        yield Meet(Join(a1, a2), b), Join(Meet(a1, b), Meet(a2, b))


def choice_splits(sig):
    """Each choice type of the corpus paired with its split into single-label choices."""
    for name in NAMED:
        body = unfold(sig, name)
        if isinstance(body, Internal):
            yield Name(name), _singletons(body, Internal, Join)
        elif isinstance(body, External):
            yield Name(name), _singletons(body, External, Meet)


@then("both distributive laws hold in both directions for every choice of {names}")
def step_distributivity(context, names):
    pool = [parse_type(n.strip()) for n in names.split(",")]
    for left, right in distributive_laws(pool):
        assert subtype(context.sig, left, right), f"{format_type(left)} <= {format_type(right)}"
        assert subtype(context.sig, right, left), f"{format_type(right)} <= {format_type(left)}"


@then("every choice type in the corpus is equivalent to its split into single labels")
def step_choice_decomposition(context):
    checked = 0
    for named, split in choice_splits(context.sig):
        assert equivalent(context.sig, named, split), f"{named.id} is not equivalent to {format_type(split)}"
        checked += 1
    assert checked >= 7, checked


@then("{count:d} random types of depth at most {depth:d} are subtypes of themselves")
def step_random_reflexivity(context, count, depth):
    rng = random.Random(20240917)
    for _ in range(count):
        ty = random_type(rng, depth)
        assert subtype(context.sig, ty, ty), f"{format_type(ty)} is not a subtype of itself"


@then("subtyping among the named corpus types is transitive")
def step_transitivity(context):
    names = [Name(n) for n in NAMED]
    holds = {(a, b): subtype(context.sig, a, b) for a in names for b in names}
    for a, b, c in itertools.product(names, repeat=3):
        if holds[a, b] and holds[b, c]:
            assert holds[a, c], f"{a.id} <= {b.id} <= {c.id} but not {a.id} <= {c.id}"


@then("every type name is equivalent to its definition")
def step_unfolding_equivalence(context):
    for name, body in context.sig.typedefs.items():
        assert equivalent(context.sig, Name(name), body), name


@then("no query among the named corpus types needs more than {limit:d} memo entries")
def step_memo_bound(context, limit):
    assert limit <= MEMO_LIMIT
    _assert_memo_bound(context.sig, ((Name(a), Name(b)) for a, b in itertools.product(NAMED, repeat=2)), limit)


@then("no distributivity or choice split query over {names} needs more than {limit:d} memo entries")
def step_memo_bound_laws(context, names, limit):
    assert limit <= MEMO_LIMIT
    pool = [parse_type(n.strip()) for n in names.split(",")]
    pairs = itertools.chain(distributive_laws(pool), choice_splits(context.sig))
    queries = itertools.chain.from_iterable(((left, right), (right, left)) for left, right in pairs)
    _assert_memo_bound(context.sig, queries, limit)


def _assert_memo_bound(sig, queries, limit):
    checked = 0
    for sub, sup in queries:
        memo = MemoTable()
        decide(sig, TypeMultiset.of(sub), TypeMultiset.of(sup), memo)
        assert memo.peak < limit, f"{format_type(sub)} <= {format_type(sup)} used {memo.peak} entries"
        checked += 1
    assert checked > 0

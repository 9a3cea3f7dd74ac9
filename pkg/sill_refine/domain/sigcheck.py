"""
Whole-signature validation: every name resolves, every type definition is
contractive, and every process definition has its declared type.
"""

from collections.abc import Iterator
from dataclasses import dataclass, field

import networkx as nx

from sill_refine.domain.ast import (
    Join,
    Meet,
    Name,
    ProcDef,
    SessionType,
    Signature,
    annotations,
    process_names,
    type_names,
)
from sill_refine.domain.subtype import MemoOverflowError
from sill_refine.domain.typecheck import SessionTypeError, check
from sill_refine.infrastructure.logging import get_logger

logger = get_logger(__name__)


class SignatureError(Exception):
    """Base class for problems found while validating a signature."""


class UnresolvedNameError(SignatureError):
    def __init__(self, name: str, where: str):
        super().__init__(f"undefined name '{name}' in {where}")
        self.name = name
        self.where = where


class NonContractiveError(SignatureError):
    def __init__(self, name: str, cycle: tuple[str, ...]):
        path = " -> ".join((*cycle, cycle[0]))
        super().__init__(f"type '{name}' is not contractive: {path} never reaches a structural type")
        self.name = name
        self.cycle = cycle


class DefinitionTypeError(SignatureError):
    def __init__(self, name: str, cause: Exception):
        super().__init__(f"process '{name}' does not have its declared type: {cause}")
        self.name = name
        self.cause = cause


@dataclass(frozen=True)
class ContractivenessReport:
    offenders: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.offenders


def check_names(sig: Signature) -> list[UnresolvedNameError]:
    """Every type name and called definition that has no declaration."""
    errors = []

    def types(ty: SessionType, where: str) -> None:
        for name in dict.fromkeys(type_names(ty)):
            if name not in sig.typedefs:
                errors.append(UnresolvedNameError(name, where))

    for name, body in sig.typedefs.items():
        types(body, f"type '{name}'")
    for name, definition in sig.procdefs.items():
        types(definition.declared, f"the declared type of '{name}'")
        for annotation in annotations(definition.body):
            types(annotation, f"an annotation in '{name}'")
        for callee in dict.fromkeys(process_names(definition.body)):
            if callee not in sig.procdefs:
                errors.append(UnresolvedNameError(callee, f"the body of '{name}'"))
    return errors


def _unguarded(ty: SessionType) -> Iterator[str]:
    """Names reachable from `ty` through intersections and unions only."""
    match ty:
        case Name(id=name):
            yield name
        case Meet(left=a, right=b) | Join(left=a, right=b):
            yield from _unguarded(a)
            yield from _unguarded(b)


def check_contractive(sig: Signature) -> ContractivenessReport:
    """
    A definition is contractive when unfolding it through intersections,
    unions and names always reaches a structural constructor. The report
    lists each cycle of names that never does, starting at its least name.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(sig.typedefs)
    for name, body in sig.typedefs.items():
        graph.add_edges_from((name, target) for target in _unguarded(body) if target in sig.typedefs)

    cycles = []
    for cycle in nx.simple_cycles(graph):
        start = cycle.index(min(cycle))
        cycles.append(tuple(cycle[start:] + cycle[:start]))
    return ContractivenessReport([(cycle[0], cycle) for cycle in sorted(cycles)])


def _tainted_types(sig: Signature, bad: set[str]) -> set[str]:
    """`bad` together with every type definition that refers to one of them, directly or not."""
    graph = nx.DiGraph()
    graph.add_nodes_from(sig.typedefs)
    graph.add_nodes_from(bad)
    for name, body in sig.typedefs.items():
        graph.add_edges_from((name, target) for target in type_names(body))
    tainted = set(bad)
    for name in bad:
        tainted |= nx.ancestors(graph, name)
    return tainted


def _blocked_by(sig: Signature, definition: ProcDef, tainted: set[str]) -> str | None:
    """The first unusable name the typing of `definition` would depend on."""
    types = [definition.declared, *annotations(definition.body)]
    for callee in process_names(definition.body):
        if callee not in sig.procdefs:
            return callee
        types.append(sig.procdefs[callee].declared)
    for ty in types:
        for name in type_names(ty):
            if name in tainted:
                return name
    return None


def check_signature(sig: Signature) -> list[SignatureError]:
    """
    Validate `sig` and return every error found. Unresolved names and
    non-contractive cycles come first; then each process body is checked
    against its declared type with every definition in scope, except bodies
    whose typing would depend on a name already reported.
    """
    errors: list[SignatureError] = list(check_names(sig))
    report = check_contractive(sig)
    errors.extend(NonContractiveError(name, cycle) for name, cycle in report.offenders)

    bad = {e.name for e in errors if isinstance(e, UnresolvedNameError) and e.name not in sig.typedefs}
    bad.update(name for _, cycle in report.offenders for name in cycle)
    tainted = _tainted_types(sig, bad) if bad else set()

    for name, definition in sig.procdefs.items():
        blocker = _blocked_by(sig, definition, tainted)
        if blocker is not None:
            logger.info("definition not checked", definition=name, depends_on=blocker)
            continue
        try:
            check(sig, {}, definition.body, definition.offer, definition.declared)
        except (SessionTypeError, MemoOverflowError) as exc:
            logger.warning("definition rejected", definition=name, error=str(exc))
            errors.append(DefinitionTypeError(name, exc))
        else:
            logger.debug("definition checked", definition=name)

    logger.info(
        "signature checked",
        types=len(sig.typedefs),
        definitions=len(sig.procdefs),
        errors=len(errors),
    )
    return errors

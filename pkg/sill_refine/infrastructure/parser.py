"""
Concrete syntax for signatures, types and processes.

The grammar (see docs/grammar.md) is written with pyparsing. Process bodies are
parsed into builder functions and resolved once every declaration is known, so
that `c <- X a1 ... an` can tell a definition call from a forward and check the
call's arity against the callee's header. Surface sugar is desugared here:
header parameters become leading receives and calls become cuts followed by
sends of forwarding payloads.
"""

import re
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import pyparsing as pp

from sill_refine.domain.ast import (
    END,
    Call,
    Case,
    Channel,
    Close,
    External,
    Fwd,
    Internal,
    Join,
    Lolli,
    Meet,
    Name,
    ProcDef,
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
from sill_refine.infrastructure.logging import get_logger

logger = get_logger(__name__)

pp.ParserElement.enable_packrat()

KEYWORDS = ("type", "proc", "close", "wait", "send", "recv", "case", "of")

_IDENT_CHARS = pp.alphanums + "_'#"
_FORBIDDEN = re.compile(r"[^A-Za-z0-9_'#\s:;.,(){}|<>=\-+*&/\\]")


class ParseError(Exception):
    """Raised for malformed source text, with a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{line}:{column}: {message}" if line else message)
        self.message = message
        self.line = line
        self.column = column


class LexicalError(ParseError):
    """Raised for characters outside the language's alphabet."""


class DuplicateDefinitionError(ParseError):
    """Raised when a type or process name is declared twice."""


class ArityMismatchError(ParseError):
    """Raised when a call passes a different number of channels than the callee declares."""


@dataclass(frozen=True)
class Span:
    line: int
    column: int
    end_line: int
    end_column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class TypeDeclaration:
    name: str
    body: SessionType
    span: Span


@dataclass(frozen=True)
class ProcDeclaration:
    name: str
    declared: SessionType
    offer: Channel
    params: tuple[Channel, ...]
    body: ProcessTerm
    span: Span


@dataclass
class SourceFile:
    """Declarations in source order, already desugared."""

    declarations: list[TypeDeclaration | ProcDeclaration] = field(default_factory=list)

    def signature(self) -> Signature:
        sig = Signature()
        for decl in self.declarations:
            if isinstance(decl, TypeDeclaration):
                sig.typedefs[decl.name] = decl.body
            else:
                sig.procdefs[decl.name] = ProcDef(decl.name, decl.offer, decl.declared, decl.body)
        return sig

    def span_of(self, name: str) -> Span | None:
        for decl in self.declarations:
            if decl.name == name:
                return decl.span
        return None


# ---------------------------------------------------------------------------
# Desugaring
# ---------------------------------------------------------------------------


def desugar_call(
    callee: str,
    args: Sequence[Channel],
    target: Channel,
    tail: bool,
    cont: ProcessTerm | None = None,
    arity: int | None = None,
    annotation: SessionType | None = None,
) -> ProcessTerm:
    """
    Expand `target <- callee a1 ... an` into a cut on `callee` followed by one
    send per argument, each sending a forwarding payload. A tail call ends by
    forwarding the new channel to `target`; otherwise `cont` uses `target`.
    """
    if arity is not None and args and len(args) != arity:
        raise ArityMismatchError(f"'{callee}' expects {arity} channel argument(s), got {len(args)}")
    if tail:
        bound = fresh_channel(target, [target, *args])
        body: ProcessTerm = Fwd(target, bound)
    else:
        if cont is None:
            raise ValueError("a non-tail call needs a continuation")
        bound, body = target, cont
        if target in args:
            bound = fresh_channel(target, [*args, *free_channels(cont), target])
            body = subst_channel(cont, bound, target)
    for arg in reversed(args):
        payload_channel = Channel(arg.name, arg.gen + 1)
        body = SendFresh(bound, payload_channel, Fwd(payload_channel, arg), body)
    return Spawn(bound, annotation, Call(callee), body)


# ---------------------------------------------------------------------------
# Grammar
# ---------------------------------------------------------------------------


class _Resolver:
    """Name knowledge available once every declaration has been read."""

    def __init__(self, text: str, arities: Mapping[str, int]):
        self.text = text
        self.arities = arities

    def is_process(self, name: str) -> bool:
        return name in self.arities

    def fail(self, loc: int, message: str, error: type[ParseError] = ParseError) -> ParseError:
        return error(message, pp.lineno(loc, self.text), pp.col(loc, self.text))

    def channel(self, token: str, loc: int, binder: bool = False) -> Channel:
        name, _, gen = token.partition("#")
        if binder and self.is_process(name):
            raise self.fail(loc, f"channel '{name}' shadows the process definition of the same name")
        return Channel(name, int(gen) if gen else 0)


Builder = Callable[[_Resolver], ProcessTerm]


def _plain_name(s: str, loc: int, toks: pp.ParseResults) -> str:
    if "#" in toks[0]:
        raise pp.ParseFatalException(s, loc, "generated '#' names are only valid for channels")
    return toks[0]


def _fold(constructor: type, right: bool) -> Callable[[pp.ParseResults], SessionType]:
    def action(toks: pp.ParseResults) -> SessionType:
        operands = list(toks[0][0::2])
        if right:
            result = operands[-1]
            for operand in reversed(operands[:-1]):
                result = constructor(operand, result)
        else:
            result = operands[0]
            for operand in operands[1:]:
                result = constructor(result, operand)
        return result

    return action


def _type_grammar(ident: pp.ParserElement) -> pp.ParserElement:
    type_expr = pp.Forward()
    label = ident.copy().set_parse_action(_plain_name)
    branch = pp.Group(label + pp.Suppress(":") + type_expr)
    branches = pp.Suppress("{") + branch + pp.ZeroOrMore(pp.Suppress(",") + branch) + pp.Suppress("}")

    def choice(constructor: type) -> Callable[[str, int, pp.ParseResults], SessionType]:
        def action(s: str, loc: int, toks: pp.ParseResults) -> SessionType:
            try:
                return constructor(tuple((b[0], b[1]) for b in toks))
            except ValueError as exc:
                raise pp.ParseFatalException(s, loc, str(exc)) from exc

        return action

    internal = (pp.Suppress("+") + branches).set_parse_action(choice(Internal))
    external = (pp.Suppress("&") + branches).set_parse_action(choice(External))
    one = pp.Literal("1").set_parse_action(lambda: END)
    name = ident.copy().set_parse_action(lambda s, loc, toks: Name(_plain_name(s, loc, toks)))
    atom = one | internal | external | name
    type_expr <<= pp.infix_notation(
        atom,
        [
            (pp.Literal("*"), 2, pp.OpAssoc.RIGHT, _fold(Tensor, right=True)),
            (pp.Literal("-o"), 2, pp.OpAssoc.RIGHT, _fold(Lolli, right=True)),
            (pp.Literal("/\\"), 2, pp.OpAssoc.LEFT, _fold(Meet, right=False)),
            (pp.Literal("\\/"), 2, pp.OpAssoc.LEFT, _fold(Join, right=False)),
        ],
    )
    return type_expr


@dataclass
class _Grammar:
    type_expr: pp.ParserElement
    process: pp.ParserElement
    source: pp.ParserElement


def _build_grammar() -> _Grammar:
    keyword = pp.MatchFirst([pp.Keyword(k, ident_chars=_IDENT_CHARS) for k in KEYWORDS])
    ident = ~keyword + pp.Regex(r"[A-Za-z_][A-Za-z0-9_']*(?:#[0-9]+)?")

    type_expr = _type_grammar(ident)

    def kw(word: str) -> pp.ParserElement:
        return pp.Suppress(pp.Keyword(word, ident_chars=_IDENT_CHARS))

    ARROW, SEMI = pp.Suppress("<-"), pp.Suppress(";")
    LPAR, RPAR = pp.Suppress("("), pp.Suppress(")")

    proc = pp.Forward()
    loc_ident = pp.Group(pp.Located(ident))
    args = pp.Group(pp.ZeroOrMore(loc_ident))
    paren_proc = LPAR + proc + RPAR

    def at(located: pp.ParseResults) -> tuple[str, int]:
        return located[1][0], located[0]

    def close_action(toks: pp.ParseResults) -> Builder:
        ch = at(toks[0])
        return lambda r: Close(r.channel(*ch))

    def wait_action(toks: pp.ParseResults) -> Builder:
        ch, cont = at(toks[0]), toks[1]
        return lambda r: Wait(r.channel(*ch), cont(r))

    def select_action(toks: pp.ParseResults) -> Builder:
        ch, label, cont = at(toks[0]), toks[1], toks[2]
        return lambda r: Select(r.channel(*ch), label, cont(r))

    def recv_action(toks: pp.ParseResults) -> Builder:
        bound, ch, cont = at(toks[0]), at(toks[1]), toks[2]
        return lambda r: Recv(r.channel(*bound, binder=True), r.channel(*ch), cont(r))

    def case_action(toks: pp.ParseResults) -> Builder:
        ch = at(toks[0])
        arms = [(arm[0], arm[1]) for arm in toks[1:]]

        def build(r: _Resolver) -> ProcessTerm:
            labels = [label for label, _ in arms]
            if len(set(labels)) != len(labels):
                raise r.fail(ch[1], f"duplicate case labels on '{ch[0]}'")
            return Case(r.channel(*ch), tuple((label, body(r)) for label, body in arms))

        return build

    def call_or_forward(
        r: _Resolver,
        target: Channel,
        head: tuple[str, int],
        arg_tokens: Sequence[pp.ParseResults],
        cont: Builder | None,
        annotation: SessionType | None = None,
    ) -> ProcessTerm:
        name, loc = head
        if r.is_process(name):
            channels = [r.channel(*at(a)) for a in arg_tokens]
            try:
                return desugar_call(
                    name,
                    channels,
                    target,
                    tail=cont is None,
                    cont=cont(r) if cont is not None else None,
                    arity=r.arities[name],
                    annotation=annotation,
                )
            except ArityMismatchError as exc:
                raise r.fail(loc, exc.message, ArityMismatchError) from exc
        if annotation is not None:
            raise r.fail(loc, f"'{name}' is not a process definition")
        if arg_tokens or cont is not None:
            raise r.fail(loc, f"'{name}' is not a process definition; a forward takes a single channel and ends the process")
        return Fwd(target, r.channel(name, loc))

    def arrow_action(toks: pp.ParseResults) -> Builder:
        target, head, arg_tokens = at(toks[0]), at(toks[1]), list(toks[2])
        cont = toks[3] if len(toks) > 3 else None
        return lambda r: call_or_forward(r, r.channel(*target, binder=cont is not None), head, arg_tokens, cont)

    def cut_action(toks: pp.ParseResults) -> Builder:
        bound, child, cont = at(toks[0]), toks[1], toks[2]
        return lambda r: Spawn(r.channel(*bound, binder=True), None, child(r), cont(r))

    def annotated_action(toks: pp.ParseResults) -> Builder:
        bound, annotation = at(toks[0]), toks[1]
        if len(toks) == 4:
            child, cont = toks[2], toks[3]
            return lambda r: Spawn(r.channel(*bound, binder=True), annotation, child(r), cont(r))
        head, arg_tokens, cont = at(toks[2]), list(toks[3]), toks[4]
        return lambda r: call_or_forward(
            r, r.channel(*bound, binder=True), head, arg_tokens, cont, annotation=annotation
        )

    def send_action(toks: pp.ParseResults) -> Builder:
        ch, bound, payload, cont = at(toks[0]), at(toks[1]), toks[2], toks[3]

        def build(r: _Resolver) -> ProcessTerm:
            x = r.channel(*bound, binder=True)
            if isinstance(payload, pp.ParseResults):
                head, arg_tokens = at(payload[0]), list(payload[1])
                body = call_or_forward(r, x, head, arg_tokens, None)
            else:
                body = payload(r)
            return SendFresh(r.channel(*ch), x, body, cont(r))

        return build

    def bare_call_action(s: str, loc: int, toks: pp.ParseResults) -> Builder:
        name = _plain_name(s, loc, toks)

        def build(r: _Resolver) -> ProcessTerm:
            if not r.is_process(name):
                raise r.fail(loc, f"'{name}' is not a process definition")
            return Call(name)

        return build

    label = ident.copy().set_parse_action(_plain_name)
    close = (kw("close") + loc_ident).set_parse_action(close_action)
    wait = (kw("wait") + loc_ident + SEMI + proc).set_parse_action(wait_action)
    payload_call = pp.Group(loc_ident + args) + pp.FollowedBy(")")
    send = (
        kw("send") + loc_ident + LPAR + loc_ident + ARROW + (payload_call | paren_proc | proc) + RPAR + SEMI + proc
    ).set_parse_action(send_action)
    arm = pp.Group(label + pp.Suppress("=>") + proc)
    case = (
        kw("case") + loc_ident + kw("of") + pp.Suppress("{") + arm + pp.ZeroOrMore(pp.Suppress("|") + arm) + pp.Suppress("}")
    ).set_parse_action(case_action)
    recv = (loc_ident + ARROW + kw("recv") + loc_ident + SEMI + proc).set_parse_action(recv_action)
    annotated = (
        loc_ident + pp.Suppress(":") + type_expr + ARROW + (paren_proc | (loc_ident + args)) + SEMI + proc
    ).set_parse_action(annotated_action)
    cut = (loc_ident + ARROW + paren_proc + SEMI + proc).set_parse_action(cut_action)
    arrow = (loc_ident + ARROW + loc_ident + args + pp.Optional(SEMI + proc)).set_parse_action(arrow_action)
    select = (loc_ident + pp.Suppress(".") + label + SEMI + proc).set_parse_action(select_action)
    bare = ident.copy().set_parse_action(bare_call_action)

    proc <<= close | wait | send | case | recv | annotated | cut | arrow | select | paren_proc | bare

    type_decl = pp.Group(kw("type") + loc_ident + pp.Suppress("=") + type_expr)
    type_decl.set_parse_action(lambda toks: ("type", toks[0]))
    proc_decl = pp.Group(
        kw("proc") + loc_ident + pp.Suppress(":") + type_expr
        + loc_ident + ARROW + loc_ident + args + pp.Suppress("=") + proc
    )
    proc_decl.set_parse_action(lambda toks: ("proc", toks[0]))
    source = pp.ZeroOrMore(pp.Group(pp.Located(type_decl | proc_decl)))

    comment = pp.Suppress(pp.Regex(r"--[^\n]*"))
    for element in (source, proc, type_expr):
        element.ignore(comment)
    return _Grammar(type_expr=type_expr, process=proc, source=source)


_GRAMMAR = _build_grammar()


def _check_alphabet(text: str) -> None:
    without_comments = re.sub(r"--[^\n]*", lambda m: " " * len(m.group(0)), text)
    match = _FORBIDDEN.search(without_comments)
    if match:
        loc = match.start()
        raise LexicalError(f"unexpected character {match.group(0)!r}", pp.lineno(loc, text), pp.col(loc, text))


def _run(element: pp.ParserElement, text: str) -> pp.ParseResults:
    _check_alphabet(text)
    try:
        return element.parse_string(text, parse_all=True)
    except pp.ParseBaseException as exc:
        raise ParseError(exc.msg, exc.lineno, exc.col) from None


def _span(text: str, start: int, end: int) -> Span:
    return Span(pp.lineno(start, text), pp.col(start, text), pp.lineno(end, text), pp.col(end, text))


def parse_source(text: str) -> SourceFile:
    """Parse a whole file into desugared declarations with source spans."""
    results = _run(_GRAMMAR.source, text)
    raw = [(located[0], located[2], located[1][0]) for located in results]

    seen: dict[str, int] = {}
    arities: dict[str, int] = {}
    for start, _, (kind, decl) in raw:
        name_loc, name = decl[0][0], decl[0][1][0]
        if name in seen:
            raise DuplicateDefinitionError(
                f"{kind} '{name}' is already defined", pp.lineno(name_loc, text), pp.col(name_loc, text)
            )
        seen[name] = start
        if kind == "proc":
            arities[name] = len(decl[4])

    resolver = _Resolver(text, arities)
    source = SourceFile()
    for start, end, (kind, decl) in raw:
        name = decl[0][1][0]
        span = _span(text, start, end)
        if "#" in name:
            raise resolver.fail(decl[0][0], "generated '#' names are only valid for channels")
        if kind == "type":
            source.declarations.append(TypeDeclaration(name, decl[1], span))
            continue
        declared, offer_tok, header_tok, param_toks, body = decl[1], decl[2], decl[3], decl[4], decl[5]
        header_name, header_loc = header_tok[1][0], header_tok[0]
        if header_name != name:
            raise resolver.fail(header_loc, f"definition header names '{header_name}' but declares '{name}'")
        offer = resolver.channel(offer_tok[1][0], offer_tok[0], binder=True)
        params = tuple(resolver.channel(p[1][0], p[0], binder=True) for p in param_toks)
        term = body(resolver)
        for param in reversed(params):
            term = Recv(param, offer, term)
        source.declarations.append(ProcDeclaration(name, declared, offer, params, term, span))
    logger.debug("source parsed", declarations=len(source.declarations))
    return source


def parse_signature(text: str) -> Signature:
    return parse_source(text).signature()


def parse_type(text: str) -> SessionType:
    return _run(_GRAMMAR.type_expr, text)[0]


def parse_process(text: str, processes: Mapping[str, int] | Signature | None = None) -> ProcessTerm:
    """Parse a process term; `processes` names the definitions calls may refer to (with arities)."""
    if isinstance(processes, Signature):
        arities = {name: _leading_receives(d.body, d.offer) for name, d in processes.procdefs.items()}
    else:
        arities = dict(processes or {})
    builder = _run(_GRAMMAR.process, text)[0]
    return builder(_Resolver(text, arities))


def _leading_receives(body: ProcessTerm, offer: Channel) -> int:
    count = 0
    while isinstance(body, Recv) and body.ch == offer:
        count += 1
        body = body.cont
    return count

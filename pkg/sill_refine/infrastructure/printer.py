"""
Canonical concrete syntax for types, processes and signatures.

The output re-parses to the same tree: `parse_type(format_type(t)) == t` and
`parse_signature(format_signature(sig)) == sig`.
"""

from sill_refine.domain.ast import (
    Call,
    Case,
    Close,
    End,
    External,
    Fwd,
    Internal,
    Join,
    Lolli,
    Meet,
    Name,
    ProcessTerm,
    Recv,
    Select,
    SendFresh,
    SessionType,
    Signature,
    Spawn,
    Tensor,
    Wait,
)

# loosest binds first
_PRECEDENCE = {Join: 1, Meet: 2, Lolli: 3, Tensor: 4}
_ATOM = 5


def _level(ty: SessionType) -> int:
    return _PRECEDENCE.get(type(ty), _ATOM)


def format_type(ty: SessionType) -> str:
    match ty:
        case End():
            return "1"
        case Name(id=name):
            return name
        case Internal() | External():
            sigil = "+" if isinstance(ty, Internal) else "&"
            inner = ", ".join(f"{label}: {format_type(branch)}" for label, branch in ty.branches)
            return f"{sigil}{{{inner}}}"
        case Tensor(left=a, right=b):
            return _binary(ty, a, b, " * ", right_assoc=True)
        case Lolli(arg=a, cont=b):
            return _binary(ty, a, b, " -o ", right_assoc=True)
        case Meet(left=a, right=b):
            return _binary(ty, a, b, " /\\ ", right_assoc=False)
        case Join(left=a, right=b):
            return _binary(ty, a, b, " \\/ ", right_assoc=False)
    raise TypeError(f"not a session type: {ty!r}")


def _binary(ty: SessionType, a: SessionType, b: SessionType, op: str, right_assoc: bool) -> str:
    level = _level(ty)
    left_needs = _level(a) < level or (right_assoc and _level(a) == level)
    right_needs = _level(b) < level or (not right_assoc and _level(b) == level)
    left = f"({format_type(a)})" if left_needs else format_type(a)
    right = f"({format_type(b)})" if right_needs else format_type(b)
    return f"{left}{op}{right}"


def format_process(term: ProcessTerm) -> str:
    match term:
        case Spawn(bound=x, annotation=ann, child=child, cont=cont):
            head = f"{x} : {format_type(ann)} <- " if ann is not None else f"{x} <- "
            body = child.name if isinstance(child, Call) else f"({format_process(child)})"
            return f"{head}{body}; {format_process(cont)}"
        case Fwd(offer=c, source=d):
            return f"{c} <- {d}"
        case Close(ch=c):
            return f"close {c}"
        case Wait(ch=c, cont=cont):
            return f"wait {c}; {format_process(cont)}"
        case SendFresh(ch=c, bound=x, payload=payload, cont=cont):
            if isinstance(payload, Fwd) and payload.offer == x:
                inner = str(payload.source)
            else:
                inner = f"({format_process(payload)})"
            return f"send {c} ({x} <- {inner}); {format_process(cont)}"
        case Recv(bound=x, ch=c, cont=cont):
            return f"{x} <- recv {c}; {format_process(cont)}"
        case Select(ch=c, label=label, cont=cont):
            return f"{c}.{label}; {format_process(cont)}"
        case Case(ch=c, branches=branches):
            arms = " | ".join(f"{label} => {format_process(branch)}" for label, branch in branches)
            return f"case {c} of {{ {arms} }}"
        case Call(name=name):
            return name
    raise TypeError(f"not a process term: {term!r}")


def format_signature(sig: Signature) -> str:
    lines = [f"type {name} = {format_type(ty)}" for name, ty in sig.typedefs.items()]
    for definition in sig.procdefs.values():
        lines.append(f"proc {definition.name} : {format_type(definition.declared)}")
        lines.append(f"  {definition.offer} <- {definition.name} = {format_process(definition.body)}")
    return "\n".join(lines) + "\n"

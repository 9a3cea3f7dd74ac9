"""
sill-refine CLI

Command-line interface using Click: check signatures, query subtyping, and run
or trace closed process definitions.
"""

import itertools
import sys
from pathlib import Path
from typing import NoReturn

import click
import orjson
from rich.console import Console
from rich.markup import escape

from sill_refine.domain.ast import Signature, type_names
from sill_refine.domain.fidelity import FidelityViolation
from sill_refine.domain.runtime import (
    DEFAULT_FUEL,
    DEFAULT_SEED,
    ConfigurationError,
    Configuration,
    Outcome,
    RunResult,
    format_trace,
    run as run_configuration,
)
from sill_refine.domain.sigcheck import (
    DefinitionTypeError,
    NonContractiveError,
    SignatureError,
    UnresolvedNameError,
    check_contractive,
    check_names,
    check_signature,
)
from sill_refine.domain.subtype import MemoOverflowError, subtype as decide_subtype
from sill_refine.domain.typecheck import SessionTypeError
from sill_refine.infrastructure.logging import LOG_LEVELS, get_logger, setup_logging
from sill_refine.infrastructure.parser import ParseError, SourceFile, parse_source, parse_type
from sill_refine.infrastructure.printer import format_type

console = Console(stderr=True)

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_PARSE = 2
EXIT_IO = 3
EXIT_DEADLOCK = 4
EXIT_FUEL = 5
EXIT_FIDELITY = 6


def _fail(message: str, code: int) -> NoReturn:
    console.print(f"[red]{escape(message)}[/red]")
    sys.exit(code)


def _load(file: Path) -> SourceFile:
    logger = get_logger(__name__)
    try:
        text = file.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        _fail(f"{file}: not valid UTF-8 text ({e.reason} at byte {e.start})", EXIT_PARSE)
    except OSError as e:
        logger.error("Cannot read source file", file=str(file), error=str(e))
        _fail(f"{file}: {e.strerror or e}", EXIT_IO)
    try:
        return parse_source(text)
    except ParseError as e:
        logger.info("Parse failed", file=str(file), line=e.line, column=e.column)
        _fail(f"{file}:{e}", EXIT_PARSE)


def _report(file: Path, source: SourceFile, errors: list[SignatureError]) -> NoReturn:
    for error in errors:
        name = getattr(error, "name", None)
        span = source.span_of(name) if isinstance(error, DefinitionTypeError | NonContractiveError) else None
        where = f"{file}:{span}" if span else str(file)
        console.print(f"[red]{escape(where)}: {escape(str(error))}[/red]")
        if isinstance(error, DefinitionTypeError) and isinstance(error.cause, SessionTypeError):
            for line in error.cause.explain():
                console.print(f"  {escape(line)}", highlight=False)
    sys.exit(EXIT_REJECTED)


def _valid_signature(file: Path, source: SourceFile, full: bool = True) -> Signature:
    sig = source.signature()
    if full:
        errors = check_signature(sig)
    else:
        errors = list(check_names(sig)) or [NonContractiveError(n, c) for n, c in check_contractive(sig).offenders]
    if errors:
        _report(file, source, errors)
    return sig


def _execute(file: Path, entry: str, seed: int, fuel: int, no_check: bool) -> RunResult:
    logger = get_logger(__name__)
    source = _load(file)
    sig = source.signature() if no_check else _valid_signature(file, source)
    if entry not in sig.procdefs:
        _fail(f"{file}: no process definition named '{entry}'", EXIT_REJECTED)
    try:
        config = Configuration.for_entry(sig, entry, checked=not no_check)
    except ConfigurationError as e:
        _fail(str(e), EXIT_REJECTED)
    logger.info("Running definition", entry=entry, seed=seed, fuel=fuel)
    try:
        return run_configuration(config, seed=seed, fuel=fuel)
    except FidelityViolation as e:
        _fail(f"fidelity violation: {e}", EXIT_FIDELITY)


def _finish(result: RunResult) -> NoReturn:
    if result.outcome is Outcome.DEADLOCK:
        stuck = ", ".join(str(c) for c in sorted(result.final.procs))
        _fail(f"deadlock after {result.steps} steps; stuck processes: {stuck}", EXIT_DEADLOCK)
    if result.outcome is Outcome.FUEL_EXHAUSTED:
        _fail(f"fuel exhausted after {result.steps} steps", EXIT_FUEL)
    sys.exit(EXIT_OK)


def run_length(labels: list[str]) -> str:
    """`succ succ zero` becomes `succ×2 zero`."""
    parts = []
    for label, group in itertools.groupby(labels):
        count = len(list(group))
        parts.append(f"{label}×{count}" if count > 1 else label)
    return " ".join(parts)


seed_option = click.option(
    "--seed", type=int, default=DEFAULT_SEED, envvar="SILL_REFINE_SEED", show_default=True, help="Scheduler seed"
)
fuel_option = click.option(
    "--fuel", type=click.IntRange(min=0), default=DEFAULT_FUEL, envvar="SILL_REFINE_FUEL", show_default=True,
    help="Maximum number of steps",
)
no_check_option = click.option("--no-check", is_flag=True, help="Run without type checking the signature")


@click.group()
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default="warning",
    envvar="SILL_REFINE_LOG_LEVEL",
    help="Set logging level",
)
@click.option(
    "--log-file",
    type=click.Path(path_type=Path),
    help="Optional log file path for structured JSON logs",
)
@click.version_option(version="0.1.0", prog_name="sill-refine")
def cli(log_level: str, log_file: Path | None) -> None:
    """Session types with intersections and unions.

    Checks signatures of recursive session types and process definitions,
    decides subtyping, and runs closed definitions.

    \b
    Exit codes:
        0  success
        1  type error, or subtyping does not hold
        2  parse error, or an unknown name in a command-line type
        3  file cannot be read or written
        4  deadlock
        5  fuel exhausted
        6  session fidelity violation
    """
    setup_logging(
        log_level=log_level,
        log_file=log_file,
        enable_trace=(log_level.lower() == "trace")
    )


@cli.command()
@click.argument("file", type=click.Path(path_type=Path))
def check(file: Path) -> None:
    """Check every type and process definition in FILE.

    \b
    Examples:
        sill-refine check corpus.sill
    """
    source = _load(file)
    sig = _valid_signature(file, source)
    click.echo(f"{file}: ok ({len(sig.typedefs)} types, {len(sig.procdefs)} definitions)")


@cli.command()
@click.argument("file", type=click.Path(path_type=Path))
@click.argument("sub")
@click.argument("sup")
def subtype(file: Path, sub: str, sup: str) -> None:
    """Decide whether SUB is a subtype of SUP using the types defined in FILE.

    \b
    Examples:
        sill-refine subtype corpus.sill Pos Nat
        sill-refine subtype corpus.sill "(Even \\/ 1) /\\ (Odd \\/ 1)" "(Even /\\ Odd) \\/ 1"
    """
    logger = get_logger(__name__)
    source = _load(file)
    sig = _valid_signature(file, source, full=False)
    try:
        a, b = parse_type(sub), parse_type(sup)
    except ParseError as e:
        _fail(f"type expression {e}", EXIT_PARSE)
    for name in itertools.chain(type_names(a), type_names(b)):
        if name not in sig.typedefs:
            _fail(str(UnresolvedNameError(name, "the command line")), EXIT_PARSE)
    try:
        verdict = decide_subtype(sig, a, b)
    except MemoOverflowError as e:
        _fail(str(e), EXIT_REJECTED)
    logger.info("Subtyping decided", sub=sub, sup=sup, verdict=verdict)
    click.echo(f"{format_type(a)} <= {format_type(b)} : {'yes' if verdict else 'no'}")
    sys.exit(EXIT_OK if verdict else EXIT_REJECTED)


@cli.command()
@click.argument("file", type=click.Path(path_type=Path))
@click.argument("entry")
@seed_option
@fuel_option
@click.option("--trace", "trace_file", type=click.Path(path_type=Path), help="Write the step trace to this file")
@no_check_option
def run(file: Path, entry: str, seed: int, fuel: int, trace_file: Path | None, no_check: bool) -> None:
    """Run the closed definition ENTRY from FILE and print what it sends.

    \b
    Examples:
        sill-refine run corpus.sill main_double3 --seed 7
        sill-refine run corpus.sill main_inc7 --trace steps.txt
    """
    result = _execute(file, entry, seed, fuel, no_check)
    if trace_file is not None:
        try:
            trace_file.write_text(format_trace(result.trace), encoding="utf-8")
        except OSError as e:
            _fail(f"{trace_file}: {e.strerror or e}", EXIT_IO)
    for root, labels in result.observations.items():
        if labels:
            click.echo(run_length(labels))
        else:
            console.print(f"[yellow]nothing observed on '{escape(str(root))}'[/yellow]")
    _finish(result)


@cli.command()
@click.argument("file", type=click.Path(path_type=Path))
@click.argument("entry")
@seed_option
@fuel_option
@click.option("--json", "as_json", is_flag=True, help="Print the trace as a JSON array")
@no_check_option
def trace(file: Path, entry: str, seed: int, fuel: int, as_json: bool, no_check: bool) -> None:
    """Print every step of running ENTRY from FILE, one per line.

    \b
    Examples:
        sill-refine trace corpus.sill main_z
        sill-refine trace corpus.sill main_disp --json
    """
    result = _execute(file, entry, seed, fuel, no_check)
    if as_json:
        click.echo(orjson.dumps([event.as_dict() for event in result.trace], option=orjson.OPT_INDENT_2).decode())
    else:
        click.echo(format_trace(result.trace), nl=False)
    _finish(result)


if __name__ == "__main__":
    cli()

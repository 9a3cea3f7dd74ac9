"""
Behave step definitions for CLI testing.
Runs sill-refine as a subprocess and inspects exit codes, output and files.
"""

import json
import os
import shlex
import subprocess
import sys
from pathlib import Path

from behave import given, then, when


def _expand(context, text):
    return text.replace("$TMP", str(context.temp_dir))


@given("I have access to the sill-refine CLI")
def step_have_cli_access(context):
    context.cli_command = [sys.executable, "-m", "sill_refine.cli.main"]


@given('the environment variable "{var_name}" is set to "{var_value}"')
def step_set_environment_variable(context, var_name, var_value):
    if not hasattr(context, "env_vars"):
        context.env_vars = {}
    context.env_vars[var_name] = var_value


@given('a source file "{name}" containing')
def step_source_file(context, name):
    (context.temp_dir / name).write_text(context.text + "\n", encoding="utf-8")


@given('a source file "{name}" with the bytes "{data}"')
def step_binary_file(context, name, data):
    (context.temp_dir / name).write_bytes(data.encode("utf-8").decode("unicode_escape").encode("latin-1"))


@given('a copy of the corpus saved as "{name}" where "{old}" is replaced by "{new}"')
def step_corpus_variant(context, name, old, new):
    assert old in context.corpus_source, f"corpus does not contain '{old}'"
    (context.temp_dir / name).write_text(context.corpus_source.replace(old, new), encoding="utf-8")


@when('I run "{command}"')
def step_run_command(context, command):
    context.last_command = command
    command = _expand(context, command)
    if command.startswith("sill-refine"):
        args = shlex.split(command)[1:]
        full_command = context.cli_command + args
    else:
        full_command = shlex.split(command)
    env = os.environ.copy()
    env["PYTHONIOENCODING"] = "utf-8"
    env["COLUMNS"] = "240"
    if hasattr(context, "env_vars"):
        env.update(context.env_vars)
    try:
        result = subprocess.run(
            full_command, capture_output=True, text=True, encoding="utf-8", env=env, cwd=context.repo_root, timeout=120
        )
        context.cli_exit_code = result.returncode
        context.cli_output = result.stdout
        context.cli_error = result.stderr
    except subprocess.TimeoutExpired:
        context.cli_exit_code = -1
        context.cli_output = ""
        context.cli_error = "Command timed out"


@then("the exit code should be {expected_code:d}")
def step_check_exit_code(context, expected_code):
    actual_code = context.cli_exit_code
    assert actual_code == expected_code, (
        f"Expected exit code {expected_code}, but got {actual_code}. "
        f"Output: {context.cli_output}. Error: {context.cli_error}"
    )


@then('the standard output should be "{expected_text}"')
def step_stdout_is(context, expected_text):
    assert context.cli_output == expected_text + "\n", f"Expected '{expected_text}', got: {context.cli_output!r}"


@then('the output should contain "{expected_text}"')
def step_output_contains(context, expected_text):
    combined_output = context.cli_output + context.cli_error
    assert expected_text in combined_output, f"Expected output to contain '{expected_text}', but got: {combined_output}"


@then('the error output should contain "{expected_text}"')
def step_error_output_contains(context, expected_text):
    assert expected_text in context.cli_error, (
        f"Expected error output to contain '{expected_text}', but got: {context.cli_error}"
    )


@then("the standard output should be a JSON array of steps")
def step_stdout_is_json_trace(context):
    steps = json.loads(context.cli_output)
    assert isinstance(steps, list) and steps, f"Expected a non-empty JSON array, got: {context.cli_output}"
    for step in steps:
        assert set(step) == {"kind", "subjects", "label", "fresh"}, step
    context.json_trace = steps


@then('the JSON trace should end with a "{kind}" step labelled "{label}"')
def step_json_trace_ends(context, kind, label):
    last = context.json_trace[-1]
    assert (last["kind"], last["label"]) == (kind, label), last


@then('the file "{file_path}" should list one step per line')
def step_trace_file(context, file_path):
    path = Path(_expand(context, file_path))
    assert path.exists(), f"Expected file {path} to exist, but it doesn't"
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines, f"{path} is empty"
    kinds = {"fwd", "spawn", "defunfold", "close", "send-tensor", "select", "send-lolli", "case-recv"}
    for line in lines:
        assert line.split(" ")[0] in kinds, f"unexpected trace line: {line}"


@then("running it again should give the same output")
def step_rerun_identical(context):
    previous = (context.cli_exit_code, context.cli_output)
    step_run_command(context, context.last_command)
    assert (context.cli_exit_code, context.cli_output) == previous


# Structured JSON Logging Step Definitions

@then("the error output should contain structured JSON logs")
def step_output_contains_json_logs(context):
    """Check that standard error contains valid JSON log entries."""
    found_json_log = False
    for line in context.cli_error.splitlines():
        try:
            json_data = json.loads(line)
        except json.JSONDecodeError:
            continue
        if isinstance(json_data, dict) and "timestamp" in json_data and "level" in json_data:
            found_json_log = True
            break

    assert found_json_log, f"No structured JSON logs found in output: {context.cli_error}"


@then('the JSON logs should contain an event "{event}"')
def step_json_logs_contain_event(context, event):
    """Check that the JSON logs contain a given event."""
    events = []
    for line in context.cli_error.splitlines():
        try:
            json_data = json.loads(line)
        except json.JSONDecodeError:
            continue
        if isinstance(json_data, dict):
            events.append(json_data.get("event"))

    assert event in events, f"Event '{event}' not found in JSON logs: {events}"


@then("the JSON logs should contain trace context information")
def step_json_logs_contain_trace_context(context):
    """Check that JSON logs contain trace context information."""
    found_trace = False
    for line in context.cli_error.splitlines():
        try:
            json_data = json.loads(line)
        except json.JSONDecodeError:
            continue
        trace_data = json_data.get("trace") if isinstance(json_data, dict) else None
        if trace_data and "thread_id" in trace_data and "thread_name" in trace_data:
            found_trace = True
            break

    assert found_trace, "No trace context information found in JSON logs"


@then('a log file should be created at "{file_path}"')
def step_log_file_created(context, file_path):
    """Check that a log file was created."""
    log_file = Path(_expand(context, file_path))
    assert log_file.exists(), f"Log file {log_file} was not created"

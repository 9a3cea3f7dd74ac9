"""
Behave environment configuration for sill-refine tests.

Parses the bundled corpus once and provides a scratch directory for source
files, traces and logs written by CLI scenarios.
"""

import shutil
import tempfile
from pathlib import Path

from sill_refine.corpus import corpus_text
from sill_refine.infrastructure.logging import setup_logging
from sill_refine.infrastructure.parser import parse_signature

REPO_ROOT = Path(__file__).parent.parent


def before_all(context):
    """Set up test environment before all scenarios."""
    setup_logging(log_level="warning")

    context.repo_root = REPO_ROOT
    context.temp_dir = Path(tempfile.mkdtemp(prefix="sill_refine_test_"))
    context.corpus_path = REPO_ROOT / "sill_refine" / "corpus" / "corpus.sill"
    context.corpus_source = corpus_text()
    context.corpus = parse_signature(context.corpus_source)


def after_all(context):
    """Clean up test environment after all scenarios."""
    if context.temp_dir.exists():
        shutil.rmtree(context.temp_dir)


def before_scenario(context, scenario):
    """Reset scenario-specific state."""
    context.sig = context.corpus
    context.result = None
    context.error = None
    context.cli_exit_code = None
    context.cli_output = ""
    context.cli_error = ""

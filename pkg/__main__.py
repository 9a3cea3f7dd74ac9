#!/usr/bin/env python3
# /// script
# requires-python = ">=3.11"
# dependencies = [
#     "click>=8.1.0",
#     "orjson>=3.9.0",
#     "rich>=13.0.0",
#     "structlog==23.2.0",
#     "pyparsing>=3.1.0",
#     "networkx>=3.0",
# ]
# ///
"""
sill-refine

Checker and simulator for session-typed processes with intersection and union
refinements.

Usage:
    uv run __main__.py check sill_refine/corpus/corpus.sill
    uv run __main__.py run sill_refine/corpus/corpus.sill main_double3
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from sill_refine.cli.main import cli

if __name__ == "__main__":
    cli()

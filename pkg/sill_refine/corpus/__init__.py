"""The example signature shipped with the package."""

from importlib import resources

CORPUS_NAME = "corpus.sill"


def corpus_text() -> str:
    return resources.files(__package__).joinpath(CORPUS_NAME).read_text(encoding="utf-8")

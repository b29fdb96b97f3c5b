"""Python bindings for the storyplan toolkit.

Annotation records and placeholder tables cross the boundary as JSON; the
helpers here accept and return plain dicts.
"""

import json as _json

from . import _storyplan
from ._storyplan import (
    StageError,
    ValidationError,
    build_verb_mask,
    detokenize,
    lcs_length,
    lemmatize_verb,
    pointer_copy_prob,
    run_cli,
    sample_top_k,
    tokenize,
    top_k_distribution,
    verb_diversity,
)

__all__ = [
    "StageError",
    "ValidationError",
    "annotate_fallback",
    "anonymize",
    "build_verb_mask",
    "deanonymize",
    "detokenize",
    "gold_fills",
    "import_annotations",
    "lcs_length",
    "lemmatize_verb",
    "pointer_copy_prob",
    "run_cli",
    "sample_top_k",
    "srl_plan",
    "tokenize",
    "top_k_distribution",
    "verb_diversity",
]


def import_annotations(text, record):
    return _json.loads(_storyplan.import_annotations(text, _json.dumps(record)))


def annotate_fallback(text):
    return _json.loads(_storyplan.annotate_fallback(text))


def srl_plan(text, record):
    return _storyplan.srl_plan(text, _json.dumps(record))


def anonymize(text, record, scheme="ner", cap=64):
    """Returns (tokens, table)."""
    tokens, table = _storyplan.anonymize(text, _json.dumps(record), scheme, cap)
    return tokens, _json.loads(table)


def gold_fills(tokens, table):
    return _storyplan.gold_fills(tokens, _json.dumps(table))


def deanonymize(tokens, table, fills):
    return _storyplan.deanonymize(tokens, _json.dumps(table), fills)

"""Python bindings for the Concept Canvas pipeline."""

import json

from . import _core
from ._core import CanvasError, tokenize, update_k

__all__ = [
    "CanvasError",
    "Pipeline",
    "config",
    "discriminative_terms",
    "tfidf",
    "tokenize",
    "update_k",
]


def _dumps(value):
    return "" if value is None else json.dumps(value)


def config(toy=False, overrides=None):
    """Effective nested config: defaults, then the toy preset, then overrides."""
    return json.loads(_core.config(toy, _dumps(overrides)))


def tfidf(corpus_jsonl, min_df=2, max_df_fraction=0.9):
    """Returns (row_ids, vocabulary, matrix) for a JSONL corpus string."""
    return _core.tfidf(corpus_jsonl, min_df, max_df_fraction)


def discriminative_terms(corpus_jsonl, k_pos=15, k_neg=15, overrides=None):
    return json.loads(_core.discriminative_terms(corpus_jsonl, k_pos, k_neg, _dumps(overrides)))


class Pipeline:
    def __init__(self, root):
        self._p = _core.Pipeline(str(root))

    def list_runs(self):
        return self._p.list_runs()

    def create_run(self, theme, corpus, mode="generative", run_id="", toy=False, config=None):
        return self._p.create_run(theme, str(corpus), mode, run_id, toy, _dumps(config))

    def manifest(self, run_id):
        return json.loads(self._p.manifest(run_id))

    def advance(self, run_id, stages=1, auto_gates=False):
        return json.loads(self._p.advance(run_id, stages, auto_gates))

    def current_gate(self, run_id, page=1, size=0):
        return json.loads(self._p.current_gate(run_id, page, size))

    def resolve_gate(self, run_id, gate, selection, actor="python"):
        return json.loads(self._p.resolve_gate(run_id, gate, json.dumps(selection), actor))

    def retry(self, run_id):
        return json.loads(self._p.retry(run_id))

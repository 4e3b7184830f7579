from __future__ import annotations

import pytest

import helpers
from casegraph.kb import load_lexicon, load_triples


@pytest.fixture
def lexicon(tmp_path):
    path = tmp_path / "lexicon.tsv"
    path.write_text(helpers.FIXTURE_LEXICON_TSV, encoding="utf-8")
    return load_lexicon(path)


@pytest.fixture
def kb(tmp_path):
    path = tmp_path / "triples.tsv"
    path.write_text(helpers.FIXTURE_TRIPLES_TSV, encoding="utf-8")
    return load_triples(path)

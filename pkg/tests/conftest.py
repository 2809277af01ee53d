"""Shared fixtures: small synthetic corpora with learnable type patterns."""

from __future__ import annotations

import pytest

from hintspace.extract import extract_graph

WORDS = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    "iota", "kappa", "lamda", "mu", "nu", "xi", "omicron", "pi", "rho",
    "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega",
]

TYPED_TEMPLATE = """\
def count_{w}(values: List[int]) -> int:
    total = 0
    for item in values:
        total = total + item
    return total


def label_{w}(name: str) -> str:
    prefix = name
    tagged = prefix
    return tagged


def verify_{w}(flag: bool) -> bool:
    status = flag
    return status
"""

WIDGET_TEMPLATE = """\
class Widget:
    pass


def spawn_{w}(widget_seed: int) -> Widget:
    fresh_widget = Widget()
    return fresh_widget
"""


def typed_source(word: str) -> str:
    return TYPED_TEMPLATE.format(w=word)


def widget_source(word: str) -> str:
    return WIDGET_TEMPLATE.format(w=word)


def typed_corpus(n_files: int) -> list:
    """n files of the int/str/bool patterns, distinct suffix per file."""
    assert n_files <= len(WORDS)
    return [
        extract_graph(typed_source(WORDS[i]), file_id=f"typed_{WORDS[i]}.py")
        for i in range(n_files)
    ]


@pytest.fixture(scope="session")
def small_corpus():
    return typed_corpus(6)


@pytest.fixture(scope="session")
def overfit_corpus():
    return typed_corpus(20)

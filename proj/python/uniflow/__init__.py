"""Desk-scale unified image understanding and generation (C++ core)."""

from ._core import (
    Model,
    UniflowError,
    classify,
    detokenize,
    gradcheck,
    make_corpus,
    render,
    tokenize,
    train,
    vocab_size,
)

__all__ = [
    "Model",
    "UniflowError",
    "classify",
    "detokenize",
    "gradcheck",
    "make_corpus",
    "render",
    "tokenize",
    "train",
    "vocab_size",
]

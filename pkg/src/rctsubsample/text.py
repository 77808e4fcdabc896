"""Bag-of-words vocabulary and binary document features."""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from ._stopwords import STOPWORDS, STOPWORDS_VERSION
from .exceptions import DatasetError

TOKEN_PATTERN = re.compile(r"(?u)\b\w\w+\b")
_NUMBER = re.compile(r"(?u)\d+")


def strip_accents(text: str) -> str:
    """Drop combining marks after NFKD decomposition ("café" -> "cafe")."""
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def tokenize(text: str, stopwords=STOPWORDS) -> list[str]:
    """Lowercase, accent-stripped unigrams of two or more word characters,
    minus stopwords and tokens made only of digits."""
    text = strip_accents(str(text).lower())
    return [t for t in TOKEN_PATTERN.findall(text) if t not in stopwords and not _NUMBER.fullmatch(t)]


@dataclass(frozen=True)
class Vocabulary:
    """Ordered unigram list with document frequencies and the parameters that built it."""

    terms: tuple
    document_frequency: tuple
    n_documents: int
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self.index

    @property
    def index(self) -> dict:
        return {t: j for j, t in enumerate(self.terms)}


def build_vocabulary(
    corpus: Sequence[str],
    *,
    min_df: int = 5,
    max_df: float = 0.10,
    max_features: int = 2000,
) -> Vocabulary:
    """Vocabulary of terms found in at least ``min_df`` documents and at most
    a ``max_df`` fraction of them.

    Survivors are ranked by descending document frequency, ties broken
    alphabetically, and the first ``max_features`` are kept in that order.
    """
    corpus = list(corpus)
    if not corpus:
        raise DatasetError("cannot build a vocabulary from an empty corpus")
    if not 0.0 < max_df <= 1.0:
        raise ValueError("max_df is a document fraction in (0, 1]")
    df = Counter()
    for doc in corpus:
        df.update(set(tokenize(doc)))
    upper = max_df * len(corpus)
    kept = [(t, c) for t, c in df.items() if min_df <= c <= upper]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    kept = kept[:max_features]
    if not kept:
        raise DatasetError(
            f"no term survives the document-frequency filters (min_df={min_df}, max_df={max_df}, "
            f"{len(corpus)} documents)"
        )
    params = {
        "min_df": min_df,
        "max_df": max_df,
        "max_features": max_features,
        "stopwords": STOPWORDS_VERSION,
        "token_pattern": TOKEN_PATTERN.pattern,
    }
    return Vocabulary(tuple(t for t, _ in kept), tuple(c for _, c in kept), len(corpus), params)


def featurize(corpus: Iterable[str], vocab: Vocabulary) -> sp.csr_matrix:
    """Binary document-term indicators; column ``j`` is ``vocab.terms[j]``."""
    index = vocab.index
    indptr, indices = [0], []
    for doc in corpus:
        cols = sorted({index[t] for t in tokenize(doc) if t in index})
        indices.extend(cols)
        indptr.append(len(indices))
    data = np.ones(len(indices), dtype=np.float64)
    return sp.csr_matrix(
        (data, np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, len(vocab)),
    )

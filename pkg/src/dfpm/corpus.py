"""Corpus ingestion: tokenization, vocabulary, TF-IDF vectors, negative
sampling, and per-user train/validation/test splits.

Feature weighting is raw term frequency times ln(corpus_size / doc_freq),
followed by per-document L2 normalization; this exact formula is part of
the artifact's contract so results are comparable across runs. Stop-words
are removed before stemming against the fixed list in
:mod:`dfpm.stopwords`; stemming defaults on and can be disabled.

File formats owned by this module:

* documents: JSON-lines, one ``{"id", "text"}`` object per line, UTF-8;
* interactions: tab-separated ``user_id<TAB>item_id``, no header;
* vocabulary: JSON with ``corpus_size``, ``min_df`` and ``terms`` (a list
  of ``{"term", "doc_freq"}`` in canonical index order);
* datasets: JSON-lines with a leading header object carrying ``K`` and
  ``vocab_fingerprint``, then one example per line with ``user_id``,
  ``item_id``, ``split``, ``features`` (``[[index, weight], ...]``) and
  ``label``.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .porter import stem
from .stopwords import STOPWORDS

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DATASET_FORMAT = "dfpm-dataset"


@dataclass(frozen=True)
class Document:
    """One recommendable text item (title and body already concatenated)."""

    id: str
    text: str


@dataclass(frozen=True)
class Vocabulary:
    """Canonical feature index: term order defines feature ids 0..K-1."""

    terms: tuple[str, ...]
    doc_freq: tuple[int, ...]
    corpus_size: int
    min_df: int

    def __post_init__(self):
        if len(self.terms) != len(self.doc_freq):
            raise DataError("terms and doc_freq lengths differ")

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def index(self) -> dict[str, int]:
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = {t: i for i, t in enumerate(self.terms)}
            self.__dict__["_index"] = idx
        return idx

    def fingerprint(self) -> str:
        """SHA-256 over the canonical serialized form."""
        payload = json.dumps(
            {
                "corpus_size": self.corpus_size,
                "min_df": self.min_df,
                "terms": [{"term": t, "doc_freq": d} for t, d in zip(self.terms, self.doc_freq)],
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class SparseVector:
    """Sparse feature vector: strictly increasing indices, no stored zeros."""

    __slots__ = ("indices", "values")

    def __init__(self, indices, values):
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if indices.shape != values.shape or indices.ndim != 1:
            raise ValueError("indices and values must be 1-d and aligned")
        if indices.size and not np.all(np.diff(indices) > 0):
            raise ValueError("indices must be strictly increasing")
        if np.any(values == 0.0):
            raise ValueError("zero-valued entries must not be stored")
        self.indices = indices
        self.values = values

    @classmethod
    def empty(cls) -> "SparseVector":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))

    @classmethod
    def from_pairs(cls, pairs) -> "SparseVector":
        pairs = sorted((int(i), float(v)) for i, v in pairs)
        return cls([i for i, _ in pairs], [v for _, v in pairs])

    def to_pairs(self) -> list[list]:
        return [[int(i), float(v)] for i, v in zip(self.indices, self.values)]

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def dot(self, w: np.ndarray) -> float:
        return float(w[self.indices] @ self.values) if self.nnz else 0.0

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __eq__(self, other):
        return (
            isinstance(other, SparseVector)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SparseVector({self.to_pairs()})"


@dataclass(frozen=True)
class LabeledExample:
    """One (item, features, relevance) triple; label is +1 or -1."""

    item_id: str
    features: SparseVector
    label: int

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.label}")


@dataclass
class UserDataset:
    """One user's labeled examples partitioned into train/validation/test.

    ``split_warning`` is set when validation or test came out empty (too
    few examples to populate all three parts).
    """

    user_id: str
    train: list[LabeledExample] = field(default_factory=list)
    validation: list[LabeledExample] = field(default_factory=list)
    test: list[LabeledExample] = field(default_factory=list)
    split_warning: bool = False

    def all_examples(self) -> list[LabeledExample]:
        return list(self.train) + list(self.validation) + list(self.test)

    @property
    def n_train_positives(self) -> int:
        return sum(1 for ex in self.train if ex.label == 1)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def tokenize(text: str, stem_tokens: bool = True) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop stop-words, stem.

    Stop-words are removed before stemming; stemming is on by default.
    """
    tokens = _TOKEN_RE.findall(text.lower())
    kept = (t for t in tokens if t not in STOPWORDS)
    if stem_tokens:
        return [stem(t) for t in kept]
    return list(kept)


def build_vocabulary(docs, min_df: int, stem_tokens: bool = True) -> Vocabulary:
    """Vocabulary of tokens appearing in at least ``min_df`` documents.

    Terms are sorted lexicographically for a canonical feature index.
    Order-insensitive in the document list. Stems that collide with a
    stop-word string are excluded so the vocabulary stays stop-word free.
    """
    if min_df < 1:
        raise ValueError(f"min_df must be >= 1, got {min_df}")
    df: Counter = Counter()
    n = 0
    for doc in docs:
        n += 1
        df.update(set(tokenize(doc.text, stem_tokens)))
    terms = sorted(t for t, c in df.items() if c >= min_df and t not in STOPWORDS)
    return Vocabulary(
        terms=tuple(terms),
        doc_freq=tuple(df[t] for t in terms),
        corpus_size=n,
        min_df=min_df,
    )


def vectorize(doc: Document, vocab: Vocabulary, stem_tokens: bool = True) -> SparseVector:
    """TF-IDF vector of ``doc``: tf * ln(N/df), then L2-normalized.

    Out-of-vocabulary terms are dropped; a document with no in-vocabulary
    terms (or only zero idf terms) yields an empty vector.
    """
    if len(vocab) == 0:
        raise ValueError("cannot vectorize against an empty vocabulary")
    counts = Counter(tokenize(doc.text, stem_tokens))
    idx_of = vocab.index
    entries = []
    for term, tf in counts.items():
        i = idx_of.get(term)
        if i is None:
            continue
        w = tf * math.log(vocab.corpus_size / vocab.doc_freq[i])
        if w != 0.0:
            entries.append((i, w))
    if not entries:
        return SparseVector.empty()
    entries.sort()
    indices = [i for i, _ in entries]
    values = np.array([w for _, w in entries], dtype=np.float64)
    values /= np.linalg.norm(values)
    return SparseVector(indices, values)


def sample_negatives(
    user_positive_ids: set,
    corpus_ids: set,
    n: int,
    seed: int,
    user_id: str = "",
) -> set:
    """Draw ``n`` item ids uniformly without replacement from the non-positives.

    Deterministic given ``seed`` (candidates are sorted before sampling so
    the draw does not depend on set iteration order).
    """
    candidates = sorted(corpus_ids - set(user_positive_ids))
    if len(candidates) < n:
        who = f" for user {user_id!r}" if user_id else ""
        raise DataError(
            f"cannot sample {n} negatives{who}: only {len(candidates)} "
            f"non-positive items available (short by {n - len(candidates)})"
        )
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(candidates, size=n, replace=False).tolist()) if n else set()
    assert not (chosen & set(user_positive_ids))
    return chosen


def split_dataset(examples, ratios, seed: int, user_id: str = "") -> UserDataset:
    """Shuffle under ``seed`` and partition contiguously into train/val/test.

    Part sizes are floor(n * ratio) with every leftover example going to
    train. Fewer than 3 examples put everything in train. The result's
    ``split_warning`` flags an empty validation or test part.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"need three positive ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    examples = list(examples)
    n = len(examples)
    if n < 3:
        return UserDataset(user_id=user_id, train=examples, split_warning=True)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [examples[i] for i in order]
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test  # floor(n*r0) plus all leftovers
    parts = (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )
    return UserDataset(
        user_id=user_id,
        train=parts[0],
        validation=parts[1],
        test=parts[2],
        split_warning=(n_val == 0 or n_test == 0),
    )


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def read_documents(path) -> list[Document]:
    docs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc = Document(id=str(obj["id"]), text=str(obj["text"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"malformed document record ({exc})", line=lineno) from exc
            if doc.id in seen:
                raise DataError(f"duplicate document id {doc.id!r}", line=lineno)
            seen.add(doc.id)
            docs.append(doc)
    return docs


def write_documents(path, docs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({"id": doc.id, "text": doc.text}) + "\n")


def read_interactions(path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not cols[0] or not cols[1]:
                raise DataError(f"expected 'user_id<TAB>item_id', got {line!r}", line=lineno)
            pairs.append((cols[0], cols[1]))
    return pairs


def write_interactions(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user_id, item_id in pairs:
            fh.write(f"{user_id}\t{item_id}\n")


def save_vocabulary(vocab: Vocabulary, path) -> None:
    payload = {
        "corpus_size": vocab.corpus_size,
        "min_df": vocab.min_df,
        "terms": [{"term": t, "doc_freq": d} for t, d in zip(vocab.terms, vocab.doc_freq)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_vocabulary(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
            return Vocabulary(
                terms=tuple(str(e["term"]) for e in obj["terms"]),
                doc_freq=tuple(int(e["doc_freq"]) for e in obj["terms"]),
                corpus_size=int(obj["corpus_size"]),
                min_df=int(obj["min_df"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed vocabulary file {path}: {exc}") from exc


def save_datasets(path, datasets, K: int, vocab_fingerprint: str) -> None:
    """Write UserDatasets as JSON-lines with a leading header object."""
    header = {
        "format": DATASET_FORMAT,
        "format_version": 1,
        "K": int(K),
        "vocab_fingerprint": vocab_fingerprint,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for ds in datasets:
            for split_name in ("train", "validation", "test"):
                for ex in getattr(ds, split_name):
                    fh.write(
                        json.dumps(
                            {
                                "user_id": ds.user_id,
                                "item_id": ex.item_id,
                                "split": split_name,
                                "features": ex.features.to_pairs(),
                                "label": ex.label,
                            }
                        )
                        + "\n"
                    )


def load_datasets(path) -> tuple[list[UserDataset], int, str]:
    """Read a datasets file; returns (datasets, K, vocab_fingerprint)."""
    datasets: dict[str, UserDataset] = {}
    K = None
    fingerprint = ""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed dataset line ({exc})", line=lineno) from exc
            if lineno == 1 and obj.get("format") == DATASET_FORMAT:
                K = int(obj["K"])
                fingerprint = str(obj.get("vocab_fingerprint", ""))
                continue
            try:
                ex = LabeledExample(
                    item_id=str(obj["item_id"]),
                    features=SparseVector.from_pairs(obj["features"]),
                    label=int(obj["label"]),
                )
                user_id = str(obj["user_id"])
                split_name = obj["split"]
                if split_name not in ("train", "validation", "test"):
                    raise ValueError(f"unknown split {split_name!r}")
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"malformed example record ({exc})", line=lineno) from exc
            ds = datasets.setdefault(user_id, UserDataset(user_id=user_id))
            getattr(ds, split_name).append(ex)
    if K is None:
        raise DataError(f"{path} has no {DATASET_FORMAT} header line")
    out = list(datasets.values())
    for ds in out:
        ds.split_warning = not ds.validation or not ds.test
        for ex in ds.all_examples():
            if ex.features.nnz and int(ex.features.indices[-1]) >= K:
                raise DataError(
                    f"feature index {int(ex.features.indices[-1])} out of range for K={K} "
                    f"(user {ds.user_id!r}, item {ex.item_id!r})"
                )
    return out, K, fingerprint

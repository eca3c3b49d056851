"""Per-token input vectors: GloVe text tables and precomputed contextual files.

Static tables are loaded from the plain GloVe text format ("token v1 ... vd",
whitespace-separated, UTF-8). Contextual embeddings (e.g. transformer or
language-model layers) are computed offline and ingested from a JSON-lines
file with one object per utterance: {"id": str, "layer": int,
"vectors": [[float, ...], ...]}.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, IntegrityError, ParseError

UNK_TOKEN = "<unk>"
UNK_POLICIES = ("zero_vector", "unk_token", "mean_vector")


@dataclass
class EmbeddingTable:
    """Immutable static token-vector table with a total lookup."""

    dim: int
    vocab: dict[str, int]
    matrix: np.ndarray
    unk_policy: str = "zero_vector"
    _mean: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.unk_policy not in UNK_POLICIES:
            raise ContractError(f"unknown unk_policy {self.unk_policy!r}")
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.dim:
            raise ContractError("matrix width does not match dim")
        if self.vocab and max(self.vocab.values()) >= self.matrix.shape[0]:
            raise ContractError("vocab index outside matrix")
        if self.unk_policy == "unk_token" and UNK_TOKEN not in self.vocab:
            raise ContractError(
                f"unk_token policy requires {UNK_TOKEN!r} in the vocabulary")

    def lookup(self, token: str) -> np.ndarray:
        """Vector for `token`; never fails (unknowns follow unk_policy)."""
        row = self.vocab.get(token)
        if row is not None:
            return self.matrix[row]
        if self.unk_policy == "zero_vector":
            return np.zeros(self.dim)
        if self.unk_policy == "unk_token":
            return self.matrix[self.vocab[UNK_TOKEN]]
        if self._mean is None:
            # cache; cheap relative to load and keeps lookup deterministic
            object.__setattr__(self, "_mean", self.matrix.mean(axis=0))
        return self._mean

    def __contains__(self, token: str) -> bool:
        return token in self.vocab


@dataclass
class PrecomputedEmbeddings:
    """Offline-computed contextual vectors, one row per target token."""

    dim: int
    layer_id: int
    table: dict[str, np.ndarray]

    def vectors_for(self, utterance_id: str) -> np.ndarray:
        if utterance_id not in self.table:
            raise KeyError(
                f"no precomputed vectors for utterance {utterance_id!r}")
        return self.table[utterance_id]


def load_glove(path, unk_policy: str = "zero_vector") -> EmbeddingTable:
    """Parse a GloVe text file; duplicate tokens keep the first occurrence."""
    path = Path(path)
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise ParseError("line has no vector values", line=line_num)
            elif len(values) != dim:
                raise ParseError(
                    f"expected {dim} values, got {len(values)}", line=line_num)
            if token in vocab:
                continue
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise ParseError("non-numeric vector value", line=line_num) from None
            vocab[token] = len(rows)
            rows.append(vec)
    if dim is None:
        raise ParseError("empty embedding file", line=1)
    return EmbeddingTable(dim=dim, vocab=vocab,
                          matrix=np.vstack(rows), unk_policy=unk_policy)


def save_glove(table: EmbeddingTable, path) -> None:
    """Write the table in GloVe text format; load_glove round-trips exactly."""
    ordered = sorted(table.vocab.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for token, row in ordered:
            values = " ".join(repr(float(v)) for v in table.matrix[row])
            fh.write(f"{token} {values}\n")


def load_precomputed(path) -> PrecomputedEmbeddings:
    """Read a JSON-lines precomputed-embedding file, validating uniformity."""
    path = Path(path)
    table: dict[str, np.ndarray] = {}
    dim = None
    layer_id = None
    with open(path, encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise ParseError("invalid JSON object", line=line_num) from None
            try:
                rid = obj["id"]
                layer = int(obj["layer"])
                vectors = obj["vectors"]
            except (KeyError, TypeError):
                raise ParseError(
                    "object must have id, layer, vectors", line=line_num) from None
            arr = np.array(vectors, dtype=float)
            if arr.ndim != 2:
                raise ParseError(
                    "vectors must be a non-empty list of equal-length rows",
                    line=line_num)
            if dim is None:
                dim, layer_id = arr.shape[1], layer
            else:
                if arr.shape[1] != dim:
                    raise ParseError(
                        f"dim {arr.shape[1]} != file dim {dim}", line=line_num)
                if layer != layer_id:
                    raise ParseError(
                        f"layer {layer} != file layer {layer_id}", line=line_num)
            if rid in table:
                raise ParseError(f"duplicate utterance id {rid!r}", line=line_num)
            table[rid] = arr
    if dim is None:
        raise ParseError("empty precomputed-embedding file", line=1)
    return PrecomputedEmbeddings(dim=dim, layer_id=layer_id, table=table)


def save_precomputed(embeddings: PrecomputedEmbeddings, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for rid in sorted(embeddings.table):
            obj = {"id": rid, "layer": embeddings.layer_id,
                   "vectors": embeddings.table[rid].tolist()}
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def embed_utterance(record, source, with_context: bool = False) -> np.ndarray:
    """Input matrix for one (already truncated) record.

    Static tables look up context + target tokens (context prepended when
    with_context is set). Precomputed sources return target vectors only:
    their context was consumed offline, so the stored rows already reflect
    it and must match the target token count exactly.
    """
    if isinstance(source, PrecomputedEmbeddings):
        vectors = source.vectors_for(record.id)
        if vectors.shape[0] != len(record.tokens):
            raise IntegrityError(
                f"utterance {record.id!r}: {vectors.shape[0]} precomputed "
                f"vectors for {len(record.tokens)} tokens")
        return vectors
    tokens = list(record.tokens)
    if with_context:
        tokens = list(record.context_tokens) + tokens
    return np.vstack([source.lookup(t) for t in tokens])


_PUNCT = set(string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenizer that detaches edge punctuation.

    Only for ad-hoc command-line input; corpus files carry token lists
    that are already segmented.
    """
    out: list[str] = []
    for chunk in text.lower().split():
        left: list[str] = []
        while chunk and chunk[0] in _PUNCT:
            left.append(chunk[0])
            chunk = chunk[1:]
        right: list[str] = []
        while chunk and chunk[-1] in _PUNCT:
            right.append(chunk[-1])
            chunk = chunk[:-1]
        out.extend(left)
        if chunk:
            out.append(chunk)
        out.extend(reversed(right))
    return out

"""Vocabularies with low-frequency fallback and word-vector table loading.

Lemma vocabularies replace rare lemmas by their POS symbol, so a token
always resolves as long as its POS was seen at build time.  Word-vector
files use the text format "<count> <dim>" header followed by one
"<symbol> <v1> ... <v_dim>" line per symbol.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DIRECTIONS, Sentence

log = logging.getLogger(__name__)

PAD = "PAD"
PATH_GAP = "PATH-GAP"
SPECIALS = (PAD, PATH_GAP)

KIND_LEMMA = "lemma"
KIND_POS = "pos"
KIND_DIRECTION = "direction"


@dataclass(frozen=True)
class Vocabulary:
    entries: dict[str, int]  # symbol -> contiguous id starting at 0
    kind: str

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.entries

    def id_of(self, symbol: str) -> int:
        return self.entries[symbol]

    def lookup(self, lemma: str, pos: str) -> int:
        """Lemma's id when present, otherwise the POS fallback symbol's id."""
        got = self.entries.get(lemma)
        if got is not None:
            return got
        got = self.entries.get(pos)
        if got is None:
            raise KeyError(f"neither lemma {lemma!r} nor POS {pos!r} in {self.kind} vocabulary")
        return got

    def symbols(self) -> list[str]:
        """Symbols in id order."""
        out = [""] * len(self.entries)
        for sym, i in self.entries.items():
            out[i] = sym
        return out


def _assign_ids(symbols: set[str]) -> dict[str, int]:
    entries = {PAD: 0, PATH_GAP: 1}
    for sym in sorted(symbols - set(SPECIALS)):
        entries[sym] = len(entries)
    return entries


def build_vocab(corpus: list[Sentence], kind: str, min_count: int = 1) -> Vocabulary:
    """Collect symbols of one kind from a corpus.

    For the lemma kind, lemmas seen fewer than min_count times are dropped
    and every POS symbol is kept as the fallback target.  PAD and PATH-GAP
    are always present.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if kind == KIND_DIRECTION:
        return Vocabulary(_assign_ids(set(DIRECTIONS)), kind)
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if kind == KIND_POS:
        symbols = {t.pos for s in corpus for t in s.tokens}
    elif kind == KIND_LEMMA:
        counts = Counter(t.lemma for s in corpus for t in s.tokens)
        symbols = {lemma for lemma, n in counts.items() if n >= min_count}
        symbols |= {t.pos for s in corpus for t in s.tokens}
    else:
        raise ValueError(f"unknown vocabulary kind {kind!r}")
    return Vocabulary(_assign_ids(symbols), kind)


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    dim: int
    weights: np.ndarray  # |vocab| x dim
    trainable: bool = True


def random_table(vocab: Vocabulary, dim: int, rng: np.random.Generator,
                 dtype=np.float32, trainable: bool = True) -> EmbeddingTable:
    """Fresh table with every row drawn from uniform(-0.05, 0.05)."""
    weights = rng.uniform(-0.05, 0.05, size=(len(vocab), dim)).astype(dtype)
    return EmbeddingTable(vocab, dim, weights, trainable)


def load_pretrained(path: str | Path, vocab: Vocabulary, rng: np.random.Generator,
                    expected_dim: int | None = None,
                    dtype=np.float32) -> tuple[EmbeddingTable, int]:
    """Load vectors for a vocabulary from a word-vector text file.

    Rows for symbols present in the file are copied; the rest start from
    uniform(-0.05, 0.05) noise.  Returns the table and the number of
    copied rows.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: expected '<count> <dim>' header")
        count, dim = int(header[0]), int(header[1])
        if dim <= 0:
            raise ValueError(f"{path}: header dim must be positive, got {dim}")
        if expected_dim is not None and dim != expected_dim:
            raise ValueError(f"{path}: file dim {dim} does not match configured dim {expected_dim}")

        table = random_table(vocab, dim, rng, dtype)
        copied = 0
        for lineno in range(2, count + 2):
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: header promised {count} rows, file ended early")
            fields = line.split()
            if len(fields) != dim + 1:
                raise ValueError(f"{path} line {lineno}: expected {dim + 1} fields, got {len(fields)}")
            row = vocab.entries.get(fields[0])
            if row is None:
                continue
            try:
                table.weights[row] = [dtype(v) for v in fields[1:]]
            except ValueError as err:
                raise ValueError(f"{path} line {lineno}: malformed float ({err})") from None
            copied += 1
    log.info("loaded %s: %d/%d vocabulary rows covered", path, copied, len(vocab))
    return table, copied


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Write a table in the word-vector text format, one row per symbol.

    Values are printed with enough digits to round-trip 32-bit floats.
    """
    symbols = table.vocab.symbols()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(symbols)} {table.dim}\n")
        for sym, row in zip(symbols, table.weights):
            fh.write(sym + " " + " ".join("%.9g" % v for v in row) + "\n")


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sym in vocab.symbols():
            fh.write(sym + "\n")


def read_vocab(path: str | Path, kind: str) -> Vocabulary:
    entries: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            entries[line.rstrip("\n")] = i
    return Vocabulary(entries, kind)

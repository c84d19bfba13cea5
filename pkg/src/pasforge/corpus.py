"""Reader, validator and tree-geometry queries for dependency-parsed corpora.

The corpus file format is line oriented, UTF-8, sentences separated by blank
lines.  Within a sentence three record kinds appear, whitespace separated,
all T records before B records before P records:

    T <index> <surface> <lemma> <pos> <conj_form|_> <ne_tag|O> <bunsetsu_id>
    B <id> <first_token> <last_token> <head_token> <dep_head|-1>
    P <pred_token> <voice_suffixes: comma list|_> <nominal_form|_> NOM=<tok|-> ACC=<tok|-> DAT=<tok|->
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

CASES = ("NOM", "ACC", "DAT")
NONE_LABEL = "NONE"
LABELS = CASES + (NONE_LABEL,)

UP = "UP"
DOWN = "DOWN"
END = "END"
GAP = "GAP"  # stands in for the skipped middle of over-long paths
DIRECTIONS = (UP, DOWN, END, GAP)

VOICE_SUFFIXES = ("reru", "seru", "dekiru", "tearu")


class CorpusError(Exception):
    """Malformed or invalid corpus content, with file location when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    lemma: str
    pos: str
    conj_form: str
    ne_tag: str
    bunsetsu_id: int


@dataclass(frozen=True)
class Bunsetsu:
    id: int
    first_token: int
    last_token: int
    head_token: int
    dep_head: int | None  # None for the root bunsetsu


@dataclass(frozen=True)
class PredicateInstance:
    pred_token: int
    voice_suffixes: frozenset[str] = frozenset()
    nominal_form: str | None = None
    gold: dict[str, int] = field(default_factory=dict)  # case -> filler token


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    bunsetsus: tuple[Bunsetsu, ...]
    predicates: tuple[PredicateInstance, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "bunsetsus", tuple(self.bunsetsus))
        object.__setattr__(self, "predicates", tuple(self.predicates))
        validate_sentence(self)

    def bunsetsu_of(self, token_index: int) -> Bunsetsu:
        return self.bunsetsus[self.tokens[token_index].bunsetsu_id]


def validate_sentence(s: Sentence, line: int | None = None) -> None:
    """Check every type invariant; raise CorpusError on the first violation."""
    if not s.tokens:
        raise CorpusError("sentence has no tokens", line)
    for i, tok in enumerate(s.tokens):
        if tok.index != i:
            raise CorpusError(f"token indices not contiguous at position {i} (got {tok.index})", line)
        if not 0 <= tok.bunsetsu_id < len(s.bunsetsus):
            raise CorpusError(f"token {i} references missing bunsetsu {tok.bunsetsu_id}", line)

    covered = 0
    roots = []
    for j, b in enumerate(s.bunsetsus):
        if b.id != j:
            raise CorpusError(f"bunsetsu ids not contiguous at position {j}", line)
        if b.first_token != covered:
            raise CorpusError(f"bunsetsu {j} span does not start at token {covered}", line)
        if b.last_token < b.first_token or b.last_token >= len(s.tokens):
            raise CorpusError(f"bunsetsu {j} has invalid span [{b.first_token}, {b.last_token}]", line)
        covered = b.last_token + 1
        if not b.first_token <= b.head_token <= b.last_token:
            raise CorpusError(f"bunsetsu {j} head token {b.head_token} outside its span", line)
        for t in range(b.first_token, b.last_token + 1):
            if s.tokens[t].bunsetsu_id != j:
                raise CorpusError(f"token {t} bunsetsu_id disagrees with bunsetsu {j} span", line)
        if b.dep_head is None:
            roots.append(j)
        elif not 0 <= b.dep_head < len(s.bunsetsus):
            raise CorpusError(f"bunsetsu {j} dep_head {b.dep_head} does not exist", line)
        elif b.dep_head == j:
            raise CorpusError(f"bunsetsu {j} depends on itself", line)
    if covered != len(s.tokens):
        raise CorpusError("bunsetsu spans do not cover the whole sentence", line)

    # cycles diagnosed before the root count: an all-cycle sentence has no
    # root either, and the cycle is the more useful message
    for j in range(len(s.bunsetsus)):
        seen = []
        k: int | None = j
        while k is not None:
            if k in seen:
                cycle = seen[seen.index(k):]
                raise CorpusError(f"bunsetsu dependency cycle: {' -> '.join(map(str, cycle + [k]))}", line)
            seen.append(k)
            k = s.bunsetsus[k].dep_head
    if len(roots) != 1:
        raise CorpusError(f"expected exactly one root bunsetsu, found {roots or 'none'}", line)

    for p in s.predicates:
        if not 0 <= p.pred_token < len(s.tokens):
            raise CorpusError(f"predicate token {p.pred_token} out of range", line)
        bad = set(p.voice_suffixes) - set(VOICE_SUFFIXES)
        if bad:
            raise CorpusError(f"unknown voice suffixes {sorted(bad)}", line)
        for case, filler in p.gold.items():
            if case not in CASES:
                raise CorpusError(f"unknown case slot {case!r}", line)
            if filler is None:
                continue
            if not 0 <= filler < len(s.tokens):
                raise CorpusError(f"gold {case} filler {filler} out of range", line)
            if filler == p.pred_token:
                raise CorpusError(f"gold {case} filler equals the predicate token {filler}", line)


def _parse_int(text: str, what: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise CorpusError(f"{what} is not an integer: {text!r}", line) from None


def _finish_sentence(tokens, bunsetsus, predicates, line: int) -> Sentence:
    tokens.sort(key=lambda t: t.index)
    bunsetsus.sort(key=lambda b: b.id)
    try:
        return Sentence(tuple(tokens), tuple(bunsetsus), tuple(predicates))
    except CorpusError as err:
        raise CorpusError(str(err), line) from None


def parse_corpus_file(path: str | Path) -> list[Sentence]:
    """Parse a corpus file into validated sentences.

    Raises CorpusError naming the offending line on the first malformed
    record or invariant violation.
    """
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    bunsetsus: list[Bunsetsu] = []
    predicates: list[PredicateInstance] = []
    stage = "T"  # record-kind ordering within a sentence
    sent_start = 1

    with open(path, encoding="utf-8") as fh:
        lineno = 0
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                if tokens or bunsetsus or predicates:
                    sentences.append(_finish_sentence(tokens, bunsetsus, predicates, sent_start))
                    tokens, bunsetsus, predicates = [], [], []
                stage = "T"
                sent_start = lineno + 1
                continue
            fields = line.split()
            kind = fields[0]
            if kind == "T":
                if stage != "T":
                    raise CorpusError("T record after B or P records", lineno)
                if len(fields) != 8:
                    raise CorpusError(f"T record needs 8 fields, got {len(fields)}", lineno)
                tokens.append(Token(
                    index=_parse_int(fields[1], "token index", lineno),
                    surface=fields[2],
                    lemma=fields[3],
                    pos=fields[4],
                    conj_form="" if fields[5] == "_" else fields[5],
                    ne_tag=fields[6],
                    bunsetsu_id=_parse_int(fields[7], "bunsetsu id", lineno),
                ))
            elif kind == "B":
                if stage == "P":
                    raise CorpusError("B record after P records", lineno)
                stage = "B"
                if len(fields) != 6:
                    raise CorpusError(f"B record needs 6 fields, got {len(fields)}", lineno)
                dep = _parse_int(fields[5], "dep_head", lineno)
                bunsetsus.append(Bunsetsu(
                    id=_parse_int(fields[1], "bunsetsu id", lineno),
                    first_token=_parse_int(fields[2], "first token", lineno),
                    last_token=_parse_int(fields[3], "last token", lineno),
                    head_token=_parse_int(fields[4], "head token", lineno),
                    dep_head=None if dep == -1 else dep,
                ))
            elif kind == "P":
                stage = "P"
                if len(fields) != 7:
                    raise CorpusError(f"P record needs 7 fields, got {len(fields)}", lineno)
                voice = frozenset() if fields[2] == "_" else frozenset(fields[2].split(","))
                gold: dict[str, int] = {}
                for case, item in zip(CASES, fields[4:7]):
                    key, _, value = item.partition("=")
                    if key != case:
                        raise CorpusError(f"expected {case}=<tok|->, got {item!r}", lineno)
                    if value != "-":
                        gold[case] = _parse_int(value, f"{case} filler", lineno)
                predicates.append(PredicateInstance(
                    pred_token=_parse_int(fields[1], "predicate token", lineno),
                    voice_suffixes=voice,
                    nominal_form=None if fields[3] == "_" else fields[3],
                    gold=gold,
                ))
            else:
                raise CorpusError(f"unknown record kind {kind!r}", lineno)
    if tokens or bunsetsus or predicates:
        sentences.append(_finish_sentence(tokens, bunsetsus, predicates, sent_start))
    return sentences


def serialize_sentence(s: Sentence) -> str:
    lines = []
    for t in s.tokens:
        conj = t.conj_form if t.conj_form else "_"
        lines.append(f"T {t.index} {t.surface} {t.lemma} {t.pos} {conj} {t.ne_tag} {t.bunsetsu_id}")
    for b in s.bunsetsus:
        dep = -1 if b.dep_head is None else b.dep_head
        lines.append(f"B {b.id} {b.first_token} {b.last_token} {b.head_token} {dep}")
    for p in s.predicates:
        voice = ",".join(sorted(p.voice_suffixes)) if p.voice_suffixes else "_"
        nominal = p.nominal_form if p.nominal_form is not None else "_"
        slots = " ".join(f"{c}={p.gold[c]}" if c in p.gold else f"{c}=-" for c in CASES)
        lines.append(f"P {p.pred_token} {voice} {nominal} {slots}")
    return "\n".join(lines) + "\n"


def write_corpus_file(sentences: list[Sentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(serialize_sentence(s))
            fh.write("\n")


def _ancestors(s: Sentence, b: int) -> list[int]:
    chain = [b]
    while s.bunsetsus[chain[-1]].dep_head is not None:
        chain.append(s.bunsetsus[chain[-1]].dep_head)
    return chain


def bunsetsu_path(s: Sentence, from_b: int, to_b: int) -> list[tuple[int, str]]:
    """Unique tree path between two bunsetsus as (id, direction) steps.

    The direction on each element is the move taken from it (UP toward its
    dep_head, DOWN toward a dependent); the final element carries END.
    """
    up_from = _ancestors(s, from_b)
    up_to = _ancestors(s, to_b)
    on_to_path = set(up_to)
    lca_pos = next(i for i, b in enumerate(up_from) if b in on_to_path)
    lca = up_from[lca_pos]
    rising = up_from[:lca_pos]          # strictly below the LCA on from's side
    falling = up_to[:up_to.index(lca)]  # strictly below the LCA on to's side

    path: list[tuple[int, str]] = [(b, UP) for b in rising]
    path.append((lca, DOWN))
    path.extend((b, DOWN) for b in reversed(falling))
    path[-1] = (path[-1][0], END)
    return path


def dependency_distance(s: Sentence, p: int, a: int) -> int:
    """Edge count on the bunsetsu tree path between two tokens' bunsetsus."""
    return len(bunsetsu_path(s, s.tokens[p].bunsetsu_id, s.tokens[a].bunsetsu_id)) - 1


def gold_label_of(pred: PredicateInstance, a: int) -> str:
    """Case label the token fills for this predicate, NONE when it fills none.

    A token filling several slots resolves to the first in NOM > ACC > DAT
    priority, with a warning.
    """
    matches = [c for c in CASES if pred.gold.get(c) == a]
    if not matches:
        return NONE_LABEL
    if len(matches) > 1:
        log.warning("token %d fills multiple case slots %s of predicate %d; keeping %s",
                    a, matches, pred.pred_token, matches[0])
    return matches[0]

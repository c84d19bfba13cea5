"""Sparse binary features and lexicalized dependency-path sequences.

Feature strings are namespaced ("pred.lemma=taberu", "pair.dep_dist=3");
template groups (word / path / cases) can be removed for ablations.
Particles are recognized purely by POS tag, see PARTICLE_POS.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .corpus import END, GAP, PredicateInstance, Sentence, bunsetsu_path, dependency_distance
from .vocab import PATH_GAP

PARTICLE_POS = "PART"

MAX_PATH_ITEMS = 15
_KEEP_EACH_SIDE = 7  # 7 head + GAP + 7 tail when truncating

GROUP_WORD = "word"
GROUP_PATH = "path"
GROUP_CASES = "cases"
ABLATABLE_GROUPS = (GROUP_WORD, GROUP_PATH, GROUP_CASES)

# surface/lemma templates dropped by the "word" ablation
_WORD_TEMPLATES = ("pred.surface", "pred.lemma", "arg.surface", "arg.lemma", "arg.right_lemma")

_TOK_DIST_EDGES = (1, 2, 3, 4, 5, 10)
_DEP_DIST_EDGES = (0, 1, 2, 3, 4)


class PathItem(NamedTuple):
    pos: str
    lemma: str
    direction: str


PathSequence = list[PathItem]


def token_distance_bucket(d: int) -> str:
    if d <= 5:
        return str(d)
    if d <= 10:
        return "6-10"
    return ">10"


def dependency_distance_bucket(d: int) -> str:
    return str(d) if d <= 4 else "5+"


def _particles(s: Sentence, b) -> list[str]:
    return [s.tokens[t].lemma for t in range(b.first_token, b.last_token + 1)
            if s.tokens[t].pos == PARTICLE_POS]


def other_dependents_case_markers(s: Sentence, pred: PredicateInstance, a: int) -> list[str]:
    """Case particles carried by the predicate's other direct dependents.

    Scans every bunsetsu whose dep_head is the predicate's bunsetsu except
    the candidate's own, emitting one deduplicated "othercase=<particle>"
    per particle-POS token found.
    """
    pred_b = s.tokens[pred.pred_token].bunsetsu_id
    cand_b = s.tokens[a].bunsetsu_id
    found: list[str] = []
    for b in s.bunsetsus:
        if b.dep_head != pred_b or b.id == cand_b:
            continue
        for particle in _particles(s, b):
            feat = f"othercase={particle}"
            if feat not in found:
                found.append(feat)
    return found


def _path_items(s: Sentence, pred: PredicateInstance, a: int) -> PathSequence:
    pred_b = s.tokens[pred.pred_token].bunsetsu_id
    cand_b = s.tokens[a].bunsetsu_id
    steps = bunsetsu_path(s, pred_b, cand_b)
    items: PathSequence = []
    for i, (bid, direction) in enumerate(steps):
        if i == len(steps) - 1:
            tok = s.tokens[a]
        elif i == 0:
            tok = s.tokens[pred.pred_token]
        else:
            tok = s.tokens[s.bunsetsus[bid].head_token]
        items.append(PathItem(tok.pos, tok.lemma, direction))
    return items


def extract_path_sequence(s: Sentence, pred: PredicateInstance, a: int) -> PathSequence:
    """(POS, lemma, direction) items along the predicate-to-candidate path.

    Items are the head tokens of each bunsetsu on the path, except the
    endpoints which use the predicate and candidate tokens themselves.
    Paths longer than 15 items keep 7 from each end around a single GAP.
    """
    items = _path_items(s, pred, a)
    if len(items) > MAX_PATH_ITEMS:
        gap = PathItem(PATH_GAP, PATH_GAP, GAP)
        items = items[:_KEEP_EACH_SIDE] + [gap] + items[-_KEEP_EACH_SIDE:]
    return items


def extract_binary_features(s: Sentence, pred: PredicateInstance, a: int,
                            removed: frozenset[str] = frozenset()) -> list[str]:
    """All binary feature strings for one (predicate, candidate) pair.

    `removed` names template groups to leave out: "word" drops surface and
    lemma templates, "path" the naive dependency-path string, "cases" the
    markers of the predicate's other dependents.
    """
    p_tok = s.tokens[pred.pred_token]
    a_tok = s.tokens[a]
    a_bun = s.bunsetsus[a_tok.bunsetsu_id]
    feats: list[str] = []

    def emit(template: str, value: str) -> None:
        if template in _WORD_TEMPLATES and GROUP_WORD in removed:
            return
        feats.append(f"{template}={value}")

    emit("pred.surface", p_tok.surface)
    emit("pred.lemma", p_tok.lemma)
    emit("pred.pos", p_tok.pos)
    if p_tok.conj_form:
        emit("pred.conj", p_tok.conj_form)
    if pred.nominal_form is not None:
        emit("pred.nominal", pred.nominal_form)
    for suffix in sorted(pred.voice_suffixes):
        emit("pred.voice", suffix)

    emit("arg.surface", a_tok.surface)
    emit("arg.lemma", a_tok.lemma)
    emit("arg.pos", a_tok.pos)
    emit("arg.ne", a_tok.ne_tag)
    emit("arg.is_head", "true" if a_bun.head_token == a else "false")
    for particle in sorted(set(_particles(s, a_bun))):
        emit("arg.particle", particle)
    if a + 1 < len(s.tokens):
        emit("arg.right_lemma", s.tokens[a + 1].lemma)
        emit("arg.right_pos", s.tokens[a + 1].pos)

    if GROUP_CASES not in removed:
        feats.extend(other_dependents_case_markers(s, pred, a))
    emit("pair.a_precedes_p", "true" if a < pred.pred_token else "false")
    emit("pair.same_bunsetsu", "true" if a_tok.bunsetsu_id == p_tok.bunsetsu_id else "false")
    emit("pair.tok_dist", token_distance_bucket(abs(a - pred.pred_token)))
    emit("pair.dep_dist", dependency_distance_bucket(dependency_distance(s, pred.pred_token, a)))
    if GROUP_PATH not in removed:
        items = _path_items(s, pred, a)
        if len(items) <= 5:
            emit("pair.path", "|".join(f"{it.pos}:{it.direction}" for it in items))
    return feats


@dataclass(frozen=True)
class FeatureIndex:
    entries: dict[str, int]  # feature string -> contiguous id
    min_count: int
    frozen: bool = True

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class BinaryFeatureVector:
    indices: np.ndarray  # sorted, strictly increasing feature ids
    dimension: int


def candidate_pairs(s: Sentence) -> Iterable[tuple[PredicateInstance, int]]:
    """Every (predicate, candidate token) pair; the predicate token itself
    is never a candidate."""
    for pred in s.predicates:
        for a in range(len(s.tokens)):
            if a != pred.pred_token:
                yield pred, a


def build_feature_index(corpus: list[Sentence], removed: frozenset[str] = frozenset(),
                        min_count: int = 10) -> FeatureIndex:
    """Index of all feature strings firing in at least min_count instances."""
    if not corpus:
        raise ValueError("cannot build a feature index from an empty corpus")
    counts: dict[str, int] = {}
    for s in corpus:
        for pred, a in candidate_pairs(s):
            for feat in set(extract_binary_features(s, pred, a, removed)):
                counts[feat] = counts.get(feat, 0) + 1
    kept = sorted(f for f, n in counts.items() if n >= min_count)
    return FeatureIndex({f: i for i, f in enumerate(kept)}, min_count)


def vectorize(features: Iterable[str], index: FeatureIndex) -> BinaryFeatureVector:
    """Map feature strings to a sparse 0/1 vector; unknown strings drop out."""
    if not index.frozen:
        raise ValueError("feature index must be frozen before vectorizing")
    ids = {index.entries[f] for f in features if f in index.entries}
    return BinaryFeatureVector(np.array(sorted(ids), dtype=np.int32), len(index))


def save_feature_index(index: FeatureIndex, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for feat, i in sorted(index.entries.items()):
            fh.write(f"{feat}\t{i}\n")


def read_feature_index(path: str | Path, min_count: int = 10) -> FeatureIndex:
    entries: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            feat, _, i = line.rstrip("\n").rpartition("\t")
            entries[feat] = int(i)
    return FeatureIndex(entries, min_count)

"""Hand-construction helpers shared across test modules."""

import numpy as np

from pasforge.corpus import Bunsetsu, PredicateInstance, Sentence, Token


def make_sentence(words, deps, predicates=(), heads=None):
    """Build a validated Sentence from compact rows.

    words: one (surface, pos, bunsetsu_id) or (surface, pos, bunsetsu_id,
    conj_form, ne_tag) tuple per token; lemma is the surface form.
    deps: dep_head per bunsetsu id, -1 for the root.
    heads: optional head token per bunsetsu id, defaulting to the first
    token of the span.
    """
    tokens = []
    for i, row in enumerate(words):
        surface, pos, b_id = row[:3]
        conj = row[3] if len(row) > 3 else ""
        ne = row[4] if len(row) > 4 else "O"
        tokens.append(Token(index=i, surface=surface, lemma=surface, pos=pos,
                            conj_form=conj, ne_tag=ne, bunsetsu_id=b_id))
    spans = {}
    for t in tokens:
        first, last = spans.get(t.bunsetsu_id, (t.index, t.index))
        spans[t.bunsetsu_id] = (min(first, t.index), max(last, t.index))
    bunsetsus = []
    for b_id in sorted(spans):
        first, last = spans[b_id]
        head = heads[b_id] if heads is not None else first
        dep = deps[b_id]
        bunsetsus.append(Bunsetsu(id=b_id, first_token=first, last_token=last,
                                  head_token=head, dep_head=None if dep == -1 else dep))
    return Sentence(tuple(tokens), tuple(bunsetsus), tuple(predicates))


def tree_sentence(parents, pos="NOUN"):
    """One single-token bunsetsu per node; parents[i] == -1 marks the root."""
    words = [(f"w{i}", pos, i) for i in range(len(parents))]
    return make_sentence(words, list(parents))


def random_parents(rng: np.random.Generator, n: int) -> list[int]:
    """Random recursive tree over n nodes, rooted at 0."""
    return [-1] + [int(rng.integers(0, i)) for i in range(1, n)]


def pred(token, gold=None, voice=(), nominal=None):
    return PredicateInstance(pred_token=token, voice_suffixes=frozenset(voice),
                             nominal_form=nominal, gold=dict(gold or {}))

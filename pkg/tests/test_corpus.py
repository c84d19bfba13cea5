"""Corpus parsing, tree paths, and gold label resolution."""

from collections import deque

import numpy as np
import pytest

from pasforge.corpus import (
    CorpusError,
    DOWN,
    END,
    UP,
    bunsetsu_path,
    dependency_distance,
    gold_label_of,
    parse_corpus_file,
    serialize_sentence,
    write_corpus_file,
)
from pasforge.synthetic import SyntheticConfig, generate_corpus

from helpers import make_sentence, pred, random_parents, tree_sentence

MINIMAL = "T 0 taberu taberu VERB _ O 0\nB 0 0 0 0 -1\nP 0 _ _ NOM=- ACC=- DAT=-\n"


def bfs_ids(parents, start, goal):
    """Shortest node sequence on the undirected tree, breadth first."""
    adj = {i: [] for i in range(len(parents))}
    for child, parent in enumerate(parents):
        if parent != -1:
            adj[child].append(parent)
            adj[parent].append(child)
    prev = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nxt in adj[node]:
            if nxt not in prev:
                prev[nxt] = node
                queue.append(nxt)
    ids = [goal]
    while ids[-1] != start:
        ids.append(prev[ids[-1]])
    return ids[::-1]


class TestParseCorpusFile:
    def test_minimal_single_token_sentence(self, tmp_path):
        path = tmp_path / "one.txt"
        path.write_text(MINIMAL, encoding="utf-8")
        sentences = parse_corpus_file(path)
        assert len(sentences) == 1
        s = sentences[0]
        assert len(s.tokens) == 1
        assert len(s.predicates) == 1
        assert s.predicates[0].gold == {}

    def test_full_record_fields(self, tmp_path):
        text = ("T 0 kare kare NOUN _ PERSON 0\n"
                "T 1 ga ga PART _ O 0\n"
                "T 2 yom yomu VERB base O 1\n"
                "B 0 0 1 0 1\n"
                "B 1 2 2 2 -1\n"
                "P 2 reru,seru yomi NOM=0 ACC=- DAT=-\n")
        path = tmp_path / "full.txt"
        path.write_text(text, encoding="utf-8")
        s = parse_corpus_file(path)[0]
        assert s.tokens[0].ne_tag == "PERSON"
        assert s.tokens[2].conj_form == "base"
        assert s.tokens[0].conj_form == ""
        p = s.predicates[0]
        assert p.voice_suffixes == frozenset({"reru", "seru"})
        assert p.nominal_form == "yomi"
        assert p.gold == {"NOM": 0}

    def test_two_cycle_rejected(self, tmp_path):
        text = ("T 0 a a NOUN _ O 0\n"
                "T 1 b b NOUN _ O 1\n"
                "B 0 0 0 0 1\n"
                "B 1 1 1 1 0\n"
                "P 0 _ _ NOM=- ACC=- DAT=-\n")
        path = tmp_path / "cycle.txt"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(CorpusError, match="cycl"):
            parse_corpus_file(path)

    def test_record_order_enforced(self, tmp_path):
        text = ("B 0 0 0 0 -1\n"
                "T 0 a a NOUN _ O 0\n"
                "P 0 _ _ NOM=- ACC=- DAT=-\n")
        path = tmp_path / "order.txt"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(CorpusError) as err:
            parse_corpus_file(path)
        assert err.value.line == 2

    def test_malformed_line_reports_location(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text(MINIMAL + "\nT 0 x x NOUN _ O\n", encoding="utf-8")
        with pytest.raises(CorpusError) as err:
            parse_corpus_file(path)
        assert err.value.line == 5

    def test_dangling_gold_reference_rejected(self, tmp_path):
        text = ("T 0 a a NOUN _ O 0\n"
                "B 0 0 0 0 -1\n"
                "P 0 _ _ NOM=9 ACC=- DAT=-\n")
        path = tmp_path / "dangling.txt"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(CorpusError):
            parse_corpus_file(path)

    def test_span_gap_rejected(self, tmp_path):
        # bunsetsu spans must partition the token range exactly
        text = ("T 0 a a NOUN _ O 0\n"
                "T 1 b b NOUN _ O 0\n"
                "B 0 0 0 0 -1\n"
                "P 0 _ _ NOM=- ACC=- DAT=-\n")
        path = tmp_path / "gap.txt"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(CorpusError):
            parse_corpus_file(path)

    def test_generated_corpus_matches_in_memory_structures(self, tmp_path):
        corpus = generate_corpus(SyntheticConfig(sentences=3, seed=5))
        path = tmp_path / "gen.txt"
        write_corpus_file(corpus, path)
        parsed = parse_corpus_file(path)
        assert len(parsed) == 3
        for want, got in zip(corpus, parsed):
            assert len(got.tokens) == len(want.tokens)
            assert len(got.bunsetsus) == len(want.bunsetsus)
            assert got.predicates == want.predicates


class TestBunsetsuPath:
    def test_same_bunsetsu_is_end_only(self):
        s = tree_sentence([-1, 0])
        assert bunsetsu_path(s, 1, 1) == [(1, END)]

    def test_two_step_chain_up(self):
        # 0 depends on 1, 1 on 2
        s = tree_sentence([1, 2, -1])
        assert bunsetsu_path(s, 0, 2) == [(0, UP), (1, UP), (2, END)]

    def test_descent_from_root(self):
        s = tree_sentence([1, 2, -1])
        assert bunsetsu_path(s, 2, 0) == [(2, DOWN), (1, DOWN), (0, END)]

    def test_through_common_ancestor(self):
        # 0 -> 1 -> 2 <- 3
        s = tree_sentence([1, 2, -1, 2])
        assert bunsetsu_path(s, 0, 3) == [(0, UP), (1, UP), (2, DOWN), (3, END)]

    def test_matches_bfs_oracle_on_random_trees(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            parents = random_parents(rng, 10)
            s = tree_sentence(parents)
            a, b = (int(v) for v in rng.integers(0, 10, size=2))
            path = bunsetsu_path(s, a, b)
            assert [bid for bid, _ in path] == bfs_ids(parents, a, b)
            for (bid, direction), (nxt, _) in zip(path, path[1:]):
                want = UP if s.bunsetsus[bid].dep_head == nxt else DOWN
                assert direction == want
            assert path[-1][1] == END

    def test_reversal_property(self):
        rng = np.random.default_rng(7)
        swap = {UP: DOWN, DOWN: UP}
        for _ in range(50):
            parents = random_parents(rng, 8)
            s = tree_sentence(parents)
            a, b = (int(v) for v in rng.integers(0, 8, size=2))
            fwd = bunsetsu_path(s, a, b)
            ids = [bid for bid, _ in fwd]
            dirs = [d for _, d in fwd]
            want = [(ids[i], swap[dirs[i - 1]]) for i in range(len(ids) - 1, 0, -1)]
            want.append((ids[0], END))
            assert bunsetsu_path(s, b, a) == want


class TestDependencyDistance:
    def test_same_bunsetsu_is_zero(self):
        s = make_sentence([("a", "NOUN", 0), ("b", "PART", 0)], [-1])
        assert dependency_distance(s, 0, 1) == 0

    def test_direct_dependent_is_one(self):
        s = make_sentence([("a", "NOUN", 0), ("v", "VERB", 1)], [1, -1])
        assert dependency_distance(s, 1, 0) == 1

    def test_matches_bfs_edge_count_and_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            parents = random_parents(rng, 10)
            s = tree_sentence(parents)
            a, b = (int(v) for v in rng.integers(0, 10, size=2))
            want = len(bfs_ids(parents, a, b)) - 1
            assert dependency_distance(s, a, b) == want
            assert dependency_distance(s, b, a) == want
            assert (dependency_distance(s, a, b) == 0) == (a == b)


class TestGoldLabelOf:
    def test_unlisted_token_is_none(self):
        assert gold_label_of(pred(3, {"ACC": 5}), 4) == "NONE"

    def test_single_slot(self):
        assert gold_label_of(pred(3, {"ACC": 5}), 5) == "ACC"

    def test_multi_slot_priority_warns(self, caplog):
        p = pred(3, {"NOM": 5, "DAT": 5})
        with caplog.at_level("WARNING", logger="pasforge"):
            assert gold_label_of(p, 5) == "NOM"
        assert any("multiple case slots" in r.message for r in caplog.records)


class TestRoundTrip:
    def test_serialize_parse_identity(self, tmp_path):
        corpus = generate_corpus(SyntheticConfig(sentences=25, seed=11,
                                                 bridge_predicates=0.3))
        path = tmp_path / "rt.txt"
        write_corpus_file(corpus, path)
        assert parse_corpus_file(path) == corpus

    def test_serialized_text_is_stable(self, tmp_path):
        corpus = generate_corpus(SyntheticConfig(sentences=5, seed=2))
        once = "".join(serialize_sentence(s) for s in corpus)
        path = tmp_path / "again.txt"
        path.write_text("\n".join(serialize_sentence(s) for s in corpus) + "\n",
                        encoding="utf-8")
        reparsed = parse_corpus_file(path)
        assert "".join(serialize_sentence(s) for s in reparsed) == once

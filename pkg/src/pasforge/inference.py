"""Threshold-gated argmax decoding and probability-averaging ensembles.

Each case slot is decided independently: the candidate with the highest
probability for that case wins the slot iff its probability strictly
exceeds the case threshold. Nothing stops one token from filling two
slots; the classifier is purely local.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CASES, Sentence
from .model import Instance, PasModel, feature_index_hash
from . import model as model_mod

THRESHOLDS_FILE = "thresholds.txt"


@dataclass(frozen=True)
class Prediction:
    sent_id: int
    pred_token: int
    arguments: dict[str, tuple[int, float]]  # case -> (token, probability)


def best_candidate(cand_tokens: Sequence[int], case_probs: np.ndarray) -> tuple[int, float]:
    """Highest-probability candidate; ties go to the smaller token index."""
    best_tok = cand_tokens[0]
    best_p = float(case_probs[0])
    for tok, p in zip(cand_tokens[1:], case_probs[1:]):
        p = float(p)
        if p > best_p or (p == best_p and tok < best_tok):
            best_tok, best_p = tok, p
    return best_tok, best_p


def group_by_predicate(instances: list[Instance]) -> list[tuple[tuple[int, int], list[int]]]:
    """Instance rows grouped per (sent_id, pred_token), in first-seen order."""
    groups: dict[tuple[int, int], list[int]] = {}
    for row, inst in enumerate(instances):
        groups.setdefault((inst.sent_id, inst.pred_token), []).append(row)
    return list(groups.items())


def decode_group(sent_id: int, pred_token: int, cand_tokens: Sequence[int],
                 probs: np.ndarray, thresholds: dict[str, float]) -> Prediction:
    """probs: [n_candidates, 4] rows aligned with cand_tokens."""
    arguments: dict[str, tuple[int, float]] = {}
    for ci, case in enumerate(CASES):
        tok, p = best_candidate(cand_tokens, probs[:, ci])
        if p > thresholds[case]:
            arguments[case] = (tok, p)
    return Prediction(sent_id, pred_token, arguments)


def decode_instances(instances: list[Instance], probs: np.ndarray,
                     thresholds: dict[str, float]) -> list[Prediction]:
    out = []
    for (sent_id, pred_token), rows in group_by_predicate(instances):
        cand_tokens = [instances[r].cand_token for r in rows]
        out.append(decode_group(sent_id, pred_token, cand_tokens, probs[rows], thresholds))
    return out


def ensemble_probabilities(models: list[PasModel], instances: list[Instance]) -> np.ndarray:
    """Arithmetic mean of the member models' probability outputs."""
    if not models:
        raise ValueError("ensemble needs at least one model")
    first = models[0]
    ref_hash = feature_index_hash(first.feature_index)
    for m in models[1:]:
        if m.config != first.config:
            raise ValueError("ensemble members have different configurations")
        if feature_index_hash(m.feature_index) != ref_hash:
            raise ValueError("ensemble members were built on different feature indexes")
        if len(m.lemma_vocab) != len(first.lemma_vocab):
            raise ValueError("ensemble members have different vocabularies")
    total = models[0].predict_proba(instances)
    for m in models[1:]:
        total += m.predict_proba(instances)
    return total / len(models)


def decode_corpus(models: list[PasModel], sentences: list[Sentence],
                  thresholds: dict[str, float] | None = None) -> list[Prediction]:
    """Build instances, score (averaging if several models), and decode."""
    from .training import make_instances  # deferred: training builds on this module

    first = models[0]
    instances = make_instances(sentences, first.lemma_vocab, first.direction_vocab,
                               first.feature_index, first.config.removed_groups)
    probs = ensemble_probabilities(models, instances)
    if thresholds is None:
        thresholds = first.thresholds
    return decode_instances(instances, probs, thresholds)


def load_models(path: str | Path, dtype=np.float32) -> tuple[list[PasModel], dict[str, float]]:
    """Load a checkpoint directory, either a single model or an ensemble
    directory of member0..member{k-1} checkpoints with its own thresholds."""
    p = Path(path)
    if (p / model_mod.CONFIG_FILE).exists():
        m = model_mod.load_model(p, dtype)
        return [m], m.thresholds
    members = sorted(d for d in p.iterdir() if d.is_dir() and d.name.startswith("member"))
    if not members:
        raise ValueError(f"{p}: neither a model checkpoint nor an ensemble directory")
    models = [model_mod.load_model(d, dtype) for d in members]
    thresholds = read_thresholds(p / THRESHOLDS_FILE)
    return models, thresholds


def read_thresholds(path: str | Path) -> dict[str, float]:
    thresholds: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            case, value = line.split()
            thresholds[case] = float(value)
    for case in CASES:
        if case not in thresholds:
            raise ValueError(f"{path}: missing threshold for case {case}")
    return thresholds


def write_thresholds(thresholds: dict[str, float], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case in CASES:
            fh.write(f"{case} {thresholds[case]!r}\n")


def format_prediction(pred: Prediction) -> str:
    parts = [str(pred.sent_id), str(pred.pred_token)]
    for case in CASES:
        if case in pred.arguments:
            tok, p = pred.arguments[case]
            parts.append(f"{case}={tok},{p!r}")
        else:
            parts.append(f"{case}=-")
    return " ".join(parts)


def write_predictions(predictions: list[Prediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(format_prediction(pred) + "\n")


def parse_prediction_line(line: str, lineno: int) -> Prediction:
    fields = line.split()
    if len(fields) != 2 + len(CASES):
        raise ValueError(f"line {lineno}: expected {2 + len(CASES)} fields, got {len(fields)}")
    try:
        sent_id, pred_token = int(fields[0]), int(fields[1])
    except ValueError:
        raise ValueError(f"line {lineno}: sentence and predicate ids must be integers")
    arguments: dict[str, tuple[int, float]] = {}
    for field, case in zip(fields[2:], CASES):
        key, sep, value = field.partition("=")
        if key != case or not sep:
            raise ValueError(f"line {lineno}: expected {case}=..., got {field!r}")
        if value == "-":
            continue
        tok_text, sep, p_text = value.partition(",")
        if not sep:
            raise ValueError(f"line {lineno}: expected <token>,<probability> in {field!r}")
        arguments[case] = (int(tok_text), float(p_text))
    return Prediction(sent_id, pred_token, arguments)


def read_predictions(path: str | Path) -> list[Prediction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line:
                out.append(parse_prediction_line(line, lineno))
    return out

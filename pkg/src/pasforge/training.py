"""Instance construction, mini-batch training, and threshold calibration.

Training shuffles with a seeded generator, drops the last incomplete
batch (batch norm wants full batches), measures dev loss in inference
mode after every epoch, and restores the snapshot with the lowest dev
loss when patience runs out.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import nn
from .corpus import CASES, LABELS, Sentence, gold_label_of
from .features import FeatureIndex, extract_binary_features, extract_path_sequence, vectorize
from .inference import best_candidate, group_by_predicate
from .model import Instance, PasModel, lookup_or_pad, make_batch, path_to_ids
from .vocab import Vocabulary

log = logging.getLogger("pasforge")

THRESHOLD_GRID = tuple(round(i * 0.05, 2) for i in range(20))  # 0.00 .. 0.95


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 5
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch norm)")
        if not 0 < self.patience < self.max_epochs:
            raise ValueError("need 0 < patience < max_epochs")


class EpochStats(NamedTuple):
    epoch: int
    train_loss: float
    dev_loss: float
    elapsed: float


class TrainResult(NamedTuple):
    history: list[EpochStats]
    best_epoch: int
    best_dev_loss: float


def make_instances(corpus: list[Sentence], lemma_vocab: Vocabulary,
                   direction_vocab: Vocabulary, feature_index: FeatureIndex,
                   removed_groups: frozenset[str] = frozenset()) -> list[Instance]:
    """One instance per (predicate, candidate token) pair, in sentence,
    predicate, token order. The predicate token itself is not a candidate."""
    instances: list[Instance] = []
    for sent_id, s in enumerate(corpus):
        for pred in s.predicates:
            p_tok = s.tokens[pred.pred_token]
            word_p = lookup_or_pad(lemma_vocab, p_tok.lemma, p_tok.pos)
            for a in range(len(s.tokens)):
                if a == pred.pred_token:
                    continue
                a_tok = s.tokens[a]
                feats = extract_binary_features(s, pred, a, removed_groups)
                path = extract_path_sequence(s, pred, a)
                instances.append(Instance(
                    sent_id=sent_id,
                    pred_token=pred.pred_token,
                    cand_token=a,
                    label=LABELS.index(gold_label_of(pred, a)),
                    word_p=word_p,
                    word_a=lookup_or_pad(lemma_vocab, a_tok.lemma, a_tok.pos),
                    path=path_to_ids(path, lemma_vocab, direction_vocab),
                    binary=vectorize(feats, feature_index).indices,
                ))
    return instances


def dataset_loss(model: PasModel, instances: list[Instance], batch_size: int = 256) -> float:
    """Mean cross-entropy in inference mode over all instances."""
    probs = model.predict_proba(instances, batch_size)
    labels = np.array([inst.label for inst in instances])
    return float(-np.log(np.maximum(probs[np.arange(len(instances)), labels], 1e-30)).mean())


def _snapshot(model: PasModel) -> dict[str, np.ndarray]:
    return {name: arr.copy() for name, arr in model.named_tensors().items()}


def _restore(model: PasModel, snap: dict[str, np.ndarray]) -> None:
    for p in model.parameters():
        p.value[...] = snap[p.name]
    for _, _, bn in model.hidden:
        stem = bn.gamma.name.rsplit(".", 1)[0]
        bn.running_mean[...] = snap[f"{stem}.running_mean"]
        bn.running_var[...] = snap[f"{stem}.running_var"]


def train(model: PasModel, train_instances: list[Instance],
          dev_instances: list[Instance], config: TrainingConfig) -> TrainResult:
    """Adam-optimize until dev loss stops improving for `patience` epochs
    or max_epochs is reached; the model ends at its best-dev-loss state."""
    n = len(train_instances)
    if n < config.batch_size:
        raise ValueError(f"{n} training instances cannot fill one batch "
                         f"of {config.batch_size}")
    if not dev_instances:
        raise ValueError("dev instances must be non-empty")
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    n_features = len(model.feature_index)

    history: list[EpochStats] = []
    best_loss = np.inf
    best_epoch = 0
    best_state: dict[str, np.ndarray] = {}
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        batch_losses = []
        for start in range(0, n - config.batch_size + 1, config.batch_size):
            rows = order[start:start + config.batch_size]
            chunk = [train_instances[r] for r in rows]
            batch = make_batch(chunk, n_features, model.dtype)
            logits, cache = model.forward(batch, train=True, rng=rng)
            loss, probs = nn.softmax_cross_entropy(logits, batch.labels)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite training loss at epoch {epoch}, "
                    f"batch starting at {start}")
            model.backward(nn.softmax_cross_entropy_grad(probs, batch.labels), cache)
            nn.adam_step(params, config.lr, config.beta1, config.beta2, config.eps)
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))
        dev_loss = dataset_loss(model, dev_instances)
        elapsed = time.perf_counter() - t0
        log.info("epoch %d train_loss %.6f dev_loss %.6f elapsed %.2f",
                 epoch, train_loss, dev_loss, elapsed)
        history.append(EpochStats(epoch, train_loss, dev_loss, elapsed))

        if dev_loss < best_loss:
            best_loss = dev_loss
            best_epoch = epoch
            best_state = _snapshot(model)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    _restore(model, best_state)
    return TrainResult(history, best_epoch, float(best_loss))


def write_history(history: list[EpochStats], path: str | Path) -> None:
    """Loss history as comma-separated values. Wall-clock time is kept out
    so reruns of the same seed produce identical bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,dev_loss\n")
        for row in history:
            fh.write(f"{row.epoch},{row.train_loss!r},{row.dev_loss!r}\n")


def grid_search_thresholds(instances: list[Instance], probs: np.ndarray,
                           grid: tuple[float, ...] = THRESHOLD_GRID) -> dict[str, float]:
    """Per-case threshold maximizing that case's F1 when decoding `probs`;
    ties go to the smallest grid value."""
    groups = group_by_predicate(instances)
    thresholds: dict[str, float] = {}
    for ci, case in enumerate(CASES):
        label = LABELS.index(case)
        # per predicate: top candidate's probability, whether it is the gold
        # filler, and whether a gold filler exists at all
        tops: list[tuple[float, bool, bool]] = []
        for _, rows in groups:
            cand_tokens = [instances[r].cand_token for r in rows]
            tok, p = best_candidate(cand_tokens, probs[rows, ci])
            gold_tok = next((instances[r].cand_token for r in rows
                             if instances[r].label == label), None)
            tops.append((p, tok == gold_tok, gold_tok is not None))
        best_f1 = -1.0
        best_theta = grid[0]
        for theta in grid:
            tp = fp = fn = 0
            for p, is_gold, has_gold in tops:
                emitted = p > theta
                if emitted and is_gold:
                    tp += 1
                elif emitted:
                    fp += 1
                    fn += has_gold
                elif has_gold:
                    fn += 1
            denom = 2 * tp + fp + fn
            f1 = 2 * tp / denom if denom else 0.0
            if f1 > best_f1:
                best_f1, best_theta = f1, theta
        thresholds[case] = best_theta
    return thresholds


def calibrate_thresholds(model: PasModel, instances: list[Instance],
                         grid: tuple[float, ...] = THRESHOLD_GRID) -> dict[str, float]:
    """Grid-search per-case decoding thresholds on the given instances."""
    return grid_search_thresholds(instances, model.predict_proba(instances), grid)

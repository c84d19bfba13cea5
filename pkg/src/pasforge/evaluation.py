"""Precision/recall/F1 over decoded arguments, stratified by case and by
dependency distance, plus multi-run aggregation and the ablation driver.

A predicted (case, token) pair is correct iff it equals the gold filler
for that predicate and case. Arguments in the predicate's bunsetsu or a
directly attached one (distance <= 1) count as Dep; everything farther is
Zero, subdivided into distances 2, 3, 4 and >= 5. Gold-side counts are
stratified by the gold argument's distance, predicted-side counts by the
predicted token's distance; the two coincide exactly on correct pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import CASES, Sentence, dependency_distance
from .features import FeatureIndex
from .inference import Prediction
from .model import ModelConfig

REPORT_CASES = ("ALL",) + CASES
STRATA = ("overall", "dep", "zero", "d2", "d3", "d4", "d5plus")

REPORT_COLUMNS = ("ALL-F1", "ALL-P", "ALL-R", "Dep-F1", "Zero-F1",
                  "F1@2", "F1@3", "F1@4", "F1@>=5")


def distance_strata(d: int) -> list[str]:
    """All strata an argument at dependency distance d belongs to."""
    if d <= 1:
        return ["overall", "dep"]
    if d == 2:
        return ["overall", "zero", "d2"]
    if d == 3:
        return ["overall", "zero", "d3"]
    if d == 4:
        return ["overall", "zero", "d4"]
    return ["overall", "zero", "d5plus"]


class Counts(NamedTuple):
    gold: int
    predicted: int
    correct: int

    @property
    def precision(self) -> float:
        return self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class EvalReport:
    cells: dict[tuple[str, str], Counts]  # (case, stratum) -> counts
    run_f1s: dict[tuple[str, str], list[float]] | None = None

    def counts(self, case: str, stratum: str = "overall") -> Counts:
        return self.cells[(case, stratum)]

    def f1(self, case: str, stratum: str = "overall") -> float:
        return self.cells[(case, stratum)].f1

    def mean_f1(self, case: str, stratum: str = "overall") -> float:
        if self.run_f1s is None:
            return self.f1(case, stratum)
        return float(np.mean(self.run_f1s[(case, stratum)]))

    def sigma_f1(self, case: str, stratum: str = "overall") -> float:
        if self.run_f1s is None:
            return 0.0
        return float(np.std(self.run_f1s[(case, stratum)]))


def evaluate(corpus: list[Sentence], predictions: list[Prediction]) -> EvalReport:
    by_pred: dict[tuple[int, int], Prediction] = {}
    for pred in predictions:
        key = (pred.sent_id, pred.pred_token)
        if key in by_pred:
            raise ValueError(f"duplicate prediction for sentence {key[0]}, "
                             f"predicate token {key[1]}")
        if not 0 <= pred.sent_id < len(corpus):
            raise ValueError(f"prediction references unknown sentence {pred.sent_id}")
        sentence = corpus[pred.sent_id]
        if not any(p.pred_token == pred.pred_token for p in sentence.predicates):
            raise ValueError(f"prediction references unknown predicate token "
                             f"{pred.pred_token} in sentence {pred.sent_id}")
        by_pred[key] = pred

    tallies = {(case, stratum): [0, 0, 0]
               for case in REPORT_CASES for stratum in STRATA}

    def bump(case: str, strata: Sequence[str], slot: int) -> None:
        for stratum in strata:
            tallies[(case, stratum)][slot] += 1
            tallies[("ALL", stratum)][slot] += 1

    for sent_id, s in enumerate(corpus):
        for gold_pred in s.predicates:
            decoded = by_pred.get((sent_id, gold_pred.pred_token))
            for case in CASES:
                gold_tok = gold_pred.gold.get(case)
                if gold_tok is not None:
                    strata = distance_strata(
                        dependency_distance(s, gold_pred.pred_token, gold_tok))
                    bump(case, strata, 0)
                if decoded is None or case not in decoded.arguments:
                    continue
                pred_tok = decoded.arguments[case][0]
                pred_strata = distance_strata(
                    dependency_distance(s, gold_pred.pred_token, pred_tok))
                bump(case, pred_strata, 1)
                if pred_tok == gold_tok:
                    bump(case, pred_strata, 2)

    return EvalReport({key: Counts(*v) for key, v in tallies.items()})


def aggregate_runs(reports: Sequence[EvalReport]) -> EvalReport:
    """Pool counts across runs and record per-run F1s; mean_f1/sigma_f1 of
    the result summarize the runs (population standard deviation)."""
    if not reports:
        raise ValueError("need at least one report")
    keys = set(reports[0].cells)
    for r in reports[1:]:
        if set(r.cells) != keys:
            raise ValueError("reports cover different strata")
    cells = {}
    for key in keys:
        cells[key] = Counts(*(sum(r.cells[key][i] for r in reports) for i in range(3)))
    run_f1s = {key: [r.cells[key].f1 for r in reports] for key in keys}
    return EvalReport(cells, run_f1s)


def _row_values(report: EvalReport, case: str) -> list[float]:
    c = report.counts(case)
    values = [report.mean_f1(case), c.precision, c.recall,
              report.mean_f1(case, "dep"), report.mean_f1(case, "zero"),
              report.mean_f1(case, "d2"), report.mean_f1(case, "d3"),
              report.mean_f1(case, "d4"), report.mean_f1(case, "d5plus")]
    if report.run_f1s is not None:
        values.append(report.sigma_f1(case))
    return values


def _columns(report: EvalReport) -> tuple[str, ...]:
    if report.run_f1s is not None:
        return REPORT_COLUMNS + ("F1-sigma",)
    return REPORT_COLUMNS


def report_text(report: EvalReport) -> str:
    headers = ("case",) + _columns(report)
    lines = [" ".join(f"{h:>8}" for h in headers)]
    for case in REPORT_CASES:
        cells = [f"{case:>8}"] + [f"{v:>8.4f}" for v in _row_values(report, case)]
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(("case",) + _columns(report)) + "\n")
        for case in REPORT_CASES:
            vals = _row_values(report, case)
            fh.write(",".join([case] + [f"{v:.4f}" for v in vals]) + "\n")


class AblationRow(NamedTuple):
    name: str
    config: ModelConfig
    feature_index: FeatureIndex
    thresholds: dict[str, float]
    report: EvalReport


def run_ablations(rows: Sequence[tuple[str, ModelConfig]], train_corpus: list[Sentence],
                  dev_corpus: list[Sentence], training_config,
                  calibrate_on: str = "train") -> list[AblationRow]:
    """Train, calibrate, decode and evaluate one model per (name, config)
    row, on shared corpus splits."""
    from . import training as tr
    from .features import build_feature_index
    from .inference import decode_instances, ensemble_probabilities
    from .model import PasModel
    from .vocab import KIND_DIRECTION, KIND_LEMMA, build_vocab

    if calibrate_on not in ("train", "dev"):
        raise ValueError(f"calibrate_on must be 'train' or 'dev', got {calibrate_on!r}")
    out: list[AblationRow] = []
    for name, config in rows:
        lemma_vocab = build_vocab(train_corpus, KIND_LEMMA, config.lemma_min_count)
        direction_vocab = build_vocab(train_corpus, KIND_DIRECTION)
        feature_index = build_feature_index(train_corpus, config.removed_groups,
                                            config.feature_min_count)
        rng = np.random.default_rng(training_config.seed)
        model = PasModel(config, lemma_vocab, direction_vocab, feature_index, rng)
        train_instances = tr.make_instances(train_corpus, lemma_vocab, direction_vocab,
                                            feature_index, config.removed_groups)
        dev_instances = tr.make_instances(dev_corpus, lemma_vocab, direction_vocab,
                                          feature_index, config.removed_groups)
        tr.train(model, train_instances, dev_instances, training_config)
        calib = train_instances if calibrate_on == "train" else dev_instances
        thresholds = tr.calibrate_thresholds(model, calib)
        probs = ensemble_probabilities([model], dev_instances)
        predictions = decode_instances(dev_instances, probs, thresholds)
        out.append(AblationRow(name, config, feature_index, thresholds,
                               evaluate(dev_corpus, predictions)))
    return out


def ablation_table(rows: Sequence[AblationRow]) -> str:
    """One line per trained configuration, ALL-case columns."""
    headers = ("model", "ALL-F1", "ALL-P", "ALL-R", "Dep-F1", "Zero-F1",
               "F1@2", "F1@3", "F1@4", "F1@>=5")
    width = max([len(headers[0])] + [len(r.name) for r in rows])
    lines = [f"{headers[0]:<{width}} " + " ".join(f"{h:>8}" for h in headers[1:])]
    for row in rows:
        rep = row.report
        vals = [rep.f1("ALL"), rep.counts("ALL").precision, rep.counts("ALL").recall,
                rep.f1("ALL", "dep"), rep.f1("ALL", "zero"), rep.f1("ALL", "d2"),
                rep.f1("ALL", "d3"), rep.f1("ALL", "d4"), rep.f1("ALL", "d5plus")]
        lines.append(f"{row.name:<{width}} " + " ".join(f"{v:>8.4f}" for v in vals))
    return "\n".join(lines) + "\n"


def write_ablation_csv(rows: Sequence[AblationRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("model,case," + ",".join(REPORT_COLUMNS) + "\n")
        for row in rows:
            for case in REPORT_CASES:
                vals = _row_values(row.report, case)[:len(REPORT_COLUMNS)]
                fh.write(",".join([row.name, case] + [f"{v:.4f}" for v in vals]) + "\n")

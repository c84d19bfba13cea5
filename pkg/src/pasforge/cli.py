"""Command-line pipeline: build artifacts, train, predict, evaluate,
run ablations, generate synthetic corpora, and check gradients.

Settings come from an optional flat key=value config file overridden by
command-line flags. BLAS thread counts are pinned from --threads before
numpy loads anywhere, which is why the heavyweight imports in this module
sit inside the command functions.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")

log = logging.getLogger("pasforge")


class UsageError(Exception):
    """Bad flags, bad config keys, or missing input paths; exits with 2."""


def _parse_bool(text: str) -> bool:
    if text not in ("true", "false"):
        raise ValueError(f"expected true or false, got {text!r}")
    return text == "true"


# every key accepted in a config file, with the converter applied to its value
KEY_TYPES = {
    "train_corpus": str, "dev_corpus": str, "corpus": str, "embeddings": str,
    "artifacts": str, "model": str, "out": str, "predictions": str,
    "thresholds": str,
    "model_type": str, "removed_groups": str,
    "word_dim": int, "path_item_dim": int, "gru_hidden": int,
    "hidden_dim": int, "hidden_layers": int, "dropout": float,
    "lemma_min_count": int, "feature_min_count": int,
    "batch_size": int, "max_epochs": int, "patience": int,
    "lr": float, "beta1": float, "beta2": float, "eps": float,
    "shuffle": _parse_bool, "calibrate_on": str, "ensemble": int,
    "seed": int, "threads": int,
    "sentences": int, "noun_vocab": int, "verb_vocab": int,
    "zero_fraction": float, "distractor_rate": float,
    "extra_phrases": int, "bridge_predicates": float,
}


def read_run_config(path: str) -> dict:
    if not os.path.isfile(path):
        raise UsageError(f"--config: {path} does not exist")
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            if key not in KEY_TYPES:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = KEY_TYPES[key](value)
            except ValueError as err:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {err}")
    return values


def _require_path(value: str | None, flag: str) -> Path:
    if value is None:
        raise UsageError(f"missing required {flag}")
    p = Path(value)
    if not p.exists():
        raise UsageError(f"{flag}: {p} does not exist")
    return p


def _require_out(value: str | None, flag: str) -> Path:
    if value is None:
        raise UsageError(f"missing required {flag}")
    return Path(value)


def _pick(value, default):
    return default if value is None else value


def _model_config(args):
    from .model import config_for
    from .features import ABLATABLE_GROUPS

    removed = frozenset()
    if args.removed_groups:
        removed = frozenset(g.strip() for g in args.removed_groups.split(",") if g.strip())
        bad = removed - set(ABLATABLE_GROUPS)
        if bad:
            raise UsageError(f"--removed-groups: unknown group(s) {', '.join(sorted(bad))}; "
                             f"choose from {', '.join(ABLATABLE_GROUPS)}")
    base = config_for(_pick(getattr(args, "model_type", None), "WBP-Shwartz"))
    import dataclasses
    overrides = {"removed_groups": removed}
    for name in ("word_dim", "path_item_dim", "gru_hidden", "hidden_dim",
                 "hidden_layers", "dropout", "lemma_min_count", "feature_min_count"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    return dataclasses.replace(base, **overrides)


def _training_config(args, seed: int):
    from .training import TrainingConfig

    return TrainingConfig(
        batch_size=_pick(args.batch_size, 128),
        max_epochs=_pick(args.max_epochs, 100),
        patience=_pick(args.patience, 5),
        lr=_pick(args.lr, 5e-4),
        beta1=_pick(args.beta1, 0.9),
        beta2=_pick(args.beta2, 0.999),
        eps=_pick(args.eps, 1e-8),
        seed=seed,
        shuffle=_pick(args.shuffle, True),
    )


def _parse_corpus(path: Path):
    from .corpus import parse_corpus_file

    return parse_corpus_file(path)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


ARTIFACT_NAMES = ("lemma_vocab.txt", "direction_vocab.txt", "features.txt",
                  "word_emb.txt", "path_emb.txt", "dir_emb.txt")


def cmd_build(args) -> int:
    import numpy as np

    from . import vocab as voc
    from .features import build_feature_index, save_feature_index

    corpus = _parse_corpus(_require_path(args.train_corpus, "--train-corpus"))
    out = _require_out(args.out, "--out")
    out.mkdir(parents=True, exist_ok=True)
    cfg = _model_config(args)
    seed = _pick(args.seed, 0)

    lemma_vocab = voc.build_vocab(corpus, voc.KIND_LEMMA, cfg.lemma_min_count)
    direction_vocab = voc.build_vocab(corpus, voc.KIND_DIRECTION)
    index = build_feature_index(corpus, cfg.removed_groups, cfg.feature_min_count)
    rng = np.random.default_rng(seed)
    if args.embeddings is not None:
        pretrained = _require_path(args.embeddings, "--embeddings")
        word_table, copied = voc.load_pretrained(pretrained, lemma_vocab, rng, cfg.word_dim)
        log.info("pretrained vectors cover %d of %d symbols", copied, len(lemma_vocab))
    else:
        word_table = voc.random_table(lemma_vocab, cfg.word_dim, rng)
    path_table = voc.random_table(lemma_vocab, cfg.path_item_dim, rng)
    dir_table = voc.random_table(direction_vocab, cfg.path_item_dim, rng)

    voc.save_vocab(lemma_vocab, out / "lemma_vocab.txt")
    voc.save_vocab(direction_vocab, out / "direction_vocab.txt")
    save_feature_index(index, out / "features.txt")
    voc.save_embeddings(word_table, out / "word_emb.txt")
    voc.save_embeddings(path_table, out / "path_emb.txt")
    voc.save_embeddings(dir_table, out / "dir_emb.txt")
    with open(out / "manifest.txt", "w", encoding="utf-8") as fh:
        for name in ARTIFACT_NAMES:
            fh.write(f"{_sha256(out / name)}  {name}\n")
    log.info("wrote %d artifacts to %s (%d lemma symbols, %d features)",
             len(ARTIFACT_NAMES) + 1, out, len(lemma_vocab), len(index))
    return 0


def _load_artifacts(art_dir: Path, cfg):
    from . import vocab as voc
    from .features import read_feature_index

    for name in ARTIFACT_NAMES:
        if not (art_dir / name).exists():
            raise UsageError(f"--artifacts: {art_dir / name} is missing")
    lemma_vocab = voc.read_vocab(art_dir / "lemma_vocab.txt", voc.KIND_LEMMA)
    direction_vocab = voc.read_vocab(art_dir / "direction_vocab.txt", voc.KIND_DIRECTION)
    index = read_feature_index(art_dir / "features.txt", cfg.feature_min_count)
    import numpy as np
    rng = np.random.default_rng(0)
    word, _ = voc.load_pretrained(art_dir / "word_emb.txt", lemma_vocab, rng, cfg.word_dim)
    path, _ = voc.load_pretrained(art_dir / "path_emb.txt", lemma_vocab, rng, cfg.path_item_dim)
    direction, _ = voc.load_pretrained(art_dir / "dir_emb.txt", direction_vocab,
                                       rng, cfg.path_item_dim)
    return lemma_vocab, direction_vocab, index, word.weights, path.weights, direction.weights


def cmd_train(args) -> int:
    import numpy as np

    from . import training as tr
    from . import vocab as voc
    from .features import build_feature_index
    from .inference import ensemble_probabilities, write_thresholds
    from .model import PasModel, save_model
    from .plots import plot_history

    train_corpus = _parse_corpus(_require_path(args.train_corpus, "--train-corpus"))
    dev_corpus = _parse_corpus(_require_path(args.dev_corpus, "--dev-corpus"))
    out = _require_out(args.out, "--out")
    cfg = _model_config(args)
    seed = _pick(args.seed, 0)
    k = _pick(args.ensemble, 0)
    calibrate_on = _pick(args.calibrate_on, "train")
    if calibrate_on not in ("train", "dev"):
        raise UsageError(f"--calibrate-on must be train or dev, got {calibrate_on!r}")
    dtype = np.float64 if args.use64bit else np.float32

    word_init = path_init = dir_init = None
    if args.artifacts is not None:
        art_dir = _require_path(args.artifacts, "--artifacts")
        (lemma_vocab, direction_vocab, index,
         word_init, path_init, dir_init) = _load_artifacts(art_dir, cfg)
    else:
        lemma_vocab = voc.build_vocab(train_corpus, voc.KIND_LEMMA, cfg.lemma_min_count)
        direction_vocab = voc.build_vocab(train_corpus, voc.KIND_DIRECTION)
        index = build_feature_index(train_corpus, cfg.removed_groups, cfg.feature_min_count)

    train_instances = tr.make_instances(train_corpus, lemma_vocab, direction_vocab,
                                        index, cfg.removed_groups)
    dev_instances = tr.make_instances(dev_corpus, lemma_vocab, direction_vocab,
                                      index, cfg.removed_groups)
    calib_instances = train_instances if calibrate_on == "train" else dev_instances
    log.info("%d training and %d dev instances, %d features",
             len(train_instances), len(dev_instances), len(index))

    members = []
    for i in range(max(k, 1)):
        member_seed = seed + i
        member_dir = out / f"member{i}" if k else out
        rng = np.random.default_rng(member_seed)
        model = PasModel(cfg, lemma_vocab, direction_vocab, index, rng, dtype,
                         word_init=word_init, path_init=path_init, dir_init=dir_init)
        result = tr.train(model, train_instances, dev_instances,
                          _training_config(args, member_seed))
        model.thresholds = tr.calibrate_thresholds(model, calib_instances)
        save_model(model, member_dir)
        tr.write_history(result.history, member_dir / "history.csv")
        plot_history(result.history, member_dir / "loss_curve.png")
        log.info("model %s: best epoch %d (dev loss %.6f), thresholds %s",
                 member_dir, result.best_epoch, result.best_dev_loss,
                 " ".join(f"{c}={t:.2f}" for c, t in model.thresholds.items()))
        members.append(model)

    if k:
        probs = ensemble_probabilities(members, calib_instances)
        thresholds = tr.grid_search_thresholds(calib_instances, probs)
        write_thresholds(thresholds, out / "thresholds.txt")
        log.info("ensemble of %d: thresholds %s", k,
                 " ".join(f"{c}={t:.2f}" for c, t in thresholds.items()))
    return 0


def cmd_predict(args) -> int:
    import numpy as np

    from .inference import decode_corpus, load_models, read_thresholds, write_predictions

    model_dir = _require_path(args.model, "--model")
    corpus = _parse_corpus(_require_path(args.corpus, "--corpus"))
    out = _require_out(args.out, "--out")
    dtype = np.float64 if args.use64bit else np.float32
    models, thresholds = load_models(model_dir, dtype)
    if args.thresholds is not None:
        thresholds = read_thresholds(_require_path(args.thresholds, "--thresholds"))
    predictions = decode_corpus(models, corpus, thresholds)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_predictions(predictions, out)
    log.info("wrote %d predictions to %s (%d models)", len(predictions), out, len(models))
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import evaluate, report_text, write_report_csv
    from .inference import read_predictions
    from .plots import plot_f1_by_distance

    corpus = _parse_corpus(_require_path(args.corpus, "--corpus"))
    predictions = read_predictions(_require_path(args.predictions, "--predictions"))
    out = _require_out(args.out, "--out")
    out.mkdir(parents=True, exist_ok=True)
    report = evaluate(corpus, predictions)
    text = report_text(report)
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(text)
    write_report_csv(report, out / "report.csv")
    plot_f1_by_distance(report, out / "f1_by_distance.png")
    sys.stdout.write(text)
    return 0


DEFAULT_ABLATION_ROWS = ("WBP-Shwartz", "WBP-Roth", "WB", "B",
                         "WBP-Shwartz~word+path", "B~cases")


def _parse_row_spec(spec: str):
    from .features import ABLATABLE_GROUPS
    from .model import config_for

    name, sep, removed_text = spec.partition("~")
    removed = frozenset(removed_text.split("+")) if sep else frozenset()
    bad = removed - set(ABLATABLE_GROUPS)
    if bad:
        raise UsageError(f"--row {spec!r}: unknown feature group(s) {', '.join(sorted(bad))}")
    try:
        config = config_for(name, removed_groups=removed)
    except ValueError as err:
        raise UsageError(f"--row {spec!r}: {err}")
    return spec, config


def cmd_ablate(args) -> int:
    import dataclasses

    from .evaluation import ablation_table, run_ablations, write_ablation_csv
    from .plots import plot_ablation

    train_corpus = _parse_corpus(_require_path(args.train_corpus, "--train-corpus"))
    dev_corpus = _parse_corpus(_require_path(args.dev_corpus, "--dev-corpus"))
    out = _require_out(args.out, "--out")
    out.mkdir(parents=True, exist_ok=True)
    specs = args.row if args.row else list(DEFAULT_ABLATION_ROWS)
    rows = []
    for spec in specs:
        name, config = _parse_row_spec(spec)
        overrides = {}
        for field in ("word_dim", "path_item_dim", "gru_hidden", "hidden_dim",
                      "hidden_layers", "dropout", "lemma_min_count", "feature_min_count"):
            value = getattr(args, field)
            if value is not None:
                overrides[field] = value
        rows.append((name, dataclasses.replace(config, **overrides)))

    results = run_ablations(rows, train_corpus, dev_corpus,
                            _training_config(args, _pick(args.seed, 0)),
                            calibrate_on=_pick(args.calibrate_on, "train"))
    table = ablation_table(results)
    with open(out / "ablation.txt", "w", encoding="utf-8") as fh:
        fh.write(table)
    write_ablation_csv(results, out / "ablation.csv")
    plot_ablation(results, out / "ablation.png")
    sys.stdout.write(table)
    return 0


def cmd_gen_synthetic(args) -> int:
    from .corpus import write_corpus_file
    from .synthetic import SyntheticConfig, generate_corpus

    out = _require_out(args.out, "--out")
    try:
        cfg = SyntheticConfig(
            sentences=_pick(args.sentences, 100),
            noun_vocab=_pick(args.noun_vocab, 50),
            verb_vocab=_pick(args.verb_vocab, 12),
            zero_fraction=_pick(args.zero_fraction, 0.25),
            distractor_rate=_pick(args.distractor_rate, 0.5),
            extra_phrases=_pick(args.extra_phrases, 2),
            bridge_predicates=_pick(args.bridge_predicates, 0.0),
            seed=_pick(args.seed, 0),
        )
    except ValueError as err:
        raise UsageError(str(err))
    corpus = generate_corpus(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus_file(corpus, out)
    n_preds = sum(len(s.predicates) for s in corpus)
    n_args = sum(len(p.gold) for s in corpus for p in s.predicates)
    log.info("wrote %d sentences (%d predicates, %d gold arguments) to %s",
             len(corpus), n_preds, n_args, out)
    return 0


def run_gradient_suite(samples: int = 4):
    """Finite-difference checks over full forward/backward passes of tiny
    64-bit models: one per input configuration, with path lengths 1, 5 and
    a truncated 15. Returns [(name, GradCheckReport)]."""
    import numpy as np

    from . import nn
    from .corpus import DIRECTIONS
    from .features import FeatureIndex
    from .model import Instance, ModelConfig, PasModel, make_batch
    from .vocab import KIND_DIRECTION, KIND_LEMMA, build_vocab, Vocabulary, PAD, PATH_GAP

    entries = {PAD: 0, PATH_GAP: 1}
    for i in range(7):
        entries[f"sym{i}"] = len(entries)
    lemma_vocab = Vocabulary(entries, KIND_LEMMA)
    direction_vocab = build_vocab([], KIND_DIRECTION)
    index = FeatureIndex({f"f{i}": i for i in range(11)}, 10)

    def tiny_instances(rng) -> list:
        instances = []
        for row, length in enumerate((1, 5, 15, 2, 5, 1, 15, 3)):
            path = np.stack([
                rng.integers(0, len(lemma_vocab), size=length),
                rng.integers(0, len(lemma_vocab), size=length),
                rng.integers(0, len(DIRECTIONS), size=length) + 2,
            ], axis=1).astype(np.int32)
            instances.append(Instance(
                sent_id=0, pred_token=0, cand_token=row + 1,
                label=int(rng.integers(4)),
                word_p=int(rng.integers(len(lemma_vocab))),
                word_a=int(rng.integers(len(lemma_vocab))),
                path=path,
                binary=np.sort(rng.choice(len(index), size=4, replace=False)).astype(np.int32),
            ))
        return instances

    variants = (
        ("binary-only dense+bn+relu stack", dict(use_word_emb=False, path_variant="none")),
        ("word embeddings + binary", dict(use_word_emb=True, path_variant="none")),
        ("roth path encoder (3 steps per item)", dict(path_variant="roth")),
        ("shwartz path encoder (1 step per item)", dict(path_variant="shwartz")),
    )
    results = []
    for name, flags in variants:
        rng = np.random.default_rng(11)
        config = ModelConfig(use_binary=True, word_dim=5, path_item_dim=4,
                             gru_hidden=6, hidden_dim=8, hidden_layers=2,
                             dropout=0.0, **flags)
        model = PasModel(config, lemma_vocab, direction_vocab, index, rng,
                         dtype=np.float64)
        batch = make_batch(tiny_instances(rng), len(index), np.float64)

        def loss_fn() -> float:
            logits, _ = model.forward(batch, train=True)
            loss, _ = nn.softmax_cross_entropy(logits, batch.labels)
            return loss

        model.zero_grad()
        logits, cache = model.forward(batch, train=True)
        _, probs = nn.softmax_cross_entropy(logits, batch.labels)
        model.backward(nn.softmax_cross_entropy_grad(probs, batch.labels), cache)
        report = nn.check_gradients(loss_fn, model.parameters(),
                                    np.random.default_rng(7), samples=samples)
        results.append((name, report))
    return results


def cmd_grad_check(args) -> int:
    results = run_gradient_suite()
    failed = False
    for name, report in results:
        status = "PASS" if report.passed else "FAIL"
        print(f"{name}: {report.checked} coordinates, "
              f"max rel err {report.max_rel_error:.3e} ({report.worst_param}) {status}")
        for f in report.failures[:5]:
            print(f"  {f.param}{list(f.coord)}: analytic {f.analytic:.6e} "
                  f"vs numeric {f.numeric:.6e} (rel {f.rel_error:.3e})")
        failed = failed or not report.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key=value settings file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None,
                        help="BLAS thread count (default 1)")
    common.add_argument("--64bit", dest="use64bit", action="store_true", default=False,
                        help="run float64 (gradient-check precision)")

    dims = argparse.ArgumentParser(add_help=False)
    for flag in ("--word-dim", "--path-item-dim", "--gru-hidden", "--hidden-dim",
                 "--hidden-layers", "--lemma-min-count", "--feature-min-count"):
        dims.add_argument(flag, type=int, default=None)
    dims.add_argument("--dropout", type=float, default=None)
    dims.add_argument("--removed-groups", default=None,
                      help="comma list of feature groups to drop (word,path,cases)")

    training = argparse.ArgumentParser(add_help=False)
    for flag in ("--batch-size", "--max-epochs", "--patience"):
        training.add_argument(flag, type=int, default=None)
    for flag in ("--lr", "--beta1", "--beta2", "--eps"):
        training.add_argument(flag, type=float, default=None)
    training.add_argument("--no-shuffle", dest="shuffle", action="store_false", default=None)
    training.add_argument("--calibrate-on", choices=("train", "dev"), default=None)

    parser = argparse.ArgumentParser(
        prog="pasforge",
        description="Neural predicate-argument structure analyzer for Japanese "
                    "dependency corpora")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[common, dims],
                       help="build vocabularies, feature index, and embedding tables")
    p.add_argument("--train-corpus", default=None)
    p.add_argument("--embeddings", default=None, help="pretrained word vectors (text)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", parents=[common, dims, training],
                       help="train a model (or an ensemble) and calibrate thresholds")
    p.add_argument("--train-corpus", default=None)
    p.add_argument("--dev-corpus", default=None)
    p.add_argument("--artifacts", default=None, help="directory written by build")
    p.add_argument("--model-type", choices=("B", "WB", "WBP-Roth", "WBP-Shwartz"),
                   default=None)
    p.add_argument("--ensemble", type=int, default=None, metavar="K",
                   help="train K members with seeds seed..seed+K-1")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common],
                       help="decode a corpus with a trained model or ensemble")
    p.add_argument("--model", default=None)
    p.add_argument("--corpus", default=None)
    p.add_argument("--thresholds", default=None, help="override stored thresholds")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score predictions against gold annotations")
    p.add_argument("--corpus", default=None)
    p.add_argument("--predictions", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common, dims, training],
                       help="train and evaluate a matrix of model configurations")
    p.add_argument("--train-corpus", default=None)
    p.add_argument("--dev-corpus", default=None)
    p.add_argument("--row", action="append", default=None,
                   metavar="TYPE[~GROUP+GROUP]",
                   help="model row, e.g. WBP-Shwartz or B~cases (repeatable)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen-synthetic", parents=[common],
                       help="generate a seeded synthetic corpus")
    p.add_argument("--sentences", type=int, default=None)
    p.add_argument("--noun-vocab", type=int, default=None)
    p.add_argument("--verb-vocab", type=int, default=None)
    p.add_argument("--zero-fraction", type=float, default=None)
    p.add_argument("--distractor-rate", type=float, default=None)
    p.add_argument("--extra-phrases", type=int, default=None)
    p.add_argument("--bridge-predicates", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("grad-check", parents=[common],
                       help="verify analytic gradients with central differences")
    p.set_defaults(func=cmd_grad_check)
    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("PASFORGE_LOG", "info")
    if level_name not in LOG_LEVELS:
        raise UsageError(f"PASFORGE_LOG must be one of {', '.join(LOG_LEVELS)}, "
                         f"got {level_name!r}")
    logging.basicConfig(level=LOG_LEVELS[level_name], format="%(message)s", force=True)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        _setup_logging()
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        pre.add_argument("--threads", type=int)
        early, _ = pre.parse_known_args(argv)
        file_cfg = read_run_config(early.config) if early.config else {}
        threads = early.threads if early.threads is not None else file_cfg.get("threads", 1)
        if threads < 1:
            raise UsageError(f"--threads must be positive, got {threads}")
        for var in _THREAD_VARS:
            os.environ[var] = str(threads)

        parser = build_parser()
        args = parser.parse_args(argv)
        # flags override the config file; every flag defaults to None so a
        # post-parse merge sees exactly the ones left unset
        for key, value in file_cfg.items():
            if getattr(args, key, None) is None:
                setattr(args, key, value)
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, FloatingPointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

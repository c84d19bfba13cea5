"""The case-label classifier: embeddings, path GRU, hidden stack, softmax.

Three input blocks can be switched on independently: word embeddings of
the predicate and candidate (W), a GRU encoding of the dependency path
between them (P, in "roth" or "shwartz" variant), and the sparse binary
features (B). The concatenated input [h_path, w_p, w_a, f(x_a)] runs
through dense -> batch norm -> ReLU blocks into a 4-way softmax over
NOM / ACC / DAT / NONE.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import nn
from .corpus import LABELS
from .features import FeatureIndex, PathSequence, read_feature_index, save_feature_index
from .vocab import (KIND_DIRECTION, KIND_LEMMA, PAD, Vocabulary, read_vocab, save_vocab)

PATH_NONE = "none"
PATH_ROTH = "roth"
PATH_SHWARTZ = "shwartz"
PATH_VARIANTS = (PATH_NONE, PATH_ROTH, PATH_SHWARTZ)

# the four configurations reported in ablations, by conventional name
MODEL_TYPES = {
    "B": (False, PATH_NONE, True),
    "WB": (True, PATH_NONE, True),
    "WBP-Roth": (True, PATH_ROTH, True),
    "WBP-Shwartz": (True, PATH_SHWARTZ, True),
}

CONFIG_FILE = "config.txt"
TENSOR_FILE = "tensors.bin"
LEMMA_VOCAB_FILE = "lemma_vocab.txt"
DIRECTION_VOCAB_FILE = "direction_vocab.txt"
FEATURE_FILE = "features.txt"
THRESHOLD_FILE = "thresholds.txt"


@dataclass(frozen=True)
class ModelConfig:
    use_word_emb: bool = True
    path_variant: str = PATH_SHWARTZ
    use_binary: bool = True
    removed_groups: frozenset[str] = frozenset()
    word_dim: int = 256
    path_item_dim: int = 64
    gru_hidden: int = 192
    hidden_dim: int = 2000
    hidden_layers: int = 2
    dropout: float = 0.2
    lemma_min_count: int = 5
    feature_min_count: int = 10

    def __post_init__(self):
        if self.path_variant not in PATH_VARIANTS:
            raise ValueError(f"unknown path variant {self.path_variant!r}; "
                             f"expected one of {', '.join(PATH_VARIANTS)}")
        if not (self.use_word_emb or self.uses_path or self.use_binary):
            raise ValueError("at least one input block (W, P, B) must be enabled")
        for name in ("word_dim", "path_item_dim", "gru_hidden", "hidden_dim", "hidden_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def uses_path(self) -> bool:
        return self.path_variant != PATH_NONE

    @property
    def gru_input_dim(self) -> int:
        # shwartz packs pos+lemma+direction into one timestep
        return 3 * self.path_item_dim if self.path_variant == PATH_SHWARTZ else self.path_item_dim


def config_for(model_type: str, **overrides) -> ModelConfig:
    """ModelConfig for a conventional name: B, WB, WBP-Roth, WBP-Shwartz."""
    if model_type not in MODEL_TYPES:
        raise ValueError(f"unknown model type {model_type!r}; "
                         f"expected one of {', '.join(MODEL_TYPES)}")
    use_w, variant, use_b = MODEL_TYPES[model_type]
    return ModelConfig(use_word_emb=use_w, path_variant=variant, use_binary=use_b, **overrides)


def model_type_name(config: ModelConfig) -> str:
    for name, flags in MODEL_TYPES.items():
        if flags == (config.use_word_emb, config.path_variant, config.use_binary):
            return name
    parts = [p for p, on in (("W", config.use_word_emb), ("P", config.uses_path),
                             ("B", config.use_binary)) if on]
    suffix = f"-{config.path_variant.capitalize()}" if config.uses_path else ""
    return "".join(parts) + suffix


@dataclass(frozen=True, eq=False)
class Instance:
    """One (predicate, candidate) pair, fully vectorized."""
    sent_id: int
    pred_token: int
    cand_token: int
    label: int  # index into LABELS
    word_p: int
    word_a: int
    path: np.ndarray  # [L, 3] int32 columns pos, lemma, direction
    binary: np.ndarray  # sorted int32 feature ids


def lookup_or_pad(vocab: Vocabulary, lemma: str, pos: str) -> int:
    """Vocabulary lookup with POS fallback; symbols absent entirely (unseen
    POS outside the training corpus) map to PAD."""
    try:
        return vocab.lookup(lemma, pos)
    except KeyError:
        return vocab.id_of(PAD)


def path_to_ids(seq: PathSequence, lemma_vocab: Vocabulary,
                direction_vocab: Vocabulary) -> np.ndarray:
    """[L, 3] id array (pos, lemma, direction) for one path. POS and lemma
    share the lemma table, whose POS-fallback symbols cover both roles."""
    ids = np.empty((len(seq), 3), dtype=np.int32)
    for i, item in enumerate(seq):
        ids[i, 0] = lookup_or_pad(lemma_vocab, item.pos, item.pos)
        ids[i, 1] = lookup_or_pad(lemma_vocab, item.lemma, item.pos)
        ids[i, 2] = direction_vocab.id_of(item.direction)
    return ids


class Batch(NamedTuple):
    binary: np.ndarray  # [B, F] 0/1
    word_p: np.ndarray  # [B] int32
    word_a: np.ndarray  # [B] int32
    groups: list[tuple[np.ndarray, np.ndarray]]  # (member rows, ids [B_g, L, 3])
    labels: np.ndarray  # [B] int64


def make_batch(instances: list[Instance], n_features: int, dtype=np.float32) -> Batch:
    """Densify one batch, grouping instances by path length so each group
    runs through the GRU as one rectangular tensor."""
    n = len(instances)
    binary = np.zeros((n, n_features), dtype=dtype)
    for row, inst in enumerate(instances):
        binary[row, inst.binary] = 1.0
    word_p = np.array([inst.word_p for inst in instances], dtype=np.int32)
    word_a = np.array([inst.word_a for inst in instances], dtype=np.int32)
    labels = np.array([inst.label for inst in instances], dtype=np.int64)

    by_len: dict[int, list[int]] = {}
    for row, inst in enumerate(instances):
        by_len.setdefault(len(inst.path), []).append(row)
    groups = []
    for length in sorted(by_len):
        members = np.array(by_len[length], dtype=np.int64)
        ids = np.stack([instances[r].path for r in members])
        groups.append((members, ids))
    return Batch(binary, word_p, word_a, groups, labels)


class _GroupCache(NamedTuple):
    members: np.ndarray
    ids: np.ndarray
    drop_mask: np.ndarray | None
    gru_caches: list


class ForwardCache(NamedTuple):
    batch: Batch
    group_caches: list[_GroupCache]
    layer_caches: list[tuple[np.ndarray, tuple, np.ndarray]]  # (layer in, bn cache, relu mask)
    out_in: np.ndarray


class PasModel:
    def __init__(self, config: ModelConfig, lemma_vocab: Vocabulary,
                 direction_vocab: Vocabulary, feature_index: FeatureIndex,
                 rng: np.random.Generator, dtype=np.float32,
                 word_init: np.ndarray | None = None,
                 path_init: np.ndarray | None = None,
                 dir_init: np.ndarray | None = None):
        self.config = config
        self.lemma_vocab = lemma_vocab
        self.direction_vocab = direction_vocab
        self.feature_index = feature_index
        self.dtype = dtype
        # uncalibrated decoding gates nothing
        self.thresholds = {case: 0.0 for case in LABELS[:-1]}

        c = config
        uniform = lambda shape: rng.uniform(-0.05, 0.05, size=shape).astype(dtype)
        self.word_emb = None
        self.path_emb = None
        self.dir_emb = None
        self.gru = None
        if c.use_word_emb:
            init = uniform((len(lemma_vocab), c.word_dim)) if word_init is None \
                else word_init.astype(dtype)
            self.word_emb = nn.Parameter("word_emb", init)
        if c.uses_path:
            init = uniform((len(lemma_vocab), c.path_item_dim)) if path_init is None \
                else path_init.astype(dtype)
            self.path_emb = nn.Parameter("path_emb", init)
            init = uniform((len(direction_vocab), c.path_item_dim)) if dir_init is None \
                else dir_init.astype(dtype)
            self.dir_emb = nn.Parameter("dir_emb", init)
            self.gru = nn.GRUCell("gru", c.gru_input_dim, c.gru_hidden, rng, dtype)

        self.input_dim = (c.gru_hidden if c.uses_path else 0) \
            + (2 * c.word_dim if c.use_word_emb else 0) \
            + (len(feature_index) if c.use_binary else 0)

        self.hidden: list[tuple[nn.Parameter, nn.Parameter, nn.BatchNorm]] = []
        d_in = self.input_dim
        for i in range(c.hidden_layers):
            w = nn.Parameter(f"hidden{i}.W", nn.glorot_init(d_in, c.hidden_dim, rng, dtype))
            b = nn.Parameter(f"hidden{i}.b", np.zeros(c.hidden_dim, dtype=dtype))
            self.hidden.append((w, b, nn.BatchNorm(f"bn{i}", c.hidden_dim, dtype)))
            d_in = c.hidden_dim
        self.out_w = nn.Parameter("out.W", nn.glorot_init(d_in, len(LABELS), rng, dtype))
        self.out_b = nn.Parameter("out.b", np.zeros(len(LABELS), dtype=dtype))

    def parameters(self) -> list[nn.Parameter]:
        params: list[nn.Parameter] = []
        for emb in (self.word_emb, self.path_emb, self.dir_emb):
            if emb is not None:
                params.append(emb)
        if self.gru is not None:
            params.extend(self.gru.parameters())
        for w, b, bn in self.hidden:
            params.extend([w, b] + bn.parameters())
        params.extend([self.out_w, self.out_b])
        return params

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def _embed_group(self, ids: np.ndarray) -> np.ndarray:
        """ids [B_g, L, 3] -> GRU inputs [T, B_g, d_in], predicate end first."""
        pos_rows = self.path_emb.value[ids[:, :, 0]]  # [B, L, d]
        lem_rows = self.path_emb.value[ids[:, :, 1]]
        dir_rows = self.dir_emb.value[ids[:, :, 2]]
        if self.config.path_variant == PATH_SHWARTZ:
            xs = np.concatenate([pos_rows, lem_rows, dir_rows], axis=2)
            return np.ascontiguousarray(xs.transpose(1, 0, 2))
        length = ids.shape[1]
        xs = np.empty((3 * length, ids.shape[0], self.config.path_item_dim), dtype=self.dtype)
        for i in range(length):
            xs[3 * i] = pos_rows[:, i]
            xs[3 * i + 1] = lem_rows[:, i]
            xs[3 * i + 2] = dir_rows[:, i]
        return xs

    def _scatter_group_grads(self, ids: np.ndarray, dxs: np.ndarray) -> None:
        d = self.config.path_item_dim
        if self.config.path_variant == PATH_SHWARTZ:
            per_item = dxs.transpose(1, 0, 2)  # [B, L, 3d]
            np.add.at(self.path_emb.grad, ids[:, :, 0], per_item[:, :, :d])
            np.add.at(self.path_emb.grad, ids[:, :, 1], per_item[:, :, d:2 * d])
            np.add.at(self.dir_emb.grad, ids[:, :, 2], per_item[:, :, 2 * d:])
            return
        for i in range(ids.shape[1]):
            np.add.at(self.path_emb.grad, ids[:, i, 0], dxs[3 * i])
            np.add.at(self.path_emb.grad, ids[:, i, 1], dxs[3 * i + 1])
            np.add.at(self.dir_emb.grad, ids[:, i, 2], dxs[3 * i + 2])

    def encode_path(self, seq: PathSequence) -> np.ndarray:
        """Final GRU hidden state for one path, inference mode."""
        if not self.config.uses_path:
            raise ValueError("model has no path encoder")
        ids = path_to_ids(seq, self.lemma_vocab, self.direction_vocab)
        xs = self._embed_group(ids[np.newaxis])
        h, _ = self.gru.forward(xs)
        return h[0]

    def forward(self, batch: Batch, train: bool,
                rng: np.random.Generator | None = None) -> tuple[np.ndarray, ForwardCache]:
        c = self.config
        n = batch.labels.shape[0]
        parts: list[np.ndarray] = []
        group_caches: list[_GroupCache] = []
        if c.uses_path:
            h_path = np.zeros((n, c.gru_hidden), dtype=self.dtype)
            for members, ids in batch.groups:
                xs = self._embed_group(ids)
                xs, mask = nn.dropout_forward(xs, c.dropout, rng, train)
                h, caches = self.gru.forward(xs)
                h_path[members] = h
                group_caches.append(_GroupCache(members, ids, mask, caches))
            parts.append(h_path)
        if c.use_word_emb:
            parts.append(self.word_emb.value[batch.word_p])
            parts.append(self.word_emb.value[batch.word_a])
        if c.use_binary:
            parts.append(batch.binary)
        x = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]

        layer_caches = []
        for w, b, bn in self.hidden:
            pre = nn.dense_forward(x, w, b)
            normed, bn_cache = bn.forward(pre, train)
            out, relu_mask = nn.relu_forward(normed)
            layer_caches.append((x, bn_cache, relu_mask))
            x = out
        logits = nn.dense_forward(x, self.out_w, self.out_b)
        return logits, ForwardCache(batch, group_caches, layer_caches, x)

    def backward(self, dlogits: np.ndarray, cache: ForwardCache) -> None:
        c = self.config
        dx = nn.dense_backward(dlogits, cache.out_in, self.out_w, self.out_b)
        for (w, b, bn), (x_in, bn_cache, relu_mask) in zip(reversed(self.hidden),
                                                           reversed(cache.layer_caches)):
            dx = nn.relu_backward(dx, relu_mask)
            dx = bn.backward(dx, bn_cache)
            dx = nn.dense_backward(dx, x_in, w, b)

        offset = 0
        if c.uses_path:
            dh_path = dx[:, :c.gru_hidden]
            offset = c.gru_hidden
            for gc in cache.group_caches:
                dxs = self.gru.backward(dh_path[gc.members], gc.gru_caches)
                dxs = nn.dropout_backward(dxs, gc.drop_mask)
                self._scatter_group_grads(gc.ids, dxs)
        if c.use_word_emb:
            d = c.word_dim
            np.add.at(self.word_emb.grad, cache.batch.word_p, dx[:, offset:offset + d])
            np.add.at(self.word_emb.grad, cache.batch.word_a, dx[:, offset + d:offset + 2 * d])

    def predict_proba(self, instances: list[Instance], batch_size: int = 256) -> np.ndarray:
        """Class probabilities in evaluation mode (running batch norm stats,
        no dropout), so results do not depend on how instances are batched."""
        out = np.zeros((len(instances), len(LABELS)), dtype=np.float64)
        for start in range(0, len(instances), batch_size):
            chunk = instances[start:start + batch_size]
            batch = make_batch(chunk, len(self.feature_index), self.dtype)
            logits, _ = self.forward(batch, train=False)
            out[start:start + len(chunk)] = nn.softmax(logits.astype(np.float64))
        return out

    def named_tensors(self) -> dict[str, np.ndarray]:
        named: dict[str, np.ndarray] = {}
        for p in self.parameters():
            named[p.name] = p.value
        for _, _, bn in self.hidden:
            stem = bn.gamma.name.rsplit(".", 1)[0]
            named[f"{stem}.running_mean"] = bn.running_mean
            named[f"{stem}.running_var"] = bn.running_var
        return named


def feature_index_hash(index: FeatureIndex) -> str:
    text = "".join(f"{feat}\t{i}\n" for feat, i in sorted(index.entries.items()))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _format_value(v) -> str:
    if isinstance(v, frozenset):
        return ",".join(sorted(v))
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_bool(text: str) -> bool:
    if text not in ("true", "false"):
        raise ValueError(f"expected true/false, got {text!r}")
    return text == "true"


def save_model(model: PasModel, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    c = model.config
    pairs = [("use_word_emb", c.use_word_emb), ("path_variant", c.path_variant),
             ("use_binary", c.use_binary), ("removed_groups", c.removed_groups),
             ("word_dim", c.word_dim), ("path_item_dim", c.path_item_dim),
             ("gru_hidden", c.gru_hidden), ("hidden_dim", c.hidden_dim),
             ("hidden_layers", c.hidden_layers), ("dropout", c.dropout),
             ("lemma_min_count", c.lemma_min_count),
             ("feature_min_count", c.feature_min_count),
             ("feature_hash", feature_index_hash(model.feature_index))]
    with open(out / CONFIG_FILE, "w", encoding="utf-8") as fh:
        for key, value in pairs:
            fh.write(f"{key}={_format_value(value)}\n")
    nn.write_tensors(out / TENSOR_FILE, model.named_tensors())
    save_vocab(model.lemma_vocab, out / LEMMA_VOCAB_FILE)
    save_vocab(model.direction_vocab, out / DIRECTION_VOCAB_FILE)
    save_feature_index(model.feature_index, out / FEATURE_FILE)
    with open(out / THRESHOLD_FILE, "w", encoding="utf-8") as fh:
        for case in LABELS[:-1]:
            fh.write(f"{case} {model.thresholds[case]!r}\n")


def read_config_file(path: str | Path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}: malformed line {line!r}, expected key=value")
            pairs[key] = value
    return pairs


def load_model(model_dir: str | Path, dtype=np.float32) -> PasModel:
    d = Path(model_dir)
    raw = read_config_file(d / CONFIG_FILE)
    removed = frozenset(g for g in raw["removed_groups"].split(",") if g)
    config = ModelConfig(use_word_emb=_parse_bool(raw["use_word_emb"]),
                         path_variant=raw["path_variant"],
                         use_binary=_parse_bool(raw["use_binary"]),
                         removed_groups=removed,
                         word_dim=int(raw["word_dim"]),
                         path_item_dim=int(raw["path_item_dim"]),
                         gru_hidden=int(raw["gru_hidden"]),
                         hidden_dim=int(raw["hidden_dim"]),
                         hidden_layers=int(raw["hidden_layers"]),
                         dropout=float(raw["dropout"]),
                         lemma_min_count=int(raw["lemma_min_count"]),
                         feature_min_count=int(raw["feature_min_count"]))
    lemma_vocab = read_vocab(d / LEMMA_VOCAB_FILE, KIND_LEMMA)
    direction_vocab = read_vocab(d / DIRECTION_VOCAB_FILE, KIND_DIRECTION)
    feature_index = read_feature_index(d / FEATURE_FILE, config.feature_min_count)
    got_hash = feature_index_hash(feature_index)
    if got_hash != raw["feature_hash"]:
        raise ValueError(f"{d}: feature index hash mismatch "
                         f"(config {raw['feature_hash'][:12]}..., file {got_hash[:12]}...); "
                         "checkpoint is inconsistent")

    model = PasModel(config, lemma_vocab, direction_vocab, feature_index,
                     np.random.default_rng(0), dtype)
    tensors = read_tensors_checked(d / TENSOR_FILE, model)
    for p in model.parameters():
        p.value = tensors[p.name].astype(dtype)
    for _, _, bn in model.hidden:
        stem = bn.gamma.name.rsplit(".", 1)[0]
        bn.running_mean = tensors[f"{stem}.running_mean"].astype(dtype)
        bn.running_var = tensors[f"{stem}.running_var"].astype(dtype)

    model.thresholds = {}
    with open(d / THRESHOLD_FILE, encoding="utf-8") as fh:
        for line in fh:
            case, value = line.split()
            model.thresholds[case] = float(value)
    for case in LABELS[:-1]:
        if case not in model.thresholds:
            raise ValueError(f"{d}: thresholds file is missing case {case}")
    return model


def read_tensors_checked(path: Path, model: PasModel) -> dict[str, np.ndarray]:
    tensors = nn.read_tensors(path)
    expected = model.named_tensors()
    missing = sorted(set(expected) - set(tensors))
    if missing:
        raise ValueError(f"{path}: missing tensors {', '.join(missing)}")
    for name, arr in expected.items():
        if tensors[name].shape != arr.shape:
            raise ValueError(f"{path}: tensor {name} has shape {tensors[name].shape}, "
                             f"expected {arr.shape}")
    return tensors

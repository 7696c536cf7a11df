"""Minimal trainable CTR model around the dimension-selection layer.

Per-field embeddings (masked per policy) are concatenated and fed to a
small tanh MLP head with a sigmoid output. Policies per field:

  fbe        fixed full-dimension embedding (standard baseline)
  mde        rule-based static dims per frequency block
  amtl       twins selection, straight-through training
  aml        single-branch ablation (mixing weight pinned to 1)
  amtl-nste  twins selection trained on the soft mask, no straight-through;
             inference still takes the hard path

Training is plain SGD over shuffled batches with per-batch gradient
averaging; everything is float64 and deterministic given the seed.
"""

from __future__ import annotations

import struct
import time
import zlib
from dataclasses import dataclass, field as dc_field

import numpy as np

from .data import Dataset, TrainingExample
from .embedding import EmbeddingTable, init_table, sgd_update_rows
from .errors import CheckpointError, DatasetError, NumericsError, ShapeError, VocabularyError
from .freq import FrequencyStats
from .masking import (
    AmtlParams,
    aml_backward,
    amtl_logits,
    init_amtl,
    mask_from_selection,
    one_hot_rows,
    ste_combine,
)
from .ops import (
    affine_backward,
    affine_forward,
    sigmoid,
    softmax,
    temperated_softmax,
    temperated_softmax_backward,
)

POLICIES = ("fbe", "mde", "amtl", "aml", "amtl-nste")
ADAPTIVE_POLICIES = ("amtl", "aml", "amtl-nste")

LOSS_CLAMP = 1e-12

CHECKPOINT_MAGIC = b"AMTL"
CHECKPOINT_VERSION = 1
WARM_PARTS = ("embeddings", "head", "amtl")


@dataclass(frozen=True)
class FieldConfig:
    name: str
    vocab_size: int
    dim: int
    policy: str


@dataclass(frozen=True)
class ModelConfig:
    fields: tuple[FieldConfig, ...]
    head_hidden: tuple[int, ...] = (64, 32)
    lr: float = 0.1
    epochs: int = 3
    batch_size: int = 256
    temperature: float = 0.2
    seed: int = 0
    mde_blocks: int = 3
    mde_base_dim: int = 1
    aml_hidden: int = 16
    amtl_lr_scale: float = 1.0

    def validate(self) -> "ModelConfig":
        if not self.fields:
            raise ShapeError("model needs at least one field")
        for f in self.fields:
            if f.policy not in POLICIES:
                raise ShapeError(f"unknown policy {f.policy!r} for field {f.name!r}")
            if f.dim < 1 or f.vocab_size < 1:
                raise ShapeError(f"field {f.name!r} needs positive vocab and dim")
        if len({f.name for f in self.fields}) != len(self.fields):
            raise ShapeError("duplicate field names")
        if self.lr < 0:
            raise ShapeError("learning rate must be nonnegative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ShapeError("batch_size must be positive and epochs nonnegative")
        if not self.temperature > 0:
            raise ShapeError("temperature must be positive")
        return self


@dataclass
class EpochStats:
    mean_loss: float
    seconds: float


@dataclass
class CtrModel:
    config: ModelConfig
    tables: dict[str, EmbeddingTable]
    amtls: dict[str, AmtlParams]
    mde_dims: dict[str, np.ndarray]
    head: list[tuple[np.ndarray, np.ndarray]]
    rng: np.random.Generator
    stats: dict[str, FrequencyStats] | None = None
    feature_cache: dict[str, tuple[np.ndarray, np.ndarray]] = dc_field(default_factory=dict)
    epoch_log: list[EpochStats] = dc_field(default_factory=list)

    @property
    def concat_dim(self) -> int:
        return sum(f.dim for f in self.config.fields)


def _head_dims(config: ModelConfig) -> list[int]:
    return [sum(f.dim for f in config.fields), *config.head_hidden, 1]


def _head_activations(n_layers: int) -> list[str]:
    return ["tanh"] * (n_layers - 1) + ["identity"]


def _init_head(rng: np.random.Generator, dims: list[int]) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for nin, nout in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(nin)
        layers.append((rng.uniform(-bound, bound, (nin, nout)), rng.uniform(-bound, bound, nout)))
    return layers


def _skeleton(config: ModelConfig) -> CtrModel:
    """Freshly initialized parameters; mde dims are placeholders until assigned."""
    config.validate()
    ss = np.random.SeedSequence(config.seed)
    children = ss.spawn(2 * len(config.fields) + 2)
    tables, amtls, mde_dims = {}, {}, {}
    for i, f in enumerate(config.fields):
        tables[f.name] = init_table(
            np.random.default_rng(children[2 * i]), f.name, f.vocab_size, f.dim
        )
        if f.policy in ADAPTIVE_POLICIES:
            amtls[f.name] = init_amtl(
                np.random.default_rng(children[2 * i + 1]),
                input_dim=2,
                dim=f.dim,
                hidden=config.aml_hidden,
                temperature=config.temperature,
            )
        elif f.policy == "mde":
            mde_dims[f.name] = np.zeros(f.vocab_size, dtype=np.int64)
    head = _init_head(np.random.default_rng(children[-2]), _head_dims(config))
    trainer_rng = np.random.default_rng(children[-1])
    return CtrModel(
        config=config, tables=tables, amtls=amtls, mde_dims=mde_dims, head=head, rng=trainer_rng
    )


def build_model(config: ModelConfig, stats: dict[str, FrequencyStats] | None = None) -> CtrModel:
    """Fresh model; frequency stats are required up front for mde fields and may
    be attached later (attach_stats) for the adaptive ones."""
    model = _skeleton(config)
    needs_stats = [f.name for f in config.fields if f.policy == "mde"]
    if needs_stats and stats is None:
        raise ShapeError(f"mde fields {needs_stats} need frequency stats at build time")
    if stats is not None:
        for f in config.fields:
            if f.policy == "mde":
                model.mde_dims[f.name] = mde_assign_dims(
                    stats[f.name], config.mde_blocks, config.mde_base_dim, f.dim
                )
        attach_stats(model, stats)
    return model


def attach_stats(model: CtrModel, stats: dict[str, FrequencyStats]) -> None:
    """Bind a frozen frequency snapshot and precompute per-id selection inputs."""
    for f in model.config.fields:
        if f.name not in stats:
            raise VocabularyError(f"stats missing field {f.name!r}")
        if stats[f.name].vocab_size != f.vocab_size:
            raise ShapeError(
                f"stats vocab {stats[f.name].vocab_size} != config vocab {f.vocab_size} "
                f"for field {f.name!r}"
            )
    model.stats = stats
    model.feature_cache = {}
    for f in model.config.fields:
        if f.policy in ADAPTIVE_POLICIES:
            st = stats[f.name]
            alphas = np.ones(f.vocab_size) if f.policy == "aml" else st.alphas()
            model.feature_cache[f.name] = (st.feature_matrix(), alphas)


def mde_assign_dims(
    stats: FrequencyStats, n_blocks: int, base_dim: int, dim: int
) -> np.ndarray:
    """Static dims per frequency block: the most frequent block keeps the full
    dimension, every next block halves it (floor), never below 1."""
    if n_blocks < 1:
        raise ShapeError("need at least one block")
    if base_dim < 1 or base_dim * 2 ** (n_blocks - 1) > dim:
        raise ShapeError(
            f"base_dim {base_dim} with {n_blocks} blocks does not fit dim {dim}"
        )
    n = stats.vocab_size
    if n < n_blocks:
        raise ShapeError(f"vocabulary of {n} cannot form {n_blocks} blocks")
    block_dims = np.array([max(dim >> b, 1) for b in range(n_blocks)], dtype=np.int64)
    # rank r lands in block r*n_blocks // n: block 0 = most frequent ranks
    block_of_rank = (stats.ranks * n_blocks) // n
    return block_dims[block_of_rank]


# ---------------------------------------------------------------------------
# forward / backward


def loss(p: float, label) -> float:
    """Binary cross-entropy of one probability, clamped away from the log poles."""
    p = min(max(float(p), LOSS_CLAMP), 1.0 - LOSS_CLAMP)
    y = float(label)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def _batch_losses(p: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = np.clip(p, LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    return -(labels * np.log(p) + (1.0 - labels) * np.log1p(-p))


def _field_ids(model: CtrModel, ids: dict[str, np.ndarray], name: str, vocab: int) -> np.ndarray:
    col = np.asarray(ids[name], dtype=np.int64)
    if col.size and (col.min() < 0 or col.max() >= vocab):
        bad = col[(col < 0) | (col >= vocab)][0]
        raise VocabularyError(f"field {name!r}: id {int(bad)} outside vocabulary of {vocab}")
    return col


def _forward_batch(
    model: CtrModel, ids: dict[str, np.ndarray], training: bool, surrogate: bool = False
) -> tuple[np.ndarray, dict]:
    """Probabilities for a batch plus the caches the backward pass needs.

    training=False runs the inference path: hard selection only, no soft
    vector. surrogate=True replaces the hard selection by the soft one in
    the forward value (the relaxation used for gradient checking and the
    no-straight-through variant).
    """
    parts = []
    field_caches = {}
    for f in model.config.fields:
        col = _field_ids(model, ids, f.name, f.vocab_size)
        E = model.tables[f.name].weights[col]
        cache = {"ids": col, "E": E}
        if f.policy == "fbe":
            masked = E
            cache["mask"] = None
        elif f.policy == "mde":
            dims = model.mde_dims[f.name][col]
            m = (np.arange(f.dim)[None, :] < dims[:, None]).astype(np.float64)
            masked = E * m
            cache["mask"] = m
        else:
            if model.stats is None:
                raise ShapeError(f"adaptive field {f.name!r} needs attached frequency stats")
            feat, alphas = model.feature_cache[f.name]
            S, a = feat[col], alphas[col]
            params = model.amtls[f.name]
            logits, branch_caches = amtl_logits(params, S, a)
            probs = softmax(logits)
            ks = np.argmax(probs, axis=-1)
            hard = one_hot_rows(ks, f.dim)
            use_soft = surrogate or f.policy == "amtl-nste"
            if training or surrogate:
                soft = temperated_softmax(logits, params.temperature)
                t = soft if use_soft else ste_combine(soft, hard)
            else:
                soft = None
                t = hard
            m = mask_from_selection(t, params.mask)
            masked = E * m
            cache.update(
                {"mask": m, "soft": soft, "ks": ks, "alpha": a, "branch": branch_caches}
            )
        parts.append(masked)
        field_caches[f.name] = cache
    X = np.concatenate(parts, axis=1)
    head_inputs = []
    h = X
    acts = _head_activations(len(model.head))
    for (W, b), act in zip(model.head, acts):
        head_inputs.append(h)
        h = affine_forward(h, W, b, act)
    logit = h[:, 0]
    p = sigmoid(logit)
    caches = {"fields": field_caches, "head_inputs": head_inputs, "p": p}
    return p, caches


def forward(model: CtrModel, example: TrainingExample) -> tuple[float, dict]:
    """Single-example inference probability (hard selection path)."""
    ids = {f: np.array([v]) for f, v in example.values.items()}
    p, caches = _forward_batch(model, ids, training=False)
    return float(p[0]), caches


def predict(model: CtrModel, dataset: Dataset, batch_size: int = 4096) -> np.ndarray:
    """Inference scores for a whole dataset."""
    out = np.empty(len(dataset))
    for lo in range(0, len(dataset), batch_size):
        hi = min(lo + batch_size, len(dataset))
        batch = {f: col[lo:hi] for f, col in dataset.ids.items()}
        out[lo:hi], _ = _forward_batch(model, batch, training=False)
    return out


def evaluate_loss(
    model: CtrModel,
    ids: dict[str, np.ndarray],
    labels: np.ndarray,
    surrogate: bool = False,
) -> float:
    """Mean training-path loss of a batch without touching any parameter."""
    labels = np.asarray(labels, dtype=np.float64)
    p, _ = _forward_batch(model, ids, training=True, surrogate=surrogate)
    return float(_batch_losses(p, labels).mean())


def compute_gradients(
    model: CtrModel,
    ids: dict[str, np.ndarray],
    labels: np.ndarray,
    surrogate: bool = False,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and its gradient for every named parameter.

    surrogate=True differentiates the fully soft forward (used by the
    gradient-check tests); otherwise the straight-through path applies for
    amtl/aml fields and the soft path for amtl-nste fields.
    """
    labels = np.asarray(labels, dtype=np.float64)
    p, caches = _forward_batch(model, ids, training=True, surrogate=surrogate)
    n = labels.size
    mean_loss = float(_batch_losses(p, labels).mean())
    if not np.isfinite(mean_loss):
        raise NumericsError(f"non-finite loss {mean_loss}")
    grads: dict[str, np.ndarray] = {}
    dlogit = (p - labels)[:, None] / n
    acts = _head_activations(len(model.head))
    g = dlogit
    for li in range(len(model.head) - 1, -1, -1):
        W, b = model.head[li]
        g, gW, gb = affine_backward(caches["head_inputs"][li], W, b, acts[li], g)
        grads[f"head.{li}.W"] = gW
        grads[f"head.{li}.b"] = gb
    dX = g
    offset = 0
    for f in model.config.fields:
        cache = caches["fields"][f.name]
        dmasked = dX[:, offset : offset + f.dim]
        offset += f.dim
        if f.policy == "fbe":
            dE = dmasked
        elif f.policy == "mde":
            dE = cache["mask"] * dmasked
        else:
            params = model.amtls[f.name]
            m, E = cache["mask"], cache["E"]
            dE = m * dmasked
            dm = E * dmasked
            dt = dm @ params.mask.T
            # straight-through or plain soft path: either way the gradient
            # reaches the logits through the temperature softmax
            dlogits = temperated_softmax_backward(cache["soft"], dt, params.temperature)
            a = cache["alpha"][:, None]
            for branch_name, upstream in (("h", a * dlogits), ("l", (1.0 - a) * dlogits)):
                branch = params.h_aml if branch_name == "h" else params.l_aml
                for li, (gW, gb) in enumerate(
                    aml_backward(branch, cache["branch"][f"{branch_name}_cache"], upstream)
                ):
                    grads[f"field.{f.name}.amtl.{branch_name}.{li}.W"] = gW
                    grads[f"field.{f.name}.amtl.{branch_name}.{li}.b"] = gb
        acc = np.zeros_like(model.tables[f.name].weights)
        np.add.at(acc, cache["ids"], dE)
        grads[f"field.{f.name}.embedding"] = acc
    return mean_loss, grads


def named_parameters(model: CtrModel, trainable_only: bool = True) -> list[tuple[str, np.ndarray]]:
    """Stable (name, array) listing; checkpoint sections and SGD both walk it."""
    out: list[tuple[str, np.ndarray]] = []
    for f in model.config.fields:
        out.append((f"field.{f.name}.embedding", model.tables[f.name].weights))
        if f.policy in ADAPTIVE_POLICIES:
            params = model.amtls[f.name]
            for branch_name, branch in (("h", params.h_aml), ("l", params.l_aml)):
                for li, (W, b) in enumerate(branch.layers):
                    out.append((f"field.{f.name}.amtl.{branch_name}.{li}.W", W))
                    out.append((f"field.{f.name}.amtl.{branch_name}.{li}.b", b))
        elif f.policy == "mde" and not trainable_only:
            out.append((f"field.{f.name}.mde_dims", model.mde_dims[f.name]))
    for li, (W, b) in enumerate(model.head):
        out.append((f"head.{li}.W", W))
        out.append((f"head.{li}.b", b))
    return out


def _apply_sgd(model: CtrModel, grads: dict[str, np.ndarray]) -> None:
    lr = model.config.lr
    if lr == 0.0:
        return
    amtl_lr = lr * model.config.amtl_lr_scale
    for f in model.config.fields:
        emb_grad = grads[f"field.{f.name}.embedding"]
        model.tables[f.name].weights -= lr * emb_grad
        if f.policy in ADAPTIVE_POLICIES:
            params = model.amtls[f.name]
            for branch_name, branch in (("h", params.h_aml), ("l", params.l_aml)):
                for li, (W, b) in enumerate(branch.layers):
                    W -= amtl_lr * grads[f"field.{f.name}.amtl.{branch_name}.{li}.W"]
                    b -= amtl_lr * grads[f"field.{f.name}.amtl.{branch_name}.{li}.b"]
    for li, (W, b) in enumerate(model.head):
        W -= lr * grads[f"head.{li}.W"]
        b -= lr * grads[f"head.{li}.b"]


def train_epoch(
    model: CtrModel, dataset: Dataset, stats: dict[str, FrequencyStats]
) -> EpochStats:
    """One seeded shuffled pass of mini-batch SGD; returns mean loss and wall time."""
    if len(dataset) == 0:
        raise DatasetError("cannot train on an empty dataset")
    if model.stats is not stats:
        attach_stats(model, stats)
    started = time.perf_counter()
    order = model.rng.permutation(len(dataset))
    bs = model.config.batch_size
    total = 0.0
    for lo in range(0, len(order), bs):
        rows = order[lo : lo + bs]
        batch = {f: col[rows] for f, col in dataset.ids.items()}
        labels = dataset.labels[rows]
        try:
            mean_loss, grads = compute_gradients(model, batch, labels)
        except NumericsError as exc:
            raise NumericsError(
                f"epoch aborted at batch {lo // bs}: {exc} "
                f"(lr={model.config.lr}, batch_size={bs})"
            ) from exc
        _apply_sgd(model, grads)
        total += mean_loss * len(rows)
    stats_out = EpochStats(mean_loss=total / len(order), seconds=time.perf_counter() - started)
    model.epoch_log.append(stats_out)
    return stats_out


def train(model: CtrModel, dataset: Dataset, stats: dict[str, FrequencyStats]) -> list[EpochStats]:
    return [train_epoch(model, dataset, stats) for _ in range(model.config.epochs)]


def field_dims(model: CtrModel, field_name: str) -> np.ndarray:
    """Kept dimension (k+1) for every vocabulary id of one field, inference path."""
    f = next((f for f in model.config.fields if f.name == field_name), None)
    if f is None:
        raise VocabularyError(f"unknown field {field_name!r}")
    if f.policy == "fbe":
        return np.full(f.vocab_size, f.dim, dtype=np.int64)
    if f.policy == "mde":
        return model.mde_dims[field_name].copy()
    if model.stats is None:
        raise ShapeError(f"adaptive field {field_name!r} needs attached frequency stats")
    feat, alphas = model.feature_cache[field_name]
    logits, _ = amtl_logits(model.amtls[field_name], feat, alphas)
    ks = np.argmax(softmax(logits), axis=-1)
    return ks + 1


# ---------------------------------------------------------------------------
# checkpoint format: magic, version u32, crc32 u32 of payload, payload of
# named sections (f64 tensors or utf-8 text)


def _encode_config(config: ModelConfig) -> str:
    fields = ",".join(f"{f.name}:{f.vocab_size}:{f.dim}:{f.policy}" for f in config.fields)
    lines = [
        f"fields={fields}",
        f"head_hidden={','.join(str(w) for w in config.head_hidden)}",
        f"lr={config.lr!r}",
        f"epochs={config.epochs}",
        f"batch_size={config.batch_size}",
        f"temperature={config.temperature!r}",
        f"seed={config.seed}",
        f"mde_blocks={config.mde_blocks}",
        f"mde_base_dim={config.mde_base_dim}",
        f"aml_hidden={config.aml_hidden}",
        f"amtl_lr_scale={config.amtl_lr_scale!r}",
    ]
    return "\n".join(lines)


def _decode_config(text: str) -> ModelConfig:
    kv = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            kv[key] = value
    try:
        fields = []
        for token in kv["fields"].split(","):
            name, vocab, dim, policy = token.split(":")
            fields.append(FieldConfig(name, int(vocab), int(dim), policy))
        head_hidden = tuple(int(w) for w in kv["head_hidden"].split(",") if w)
        return ModelConfig(
            fields=tuple(fields),
            head_hidden=head_hidden,
            lr=float(kv["lr"]),
            epochs=int(kv["epochs"]),
            batch_size=int(kv["batch_size"]),
            temperature=float(kv["temperature"]),
            seed=int(kv["seed"]),
            mde_blocks=int(kv["mde_blocks"]),
            mde_base_dim=int(kv["mde_base_dim"]),
            aml_hidden=int(kv["aml_hidden"]),
            amtl_lr_scale=float(kv["amtl_lr_scale"]),
        ).validate()
    except (KeyError, ValueError, ShapeError) as exc:
        raise CheckpointError(f"bad config section: {exc}") from exc


def _pack_sections(sections: list[tuple[str, object]]) -> bytes:
    chunks = [struct.pack("<I", len(sections))]
    for name, value in sections:
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        if isinstance(value, str):
            raw = value.encode("utf-8")
            chunks.append(struct.pack("<BQ", 1, len(raw)))
            chunks.append(raw)
        else:
            arr = np.ascontiguousarray(value, dtype=np.float64)
            chunks.append(struct.pack("<BI", 0, arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            chunks.append(arr.tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf, self.pos, self.what = buf, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated {self.what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _unpack_sections(payload: bytes, what: str) -> dict[str, object]:
    r = _Reader(payload, what)
    (count,) = r.unpack("<I")
    sections: dict[str, object] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        (kind,) = r.unpack("<B")
        if kind == 1:
            (nbytes,) = r.unpack("<Q")
            sections[name] = r.take(nbytes).decode("utf-8")
        elif kind == 0:
            (rank,) = r.unpack("<I")
            shape = r.unpack(f"<{rank}Q") if rank else ()
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = r.take(8 * size)
            sections[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        else:
            raise CheckpointError(f"unknown section kind {kind} in {what}")
    if r.pos != len(payload):
        raise CheckpointError(f"trailing bytes in {what}")
    return sections


def save_checkpoint(model: CtrModel, path) -> None:
    sections: list[tuple[str, object]] = [("config", _encode_config(model.config))]
    sections += named_parameters(model, trainable_only=False)
    payload = _pack_sections(sections)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", zlib.crc32(payload)))
        fh.write(payload)


def _read_checkpoint_sections(path) -> dict[str, object]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (crc,) = struct.unpack("<I", blob[8:12])
    payload = blob[12:]
    if zlib.crc32(payload) != crc:
        raise CheckpointError(f"{path}: payload CRC mismatch")
    return _unpack_sections(payload, f"checkpoint {path}")


def load_checkpoint(path) -> CtrModel:
    """Rebuild a model from a checkpoint; frequency stats are not stored and
    must be re-attached before adaptive fields can run."""
    sections = _read_checkpoint_sections(path)
    config_text = sections.get("config")
    if not isinstance(config_text, str):
        raise CheckpointError(f"{path}: missing text config section")
    config = _decode_config(config_text)
    model = _skeleton(config)
    expected = named_parameters(model, trainable_only=False)
    for name, target in expected:
        if name not in sections:
            raise CheckpointError(f"{path}: missing section {name!r}")
        value = sections[name]
        if not isinstance(value, np.ndarray) or value.shape != target.shape:
            got = value.shape if isinstance(value, np.ndarray) else type(value)
            raise CheckpointError(
                f"{path}: section {name!r} has shape {got}, expected {target.shape}"
            )
        if name.endswith(".mde_dims"):
            model.mde_dims[name.split(".")[1]] = value.astype(np.int64)
        else:
            target[...] = value
    known = {name for name, _ in expected} | {"config"}
    extra = set(sections) - known
    if extra:
        raise CheckpointError(f"{path}: unexpected sections {sorted(extra)}")
    return model


def warm_start(model: CtrModel, checkpoint_path, parts) -> CtrModel:
    """Overwrite the requested parameter groups from a checkpoint.

    parts is a subset of {embeddings, head, amtl}; anything not requested
    keeps its fresh initialization. A requested part that is absent from
    either the checkpoint or the target model is an error, never a silent
    truncation.
    """
    parts = set(parts)
    unknown = parts - set(WARM_PARTS)
    if unknown:
        raise CheckpointError(f"unknown warm-start parts {sorted(unknown)}")
    if not parts:
        return model
    sections = _read_checkpoint_sections(checkpoint_path)

    def targets_for(part: str) -> list[tuple[str, np.ndarray]]:
        named = named_parameters(model, trainable_only=True)
        if part == "embeddings":
            return [(n, a) for n, a in named if n.endswith(".embedding")]
        if part == "head":
            return [(n, a) for n, a in named if n.startswith("head.")]
        return [(n, a) for n, a in named if ".amtl." in n]

    for part in sorted(parts):
        targets = targets_for(part)
        if not targets:
            raise CheckpointError(f"model has no parameters for warm-start part {part!r}")
        for name, target in targets:
            if name not in sections:
                raise CheckpointError(f"checkpoint lacks section {name!r} for part {part!r}")
            value = sections[name]
            if not isinstance(value, np.ndarray) or value.shape != target.shape:
                got = value.shape if isinstance(value, np.ndarray) else type(value)
                raise CheckpointError(
                    f"warm-start shape mismatch for {name!r}: checkpoint {got} vs model {target.shape}"
                )
            target[...] = value
    return model

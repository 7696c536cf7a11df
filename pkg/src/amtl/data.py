"""Dataset file format, reproducible train/test split, and the synthetic generator.

File format (UTF-8): one header line, then one event per line:

    # amtl-dataset	v=1	fields=user:1000,item:800	split_salt=s7	split_ratio=0.9
    1	user=14	item=3
    0	user=2	item=77

The header declares every field with its vocabulary size and carries the
split convention: line i (0-based over data lines) belongs to the training
split iff crc32("<salt>:<i>") % 10^6 < ratio * 10^6. The split is therefore
reproducible from the file alone, with no companion file.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError
from .ops import sigmoid

HEADER_TAG = "# amtl-dataset"
FORMAT_VERSION = 1

# planted-signal shape: see gen_data
SIGNAL_DIMS = 16
SIGNAL_CURVE = 2.5
BIAS_SCALE = 0.3
PAIR_SCALE = 2.5


@dataclass(frozen=True)
class DatasetMeta:
    fields: tuple[str, ...]
    vocab_sizes: dict[str, int]
    split_salt: str
    split_ratio: float


@dataclass
class TrainingExample:
    label: int
    values: dict[str, int]  # field -> feature-value id


@dataclass
class Dataset:
    meta: DatasetMeta
    labels: np.ndarray  # (N,) float64 in {0, 1}
    ids: dict[str, np.ndarray]  # field -> (N,) int64
    line_index: np.ndarray  # (N,) original data-line numbers, drives the split

    def __len__(self) -> int:
        return int(self.labels.size)

    def example(self, i: int) -> TrainingExample:
        return TrainingExample(
            label=int(self.labels[i]),
            values={f: int(col[i]) for f, col in self.ids.items()},
        )

    def subset(self, keep: np.ndarray) -> "Dataset":
        return Dataset(
            meta=self.meta,
            labels=self.labels[keep],
            ids={f: col[keep] for f, col in self.ids.items()},
            line_index=self.line_index[keep],
        )


def _split_hash(salt: str, index: int) -> int:
    return zlib.crc32(f"{salt}:{index}".encode()) % 1_000_000


def split_dataset(ds: Dataset) -> tuple[Dataset, Dataset]:
    """Deterministic (train, test) split from the header's salt and ratio."""
    threshold = int(round(ds.meta.split_ratio * 1_000_000))
    hashes = np.array([_split_hash(ds.meta.split_salt, int(i)) for i in ds.line_index])
    train = hashes < threshold
    return ds.subset(train), ds.subset(~train)


def format_header(meta: DatasetMeta) -> str:
    fields = ",".join(f"{f}:{meta.vocab_sizes[f]}" for f in meta.fields)
    return (
        f"{HEADER_TAG}\tv={FORMAT_VERSION}\tfields={fields}"
        f"\tsplit_salt={meta.split_salt}\tsplit_ratio={meta.split_ratio:g}"
    )


def parse_header(line: str) -> DatasetMeta:
    if not line.startswith(HEADER_TAG):
        raise DatasetError("missing dataset header line")
    kv = {}
    for token in line[len(HEADER_TAG) :].split("\t"):
        token = token.strip()
        if not token:
            continue
        if "=" not in token:
            raise DatasetError(f"malformed header token {token!r}")
        key, _, value = token.partition("=")
        kv[key] = value
    try:
        if int(kv["v"]) != FORMAT_VERSION:
            raise DatasetError(f"unsupported dataset version {kv['v']}")
        pairs = [p.split(":") for p in kv["fields"].split(",") if p]
        fields = tuple(name for name, _ in pairs)
        vocab = {name: int(size) for name, size in pairs}
        ratio = float(kv.get("split_ratio", "0.9"))
        salt = kv.get("split_salt", "amtl")
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"malformed dataset header: {exc}") from exc
    if not fields or any(v < 1 for v in vocab.values()):
        raise DatasetError("header must declare at least one field with positive vocabulary")
    if not 0.0 < ratio < 1.0:
        raise DatasetError(f"split ratio must lie in (0, 1), got {ratio}")
    return DatasetMeta(fields=fields, vocab_sizes=vocab, split_salt=salt, split_ratio=ratio)


def read_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise DatasetError(f"{path}: empty file")
        meta = parse_header(first.rstrip("\n"))
        labels, columns = [], {f: [] for f in meta.fields}
        ln = 0
        for raw in fh:
            raw = raw.rstrip("\n")
            if not raw or raw.startswith("#"):
                continue
            parts = raw.split("\t")
            try:
                label = int(parts[0])
            except ValueError as exc:
                raise DatasetError(f"{path}: bad label on data line {ln}: {parts[0]!r}") from exc
            if label not in (0, 1):
                raise DatasetError(f"{path}: label must be 0 or 1, got {label}")
            seen = {}
            for token in parts[1:]:
                name, _, value = token.partition("=")
                if not _:
                    raise DatasetError(f"{path}: malformed token {token!r} on data line {ln}")
                try:
                    seen[name] = int(value)
                except ValueError as exc:
                    raise DatasetError(f"{path}: non-integer value in {token!r}") from exc
                if seen[name] < 0:
                    raise DatasetError(f"{path}: negative id in {token!r}")
            missing = set(meta.fields) - set(seen)
            if missing:
                raise DatasetError(f"{path}: data line {ln} missing fields {sorted(missing)}")
            labels.append(label)
            for f in meta.fields:
                columns[f].append(seen[f])
            ln += 1
    return Dataset(
        meta=meta,
        labels=np.array(labels, dtype=np.float64),
        ids={f: np.array(col, dtype=np.int64) for f, col in columns.items()},
        line_index=np.arange(ln, dtype=np.int64),
    )


def write_dataset(path, meta: DatasetMeta, labels, ids) -> None:
    labels = np.asarray(labels)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_header(meta) + "\n")
        for i in range(len(labels)):
            tokens = [str(int(labels[i]))]
            tokens += [f"{f}={int(ids[f][i])}" for f in meta.fields]
            fh.write("\t".join(tokens) + "\n")


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = (np.arange(1, n + 1, dtype=np.float64)) ** (-exponent)
    return w / w.sum()


def gen_data(
    vocab_sizes: dict[str, int],
    n_examples: int,
    zipf_exponent: float,
    seed: int,
    path,
    signal_dims: int = SIGNAL_DIMS,
    split_ratio: float = 0.9,
) -> DatasetMeta:
    """Synthetic CTR log with a planted frequency-dependent signal.

    Feature values are drawn per field from a Zipf law over frequency ranks.
    Each value carries sign attributes on a latent prefix whose length grows
    with its frequency percentile (plus a scalar bias every value has). The
    label is a coin flip on the sigmoid of the bias terms plus the
    sign-agreement score across fields. High-frequency values therefore need
    many embedding dimensions to be represented faithfully while
    low-frequency values need few, which is the ground truth the
    dimension-selection layer should recover.
    """
    if n_examples < 0 or zipf_exponent <= 0 or signal_dims < 1:
        raise DatasetError("generator parameters must be positive")
    if not vocab_sizes or any(v < 1 for v in vocab_sizes.values()):
        raise DatasetError("every field needs a positive vocabulary size")
    fields = tuple(vocab_sizes)
    meta = DatasetMeta(
        fields=fields,
        vocab_sizes=dict(vocab_sizes),
        split_salt=f"amtl{seed}",
        split_ratio=split_ratio,
    )
    rng = np.random.default_rng(seed)
    ranks, latents, biases, rank_to_id = {}, {}, {}, {}
    for f in fields:
        size = vocab_sizes[f]
        rank_to_id[f] = rng.permutation(size)
        ranks[f] = rng.choice(size, size=n_examples, p=zipf_weights(size, zipf_exponent))
        # percentile 1 = most frequent rank; prefix length of the planted latent
        pct = 1.0 - (np.arange(size) / max(size - 1, 1))
        dstar = 1 + np.floor((signal_dims - 1) * pct**SIGNAL_CURVE).astype(np.int64)
        u = rng.choice([-1.0, 1.0], size=(size, signal_dims))
        u[np.arange(signal_dims)[None, :] >= dstar[:, None]] = 0.0
        # interaction amplitude also grows with frequency: rare values carry
        # little signal and converge early, the head keeps learning all run
        amplitude = 0.2 + 0.8 * pct**2
        latents[f] = u * np.sqrt(amplitude)[:, None]
        biases[f] = rng.normal(size=size)
    logit = np.zeros(n_examples)
    for f in fields:
        logit += BIAS_SCALE * biases[f][ranks[f]]
    for i, fa in enumerate(fields):
        for fb in fields[i + 1 :]:
            agreement = latents[fa][ranks[fa]] * latents[fb][ranks[fb]]
            logit += PAIR_SCALE * agreement.sum(axis=1) / np.sqrt(signal_dims)
    labels = (rng.random(n_examples) < sigmoid(logit)).astype(np.int64)
    ids = {f: rank_to_id[f][ranks[f]] for f in fields}
    write_dataset(path, meta, labels, ids)
    return meta

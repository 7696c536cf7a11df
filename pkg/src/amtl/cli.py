"""Command-line entry points.

Subcommands: gen-data, train, evaluate, compress, analyze, warmstart.
Options can come from a plain key=value config file (--config); explicit
flags win over the file. Exit codes: 2 usage/config, 3 data/file, 4
numeric failure.

Per run the train command writes into --out:
  checkpoint.amtl   model parameters (deterministic bytes)
  train_log.tsv     epoch, mean training loss (deterministic)
  timing_log.tsv    epoch, wall seconds (excluded from reproducibility)
  grid_log.tsv      temperature grid results, only with --temperature-grid
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .data import Dataset, gen_data, read_dataset, split_dataset
from .errors import (
    AmtlError,
    CheckpointError,
    DatasetError,
    NumericsError,
    ShapeError,
    VocabularyError,
)
from .freq import ingest_columns
from .masking import DEFAULT_TEMPERATURE
from .metrics import compare, dim_profile, write_compare_tsv, write_profile_csv
from .model import (
    ADAPTIVE_POLICIES,
    CtrModel,
    FieldConfig,
    ModelConfig,
    POLICIES,
    attach_stats,
    build_model,
    load_checkpoint,
    save_checkpoint,
    train,
    warm_start,
)
from .storage import avg_dim, compress, memory_ratio, serialize

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

WARM_PART_NAMES = {"emb": "embeddings", "embeddings": "embeddings", "head": "head", "amtl": "amtl"}


class UsageError(AmtlError):
    pass


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def resolve(args, key: str, cast, default):
    """Flag value if given, else config-file value, else the default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    file_cfg = getattr(args, "_file_cfg", {})
    if key in file_cfg:
        try:
            return cast(file_cfg[key])
        except ValueError as exc:
            raise UsageError(f"config key {key!r}: {exc}") from exc
    return default


def parse_vocab_spec(spec: str) -> dict[str, int]:
    out = {}
    for token in spec.split(","):
        name, _, size = token.partition("=")
        if not _ or not name:
            raise UsageError(f"bad vocab entry {token!r}, expected name=size")
        try:
            out[name] = int(size)
        except ValueError as exc:
            raise UsageError(f"bad vocab size in {token!r}") from exc
    return out


def parse_int_list(spec: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in spec.split(",") if t)
    except ValueError as exc:
        raise UsageError(f"bad integer list {spec!r}") from exc


def parse_warm_parts(spec: str) -> set[str]:
    parts = set()
    for token in spec.split(","):
        token = token.strip()
        if token not in WARM_PART_NAMES:
            raise UsageError(f"unknown warm part {token!r}, expected emb,head,amtl")
        parts.add(WARM_PART_NAMES[token])
    return parts


def load_split_stats(data_path: str):
    ds = read_dataset(data_path)
    train_ds, test_ds = split_dataset(ds)
    stats = ingest_columns(train_ds.ids, ds.meta.vocab_sizes)
    return ds, train_ds, test_ds, stats


def required_seed(args) -> int:
    seed = resolve(args, "seed", int, None)
    if seed is None:
        raise UsageError("--seed is required (flag or config file); no wall-clock seeding")
    return seed


def model_config_from_args(args, meta) -> ModelConfig:
    policy = resolve(args, "policy", str, "amtl")
    if policy not in POLICIES:
        raise UsageError(f"unknown policy {policy!r}")
    dim = resolve(args, "dim", int, 16)
    fields = tuple(
        FieldConfig(name, meta.vocab_sizes[name], dim, policy) for name in meta.fields
    )
    return ModelConfig(
        fields=fields,
        head_hidden=parse_int_list(resolve(args, "head", str, "64,32")),
        lr=resolve(args, "lr", float, 0.1),
        epochs=resolve(args, "epochs", int, 3),
        batch_size=resolve(args, "batch_size", int, 256),
        temperature=resolve(args, "temperature", float, DEFAULT_TEMPERATURE),
        seed=required_seed(args),
        mde_blocks=resolve(args, "mde_blocks", int, 3),
        mde_base_dim=resolve(args, "mde_base_dim", int, 1),
        aml_hidden=resolve(args, "aml_hidden", int, 16),
        amtl_lr_scale=resolve(args, "amtl_lr_scale", float, 1.0),
    )


def write_epoch_logs(out_dir: Path, log) -> None:
    with open(out_dir / "train_log.tsv", "w", encoding="utf-8") as fh:
        fh.write("epoch\tmean_loss\n")
        for i, e in enumerate(log):
            fh.write(f"{i}\t{e.mean_loss:.8f}\n")
    with open(out_dir / "timing_log.tsv", "w", encoding="utf-8") as fh:
        fh.write("epoch\tseconds\n")
        for i, e in enumerate(log):
            fh.write(f"{i}\t{e.seconds:.4f}\n")


def read_timing_log(ckpt_path: Path) -> float | None:
    log = ckpt_path.parent / "timing_log.tsv"
    if not log.exists():
        return None
    seconds = []
    for line in log.read_text(encoding="utf-8").splitlines()[1:]:
        parts = line.split("\t")
        if len(parts) == 2:
            seconds.append(float(parts[1]))
    return float(np.mean(seconds)) if seconds else None


def _train_one(config: ModelConfig, train_ds, stats, warm_from, warm_parts) -> CtrModel:
    model = build_model(config, stats)
    if warm_from:
        warm_start(model, warm_from, warm_parts)
    train(model, train_ds, stats)
    return model


def cmd_gen_data(args) -> int:
    vocab = parse_vocab_spec(resolve(args, "vocab", str, "user=1000,item=800"))
    meta = gen_data(
        vocab_sizes=vocab,
        n_examples=resolve(args, "n", int, 100_000),
        zipf_exponent=resolve(args, "zipf", float, 1.1),
        seed=required_seed(args),
        path=args.out,
        signal_dims=resolve(args, "signal_dims", int, 16),
        split_ratio=resolve(args, "split_ratio", float, 0.9),
    )
    print(f"wrote {args.out} fields={','.join(meta.fields)}")
    return 0


def cmd_train(args) -> int:
    ds, train_ds, test_ds, stats = load_split_stats(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_config = model_config_from_args(args, ds.meta)
    warm_from = resolve(args, "warm_from", str, None)
    warm_parts = parse_warm_parts(resolve(args, "warm_parts", str, "emb,head")) if warm_from else set()

    grid_spec = resolve(args, "temperature_grid", str, None)
    if grid_spec:
        from dataclasses import replace

        from .metrics import auc
        from .model import predict

        results = []
        for t in (float(x) for x in grid_spec.split(",") if x):
            cfg = replace(base_config, temperature=t)
            model = _train_one(cfg, train_ds, stats, warm_from, warm_parts)
            score = auc(test_ds.labels, predict(model, test_ds))
            results.append((t, score, model))
            print(f"grid temperature={t:g} auc={score:.6f}")
        best = max(results, key=lambda r: r[1])
        with open(out_dir / "grid_log.tsv", "w", encoding="utf-8") as fh:
            fh.write("temperature\tauc\n")
            for t, score, _ in results:
                fh.write(f"{t:g}\t{score:.6f}\n")
        model = best[2]
        print(f"selected temperature={best[0]:g}")
    else:
        model = _train_one(base_config, train_ds, stats, warm_from, warm_parts)

    save_checkpoint(model, out_dir / "checkpoint.amtl")
    write_epoch_logs(out_dir, model.epoch_log)
    for i, e in enumerate(model.epoch_log):
        print(f"epoch {i}: mean_loss={e.mean_loss:.6f} ({e.seconds:.2f}s)")
    print(f"wrote {out_dir / 'checkpoint.amtl'}")
    return 0


def cmd_evaluate(args) -> int:
    ds, train_ds, test_ds, stats = load_split_stats(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    models, timings = [], []
    for ckpt in args.checkpoint:
        model = load_checkpoint(ckpt)
        attach_stats(model, stats)
        models.append(model)
        timings.append(read_timing_log(Path(ckpt)))
    rows = compare(models, test_ds, sec_per_epoch=timings)
    write_compare_tsv(rows, out_dir / "compare.tsv")
    for r in rows:
        sec = "-" if r.sec_per_epoch is None else f"{r.sec_per_epoch:.3f}"
        print(
            f"{r.policy}\tauc={r.auc:.6f}\tavg_dim={r.avg_dim:.4f}"
            f"\tratio={r.memory_ratio:.2%}\tsec/epoch={sec}"
        )
    print(f"wrote {out_dir / 'compare.tsv'}")
    return 0


def _selected_fields(model: CtrModel, only: str | None, need_adaptive: bool) -> list[str]:
    names = []
    for f in model.config.fields:
        if only and f.name != only:
            continue
        if need_adaptive and f.policy not in ADAPTIVE_POLICIES:
            if only:
                raise UsageError(f"field {f.name!r} has no adaptive policy")
            continue
        names.append(f.name)
    if only and not names:
        raise UsageError(f"unknown field {only!r}")
    if not names:
        raise UsageError("no adaptive field to analyze")
    return names


def cmd_compress(args) -> int:
    ds, train_ds, test_ds, stats = load_split_stats(args.data)
    model = load_checkpoint(args.checkpoint[0])
    attach_stats(model, stats)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .model import field_dims

    for name in _selected_fields(model, args.field, need_adaptive=False):
        ks = field_dims(model, name) - 1
        store = compress(model.tables[name], ks)
        path = out_dir / f"{name}.amts"
        serialize(store, path)
        print(
            f"{name}\tavg_dim={avg_dim(store):.4f}\tratio={memory_ratio(store):.2%}"
            f"\t{path}"
        )
    return 0


def cmd_analyze(args) -> int:
    ds, train_ds, test_ds, stats = load_split_stats(args.data)
    model = load_checkpoint(args.checkpoint[0])
    attach_stats(model, stats)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = resolve(args, "groups", int, 7)
    for name in _selected_fields(model, args.field, need_adaptive=True):
        profiles = dim_profile(model, name, n_groups=groups)
        path = out_dir / f"{name}_profile.csv"
        write_profile_csv(profiles, path)
        dims = " ".join(f"{p.mean_dim:.2f}" for p in profiles)
        print(f"{name}\tmean_dim by group: {dims}\t{path}")
    return 0


def cmd_warmstart(args) -> int:
    if not resolve(args, "warm_from", str, None):
        raise UsageError("warmstart requires --warm-from")
    return cmd_train(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amtl",
        description="Adaptive embedding-dimension selection: data, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file; flags win")
        p.add_argument("--seed", type=int, help="RNG seed (no wall-clock seeding)")

    g = sub.add_parser("gen-data", help="write a synthetic Zipf dataset")
    add_common(g)
    g.add_argument("--out", required=True)
    g.add_argument("--vocab", help="name=size,name=size (default user=1000,item=800)")
    g.add_argument("--n", type=int, help="number of examples (default 100000)")
    g.add_argument("--zipf", type=float, help="Zipf exponent (default 1.1)")
    g.add_argument("--signal-dims", dest="signal_dims", type=int)
    g.add_argument("--split-ratio", dest="split_ratio", type=float)
    g.set_defaults(func=cmd_gen_data)

    def add_train_flags(p):
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--policy", choices=POLICIES)
        p.add_argument("--dim", type=int)
        p.add_argument("--temperature", type=float)
        p.add_argument("--temperature-grid", dest="temperature_grid")
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--head", help="hidden widths, e.g. 64,32")
        p.add_argument("--aml-hidden", dest="aml_hidden", type=int)
        p.add_argument("--mde-blocks", dest="mde_blocks", type=int)
        p.add_argument("--mde-base-dim", dest="mde_base_dim", type=int)
        p.add_argument("--amtl-lr-scale", dest="amtl_lr_scale", type=float)
        p.add_argument("--warm-from", dest="warm_from", help="checkpoint to warm start from")
        p.add_argument("--warm-parts", dest="warm_parts", help="emb,head[,amtl]")

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    add_common(t)
    add_train_flags(t)
    t.set_defaults(func=cmd_train)

    w = sub.add_parser("warmstart", help="train with parameters warm-started from a checkpoint")
    add_common(w)
    add_train_flags(w)
    w.set_defaults(func=cmd_warmstart)

    e = sub.add_parser("evaluate", help="compare checkpoints on the test split")
    add_common(e)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--checkpoint", action="append", required=True)
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compress", help="write zero-drop stores for a checkpoint")
    add_common(c)
    c.add_argument("--data", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--checkpoint", action="append", required=True)
    c.add_argument("--field")
    c.set_defaults(func=cmd_compress)

    a = sub.add_parser("analyze", help="dimension-vs-frequency profile per field")
    add_common(a)
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--checkpoint", action="append", required=True)
    a.add_argument("--field")
    a.add_argument("--groups", type=int)
    a.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._file_cfg = read_config_file(args.config) if args.config else {}
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShapeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, VocabularyError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points: ``train``, ``eval``, ``audit`` and ``sweep``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import torch

from .config import ConfigError, RunConfig, load_config, parse_config, serialize_config
from .evaluation import evaluate
from .kgdata import DatasetError, add_reciprocals, load_dataset
from .model import CheckpointError, TgcnModel, count_parameters, encoder_parameters, load_checkpoint, save_checkpoint
from .training import fit

log = logging.getLogger("tgcn")

REPORT_FIELDS = ("dataset", "split", "seed", "n_queries", "mrr", "hits1", "hits3", "hits10", "nfp", "efp")


def format_records(record: dict) -> str:
    return "".join(f"{k}: {v}\n" for k, v in record.items())


def parse_records(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            out[k.strip()] = v.strip()
    return out


def millions(n: int) -> str:
    return f"{n / 1e6:.2f}M"


def load_graph(config: RunConfig):
    paths = config.split_paths()
    if paths is None:
        raise ConfigError("data_dir (or train_path/valid_path/test_path) must be set")
    for p in paths:
        if not p.exists():
            raise ConfigError(f"dataset file {p} does not exist")
    kg = load_dataset(*paths, name=config.dataset or Path(paths[0]).parent.name)
    if not config.reciprocal:
        raise ConfigError("reciprocal: training and evaluation need reciprocal relations; "
                          "reciprocal = false is only meaningful for audit")
    return add_reciprocals(kg)


def run_training(config: RunConfig) -> dict:
    """Train, checkpoint (best and last) and write the metrics file; returns the metrics."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(serialize_config(config), encoding="utf-8")
    kg = load_graph(config)
    (out / "entities.txt").write_text("".join(e + "\n" for e in kg.entities), encoding="utf-8")
    (out / "relations.txt").write_text("".join(r + "\n" for r in kg.relations), encoding="utf-8")

    model = TgcnModel(config.model_config(kg.num_entities, kg.num_relations), seed=config.seed)
    meta = dict(run_config=serialize_config(config), entities=list(kg.entities), relations=list(kg.relations),
                num_raw_relations=kg.num_raw_relations, dataset=kg.name)

    with (out / "log.txt").open("w", encoding="utf-8") as log_fh:
        def on_eval(entry, _model):
            line = "iter {} lr {:.6g} loss {:.6f} valid_mrr {:.6f}".format(*entry)
            log_fh.write(line + "\n")
            log_fh.flush()
            log.info(line)

        result = fit(model, kg, config.train_config(), on_eval=on_eval)

    save_checkpoint(out / "last.pt", model, **meta)
    if result.best_state is not None:
        model.load_state_dict(result.best_state)
    save_checkpoint(out / "best.pt", model, **meta)

    report = evaluate(model, kg, "test", seed=config.seed, batch_size=config.eval_batch_size)
    valid = evaluate(model, kg, "valid", seed=config.seed, batch_size=config.eval_batch_size)
    metrics = report.to_record()
    metrics.update(
        valid_mrr=valid.mrr,
        best_iteration=result.best_iteration,
        iterations=result.iterations,
        final_loss=result.losses[-1] if result.losses else float("nan"),
        enfp=encoder_parameters(model),
    )
    (out / "metrics.txt").write_text(format_records(metrics), encoding="utf-8")
    return metrics


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.out:
        config.out = args.out
    if args.seed is not None:
        config.seed = args.seed
    metrics = run_training(config)
    sys.stdout.write(format_records(metrics))
    return 0


def cmd_eval(args) -> int:
    model, payload = load_checkpoint(args.checkpoint)
    config = parse_config(payload["run_config"])
    kg = load_graph(config)
    if list(kg.entities) != payload["entities"] or list(kg.relations) != payload["relations"]:
        raise DatasetError("dataset vocabulary differs from the one stored in the checkpoint")
    report = evaluate(model, kg, args.split, seed=args.seed, batch_size=config.eval_batch_size)
    text = format_records(report.to_record())
    if not report.valid:
        log.warning("split %s has no queries", args.split)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def audit(config: RunConfig) -> dict:
    """Parameter counts of the configured model; no training or data needed."""
    paths = config.split_paths()
    if paths and all(p.exists() for p in paths):
        kg = load_dataset(*paths)
        n_ent, n_rel = kg.num_entities, kg.num_relations
    else:
        n_ent, n_rel = config.graph_sizes()
    n_rel_table = 2 * n_rel if config.reciprocal else n_rel
    with torch.device("meta"):
        model = TgcnModel(config.model_config(n_ent, n_rel_table))
    nfp, efp = count_parameters(model)
    return dict(dataset=config.dataset, entities=n_ent, relations=n_rel_table,
                encoder=config.encoder, core=config.core if config.encoder == "tgcn" else config.rgcn_scheme,
                decoder=config.decoder, dim=config.dim, nfp=nfp, efp=efp, enfp=encoder_parameters(model))


def cmd_audit(args) -> int:
    config = load_config(args.config)
    info = audit(config)
    for key in ("dataset", "entities", "relations", "encoder", "core", "decoder", "dim"):
        sys.stdout.write(f"{key}: {info[key]}\n")
    for key in ("nfp", "efp", "enfp"):
        sys.stdout.write(f"{key}: {info[key]} ({millions(info[key])})\n")
    return 0


def _sweep_one(config: RunConfig) -> dict:
    return run_training(config)


def sweep_configs(base: RunConfig, key: str, values) -> list[tuple[str, RunConfig]]:
    if key not in ("n_b", "g_s"):
        raise ConfigError(f"sweep key must be n_b or g_s, got {key!r}")
    runs = []
    for raw in values:
        changes = {"out": str(Path(base.out) / f"{key}_{raw}")}
        if key == "g_s" and str(raw).lower() == "all":
            changes["g_s"] = 2 ** 62
        else:
            changes[key] = int(raw)
        if key == "n_b":
            changes["core"] = "cp"
        cfg = dataclasses.replace(base, **changes)
        cfg.validate()
        runs.append((str(raw), cfg))
    return runs


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    if args.out:
        base.out = args.out
    runs = sweep_configs(base, args.key, args.values)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, [cfg for _, cfg in runs]))
    else:
        results = [_sweep_one(cfg) for _, cfg in runs]
    header = f"{args.key}\tmrr" + ("\tenfp" if args.key == "n_b" else "")
    lines = [header]
    for (raw, _), metrics in zip(runs, results):
        row = f"{raw}\t{metrics['mrr']:.6f}"
        if args.key == "n_b":
            row += f"\t{metrics['enfp']}"
        lines.append(row)
    table = "\n".join(lines) + "\n"
    Path(base.out).mkdir(parents=True, exist_ok=True)
    (Path(base.out) / f"sweep_{args.key}.tsv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tgcn", description="Tucker graph convolution for link prediction.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoints and metrics")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank a split with a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", help="print #NFP/#EFP of the configured model")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="train+eval once per value of n_b or g_s")
    p.add_argument("--config", required=True)
    p.add_argument("--key", required=True, choices=("n_b", "g_s"))
    p.add_argument("values", nargs="+")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1, help="independent runs in parallel processes")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, CheckpointError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

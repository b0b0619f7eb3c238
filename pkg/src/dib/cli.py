"""Command-line interface: ``dib {train,eval,gradcheck,entropy}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure,
5 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from itertools import combinations
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import gradcheck
from .cluster_eval import evaluate
from .data_io import dataset_from_config, read_matrix_csv, write_matrix_csv
from .errors import ConfigError, DIBError, NumericalError, TrainingDivergedError
from .gram_kernel import gram_of
from .losses import TERMS
from .renyi import DEFAULT_ORDER, entropy_alpha, joint_entropy
from .trainer import ABLATIONS, DIBModel, TrainConfig, predict, train

logger = logging.getLogger("dib")

# CLI flag -> TrainConfig field
TRAIN_FLAGS = {"epochs": "epochs", "batch": "batch_size", "lr": "lr", "alpha": "alpha",
               "seed": "seed", "denominator": "denominator"}
WEIGHT_FLAGS = ("gamma", "beta", "tau")


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def parse_ablation(value: str) -> list[str]:
    """Either a scenario letter A-E or a comma-separated subset of loss terms."""
    if value.upper() in ABLATIONS:
        return list(ABLATIONS[value.upper()])
    terms = [t.strip() for t in value.split(",") if t.strip()]
    bad = [t for t in terms if t not in TERMS]
    if bad or not terms:
        raise ConfigError(f"--ablate expects A-E or terms from {TERMS}, got {value!r}")
    return terms


def build_train_config(run_cfg: dict, args, n_clusters_hint=None) -> TrainConfig:
    train_cfg = dict(run_cfg.get("train", {}))
    weights = dict(train_cfg.pop("weights", {}))
    for flag, key in TRAIN_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            train_cfg[key] = val
    for flag in WEIGHT_FLAGS:
        val = getattr(args, flag, None)
        if val is not None:
            weights[flag] = val
    if getattr(args, "ablate", None):
        weights["terms"] = parse_ablation(args.ablate)
    if "n_clusters" not in train_cfg:
        if n_clusters_hint is None:
            raise ConfigError("cluster count unknown: set train.n_clusters or dataset K")
        train_cfg["n_clusters"] = n_clusters_hint
    train_cfg["weights"] = weights
    try:
        return TrainConfig.from_dict(train_cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_run_dataset(run_cfg: dict, base: Path):
    ds_cfg = run_cfg.get("dataset")
    if ds_cfg is None:
        raise ConfigError("run config needs a 'dataset' section")
    if isinstance(ds_cfg, str):
        path = base / ds_cfg
        return dataset_from_config(_read_json(path), path.parent)
    return dataset_from_config(ds_cfg, base)


def cmd_train(args) -> int:
    cfg_path = Path(args.config)
    run_cfg = _read_json(cfg_path)
    data = _load_run_dataset(run_cfg, cfg_path.parent)
    hint = data.n_clusters
    if hint is None and data.labels is not None:
        hint = int(data.labels.max()) + 1
    config = build_train_config(run_cfg, args, hint)
    out = Path(args.out or run_cfg.get("out") or "runs/train")
    out.mkdir(parents=True, exist_ok=True)
    try:
        model, history = train(config, data)
    except TrainingDivergedError as exc:
        if exc.checkpoint is not None:
            exc.checkpoint.save(out / "checkpoint.npz", {"status": "diverged"})
        raise
    model.save(out / "checkpoint.npz")
    dump_json(history.records(), out / "history.json")
    final = {"dataset": data.name, "epochs": config.epochs, "n_samples": data.n_samples,
             "skipped_batches": history.skipped_batches}
    if history.reports:
        final["loss"] = history.reports[-1].as_dict()
    _, assign = predict(model, data)
    if data.labels is not None:
        final.update(evaluate(data.labels, assign).metrics())
    dump_json(final, out / "metrics.json")
    print(dump_json(final), end="")
    return 0


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    cfg_path = Path(args.dataset)
    cfg = _read_json(cfg_path)
    data = _load_run_dataset(cfg, cfg_path.parent) if "dataset" in cfg else \
        dataset_from_config(cfg, cfg_path.parent)
    model = DIBModel.load(ckpt)
    _, assign = predict(model, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "assignments.csv", assign)
    report = {"dataset": data.name, "n_samples": data.n_samples}
    if data.labels is not None:
        report.update(evaluate(data.labels, assign).metrics())
        dump_json(report, out / "metrics.json")
    print(dump_json(report), end="")
    return 0


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def cmd_gradcheck(args) -> int:
    if not args.tolerance > 0:
        raise ConfigError("tolerance must be positive")
    report = gradcheck.run(alphas=tuple(_floats(args.alphas)),
                           sizes=tuple(int(s) for s in _floats(args.sizes)),
                           trials=args.trials, seed=args.seed, tolerance=args.tolerance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report, out / "gradcheck.json")
    summary = {"passed": report["passed"], "tolerance": report["tolerance"],
               "max_rel_err_by_case": report["max_rel_err_by_case"], "worst": report["worst"]}
    print(dump_json(summary), end="")
    if not report["passed"]:
        w = report["worst"]
        print(f"gradcheck failed: worst case {w['case']} (alpha={w['alpha']}, n={w['n']}, "
              f"trial={w['trial']}) max_rel_err={w['max_rel_err']:.3e}", file=sys.stderr)
        return NumericalError.exit_code
    return 0


def cmd_entropy(args) -> int:
    names = list(args.files)
    grams = [gram_of(read_matrix_csv(f), args.sigma, args.sigma_multiplier)[0] for f in names]
    H = [entropy_alpha(A, args.alpha) for A in grams]
    result = {"alpha": args.alpha,
              "entropy": [{"file": name, "entropy": h} for name, h in zip(names, H)],
              "mutual_information": []}
    pairs = list(combinations(range(len(names)), 2))
    if len(names) == 1:
        pairs = [(0, 0)]
    for i, j in pairs:
        hj = joint_entropy(grams[i], grams[j], args.alpha)
        result["mutual_information"].append(
            {"a": names[i], "b": names[j], "joint_entropy": hj, "mi": H[i] + H[j] - hj})
    print(dump_json(result), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dib", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train on a run config")
    t.add_argument("--config", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--alpha", type=float, help="entropy order")
    t.add_argument("--gamma", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--tau", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--denominator", choices=("standard", "paper"))
    t.add_argument("--ablate", help="scenario A-E or comma-separated terms, e.g. clu,fea")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True, help="dataset config or run config JSON")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference audit of analytical gradients")
    g.add_argument("--alphas", default="0.5,1.01,2,5")
    g.add_argument("--sizes", default="5,10")
    g.add_argument("--trials", type=int, default=50)
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="runs/gradcheck")
    g.set_defaults(func=cmd_gradcheck)

    n = sub.add_parser("entropy", help="entropies and pairwise MI of CSV sample matrices")
    n.add_argument("files", nargs="+")
    n.add_argument("--alpha", type=float, default=DEFAULT_ORDER)
    n.add_argument("--sigma", type=float, help="fixed bandwidth (default: median heuristic)")
    n.add_argument("--sigma-multiplier", type=float, default=1.0)
    n.set_defaults(func=cmd_entropy)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = os.environ.get("DIB_THREADS")
        if threads and not threads.isdigit():
            raise ConfigError(f"DIB_THREADS must be a positive integer, got {threads!r}")
        limit = threadpool_limits(int(threads)) if threads else nullcontext()
        with limit:
            return args.func(args)
    except DIBError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "exit_code": exc.exit_code}), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

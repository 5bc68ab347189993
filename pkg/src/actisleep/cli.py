"""Command-line entry point: generate, train, evaluate, predict, cluster,
gradcheck and compare."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import fileio, plotting
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .cluster import (Leaf, cut_tree, downsample_mean, pairwise_distances, pairwise_dtw,
                      separation_score, upgma)
from .config import ConfigError, RunConfig, load_config
from .metrics import compare_curves, precision_recall, render_comparison, render_report
from .models.builders import build_model, default_spec, spec_to_dict
from .models.data import build_dataset
from .models.training import TrainConfig, evaluate, predict_series, train
from .newick import dendrogram_to_json, export_tree
from .series import EPOCHS_PER_DAY, DayVector, LabeledSeries, SeriesError, partition_days
from .synthgen import generate_cohort

log = logging.getLogger("actisleep")


class UsageError(Exception):
    pass


def _seed(args, cfg: RunConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    cohort = generate_cohort(cfg.profiles(), cfg.schedules(), cfg.cohort.days, seed)
    out = Path(args.out)
    for s in cohort:
        fileio.save_series(s, out / f"{s.patient_id}.csv")
    log.info("wrote %d series (%d epochs each) to %s", len(cohort), len(cohort[0]), out)
    return 0


def _window(cfg: RunConfig) -> dict:
    w = cfg.window
    return {"context": w.context, "stride": w.stride, "smooth_half_width": w.smooth_half_width,
            "train_fraction": w.train_fraction}


def _spec_for(kind: str, context: int):
    spec = default_spec(kind)
    length = 2 * context + 1
    if kind == "mlp":
        if context != 360:
            raise UsageError("the MLP feature catalog is defined for a 360-epoch context")
        return spec
    return dataclasses.replace(spec, input_length=length)


def _split(series: Sequence[LabeledSeries], window: dict, seed: int):
    ds = build_dataset(series, window["context"], window["stride"], window["smooth_half_width"])
    return ds.split(window["train_fraction"], seed)


def _write_report(report_path: Path, cm, title: str) -> None:
    rep = precision_recall(cm)
    fileio.atomic_write(report_path, render_report(rep, cm, title) + "\n")
    fileio.atomic_write(_sibling(report_path, ".metrics.csv"), fileio.metrics_csv(rep))
    fileio.atomic_write(_sibling(report_path, ".confusion.csv"), fileio.confusion_csv(cm))
    plotting.plot_confusion(cm, _sibling(report_path, ".confusion.png"), title or None)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    kind = args.model or cfg.model
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    window = _window(cfg)
    series = fileio.load_series_dir(args.data)
    if args.patient:
        series = [s for s in series if s.patient_id in args.patient]
        missing = sorted(set(args.patient) - {s.patient_id for s in series})
        if missing:
            raise UsageError(f"no series for patient(s) {', '.join(missing)}")
    tr, te = _split(series, window, seed)
    log.info("%d training and %d test windows", len(tr), len(te))
    spec = _spec_for(kind, window["context"])
    graph = build_model(spec, seed)
    loss_weights = {}
    if kind == "mtl-cnn":
        loss_weights = {"sleep_fraction": spec.loss_weights[0], "state": spec.loss_weights[1]}
    tc = TrainConfig(seed=seed, **dataclasses.asdict(cfg.train))
    result = train(graph, tr, te, tc, loss_weights, spec_to_dict(spec), window)
    cm = evaluate(result.model, te)
    rep = precision_recall(cm)
    result.model.metrics.update({"test_accuracy": rep.accuracy, "macro_f1": rep.macro_f1})

    out = Path(args.out)
    save_checkpoint(result.model, out)
    fileio.atomic_write(_sibling(out, ".metrics.csv"), fileio.metrics_csv(rep))
    fileio.atomic_write(_sibling(out, ".confusion.csv"), fileio.confusion_csv(cm))
    fileio.atomic_write(_sibling(out, ".convergence.csv"),
                        fileio.curve_csv(result.curve, include_timing=args.record_timing))
    plotting.plot_convergence([result.curve], _sibling(out, ".convergence.png"))
    plotting.plot_confusion(cm, _sibling(out, ".confusion.png"), f"{kind} held-out")
    print(render_report(rep, cm, f"{kind}: best epoch {result.best_epoch}"))
    return 0


def cmd_evaluate(args) -> int:
    report = Path(args.report)
    if args.confusion:
        if args.ckpt or args.data:
            raise UsageError("--confusion replaces --ckpt/--data")
        cm = fileio.load_confusion(args.confusion)
        title = f"confusion matrix {Path(args.confusion).name}"
    else:
        if not (args.ckpt and args.data):
            raise UsageError("evaluate needs --ckpt and --data (or --confusion)")
        model = load_checkpoint(args.ckpt)
        series = fileio.load_series_dir(args.data)
        window = {"context": 360, "stride": 1, "smooth_half_width": 2, "train_fraction": 0.8, **model.window}
        seed = int(model.train_config.get("seed", 0)) if args.seed is None else args.seed
        if args.split == "all":
            data = build_dataset(series, window["context"], window["stride"], window["smooth_half_width"])
        else:
            data = _split(series, window, seed)[1]
        cm = evaluate(model, data)
        title = f"{model.kind} on {args.split} windows ({len(data)})"
    _write_report(report, cm, title)
    print(report.read_text(encoding="utf-8"), end="")
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.ckpt)
    out = []
    for s in fileio.load_series_dir(args.data):
        out.append(s.replace(states=predict_series(model, s)))
    fileio.save_series(out, args.out)
    log.info("predicted %d series", len(out))
    return 0


def _day_vectors(series: Sequence[LabeledSeries]) -> List[DayVector]:
    days = [d for s in series for d in partition_days(s)]
    if len(days) < 2:
        raise UsageError("clustering needs at least two complete days")
    return days


def cmd_cluster(args) -> int:
    cfg = load_config(args.config)
    series: List[LabeledSeries] = []
    for f in args.data:
        series.extend(fileio.load_series_dir(f))
    if args.use_predictions:
        model = load_checkpoint(args.use_predictions)
        series = [s.replace(states=predict_series(model, s)) for s in series]
    factor = cfg.cluster.downsample if args.downsample is None else args.downsample
    k = cfg.cluster.k if args.k is None else args.k
    encoding = args.encoding or cfg.cluster.encoding

    if encoding == "activity":
        seqs, leaves = [], []
        for s in series:
            for d in range(len(s) // EPOCHS_PER_DAY):
                block = slice(d * EPOCHS_PER_DAY, (d + 1) * EPOCHS_PER_DAY)
                seqs.append(downsample_mean(s.activity[block], factor))
                attack = bool(s.attack[block].any()) if s.attack is not None else False
                leaves.append(Leaf(f"{s.patient_id}_day{d}", s.patient_id, d, attack))
        if len(seqs) < 2:
            raise UsageError("clustering needs at least two complete days")
        dm = pairwise_distances(seqs, [lf.name for lf in leaves])
    else:
        days = _day_vectors(series)
        leaves = [Leaf(d.name, d.patient_id, d.day_index, d.has_attack) for d in days]
        dm = pairwise_dtw(days, downsample=factor)

    tree = upgma(dm, leaves)
    assign = cut_tree(tree, k)
    attack = [lf.has_attack for lf in leaves]
    patient = [lf.patient_id for lf in leaves]
    pur_a, ari_a = separation_score(assign, attack)
    pur_p, ari_p = separation_score(assign, patient)

    out = Path(args.out)
    fileio.atomic_write(out / "distances.csv", fileio.distance_csv(dm.labels, dm.values))
    fileio.atomic_write(out / "tree.nwk", export_tree(tree) + "\n")
    fileio.atomic_write(out / "tree.json", json.dumps(dendrogram_to_json(tree), indent=1) + "\n")
    fileio.atomic_write(out / "clusters.csv", fileio._csv(
        [("leaf", "patient_id", "day_index", "has_attack", "cluster")]
        + [(lf.name, lf.patient_id, lf.day_index, int(lf.has_attack), int(c)) for lf, c in zip(leaves, assign)]))
    scores = {"k": k, "leaves": len(leaves), "downsample": factor, "encoding": encoding,
              "purity_attack": pur_a, "ari_attack": ari_a, "purity_patient": pur_p, "ari_patient": ari_p}
    fileio.atomic_write(out / "separation.csv", fileio.key_value_csv(scores))
    plotting.plot_dendrogram(tree, out / "dendrogram.png", assign)
    print(f"{len(leaves)} days, k={k}: attack purity {pur_a:.3f} ARI {ari_a:.3f}; "
          f"patient purity {pur_p:.3f} ARI {ari_p:.3f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .models.checks import run_gradcheck
    report = run_gradcheck(args.model, seed=0 if args.seed is None else args.seed,
                           num_params=args.params, tolerance=args.tolerance)
    print(report.render())
    return 0 if report.passed else 1


def cmd_compare(args) -> int:
    curves = [fileio.load_curve(p, name) for p, name in
              zip(args.curves, args.names or [Path(p).stem.split(".")[0] for p in args.curves])]
    rows = compare_curves(curves)
    out = Path(args.out)
    fileio.atomic_write(out, fileio.comparison_csv(rows))
    plotting.plot_convergence(curves, _sibling(out, ".png"), thresholds=(0.90, 0.95, 0.99))
    print(render_comparison(rows))
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="actisleep", description="Four-state sleep staging from actigraphy.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(sp, config=True):
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        if config:
            sp.add_argument("--config", default=None, help="YAML run configuration")
        return sp

    g = common(sub.add_parser("generate", help="write a synthetic cohort"))
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    t = common(sub.add_parser("train", help="train a model on series files"))
    t.add_argument("--data", required=True, help="series file or directory")
    t.add_argument("--model", choices=["seq-cnn", "mtl-cnn", "mlp"], default=None)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--patient", action="append", metavar="ID",
                   help="train on this patient only (repeatable); default pools every patient")
    t.add_argument("--record-timing", action="store_true",
                   help="add wall-clock seconds to the convergence CSV (breaks byte-determinism)")
    t.set_defaults(func=cmd_train)

    e = common(sub.add_parser("evaluate", help="precision/recall report"), config=False)
    e.add_argument("--ckpt")
    e.add_argument("--data")
    e.add_argument("--confusion", help="evaluate a stored confusion-matrix CSV instead of a model")
    e.add_argument("--split", choices=["test", "all"], default="test")
    e.add_argument("--report", required=True, help="text report path; CSV and PNG siblings are written next to it")
    e.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("predict", help="label series with a trained model")
    pr.add_argument("--ckpt", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    c = common(sub.add_parser("cluster", help="DTW + UPGMA over days"))
    c.add_argument("--data", nargs="+", required=True)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--use-predictions", metavar="CKPT", help="cluster predicted rather than recorded states")
    c.add_argument("--k", type=int, default=None)
    c.add_argument("--downsample", type=int, default=None)
    c.add_argument("--encoding", choices=["states", "activity"], default=None)
    c.set_defaults(func=cmd_cluster)

    gc = common(sub.add_parser("gradcheck", help="finite-difference gradient check"), config=False)
    gc.add_argument("--model", choices=["seq-cnn", "mtl-cnn", "mlp"], required=True)
    gc.add_argument("--params", type=int, default=200)
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.set_defaults(func=cmd_gradcheck)

    cp = sub.add_parser("compare", help="epochs-to-threshold table from convergence CSVs")
    cp.add_argument("--curves", nargs="+", required=True)
    cp.add_argument("--names", nargs="+")
    cp.add_argument("--out", required=True)
    cp.set_defaults(func=cmd_compare)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"actisleep {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, CheckpointError, SeriesError, fileio.FormatError, ValueError,
            FileNotFoundError, OSError) as exc:
        print(f"actisleep {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

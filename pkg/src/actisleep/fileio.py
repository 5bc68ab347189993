"""Delimited text formats and atomic file writes.

Series files hold one epoch per row::

    patient_id,timestamp_s,activity,state,attack
    P00,82800,312.5,W,0

``timestamp_s`` is absolute: the series' wall-clock start plus the epoch
offset. On load the start clock is the first row's time of day.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from .metrics import REPORT_ORDER, ConfusionMatrix, ConvergenceCurve, CurveSummary, MetricsReport
from .series import EPOCH_SECONDS, NUM_STATES, SECONDS_PER_DAY, LabeledSeries, SeriesError, SleepState

SERIES_HEADER = ("patient_id", "timestamp_s", "activity", "state", "attack")
PathLike = Union[str, os.PathLike]


class FormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path, self.line = str(path), line


def atomic_write(path: PathLike, data: Union[str, bytes]) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# series files

def series_to_text(series: Union[LabeledSeries, Sequence[LabeledSeries]]) -> str:
    items = [series] if isinstance(series, LabeledSeries) else list(series)
    ids = [s.patient_id for s in items]
    if len(set(ids)) != len(ids):
        raise SeriesError("patient ids must be unique within a file")
    for pid in ids:
        if not pid or any(c in pid for c in ',\n\r"'):
            raise SeriesError(f"patient id {pid!r} cannot be written to a delimited file")
    out = io.StringIO()
    out.write(",".join(SERIES_HEADER) + "\n")
    for s in sorted(items, key=lambda s: s.patient_id):
        clock = s.start_clock + s.timestamps
        codes = ([SleepState(int(v)).code for v in s.states] if s.states is not None
                 else [""] * len(s))
        attack = ([("1" if a else "0") for a in s.attack] if s.attack is not None
                  else [""] * len(s))
        for t, a, c, k in zip(clock.tolist(), s.activity.tolist(), codes, attack):
            out.write(f"{s.patient_id},{t},{a!r},{c},{k}\n")
    return out.getvalue()


def save_series(series: Union[LabeledSeries, Sequence[LabeledSeries]], path: PathLike) -> None:
    atomic_write(path, series_to_text(series))


def _finish(path, pid, rows) -> LabeledSeries:
    ts, act, states, attack, lines = rows
    for name, col in (("state", states), ("attack tag", attack)):
        present = [v is not None for v in col]
        if any(present) and not all(present):
            bad = lines[present.index(not present[0])]
            raise FormatError(path, bad, f"patient {pid}: either every row has a {name} or none does")
    ts = np.asarray(ts, dtype=np.int64)
    start = int(ts[0] % SECONDS_PER_DAY)
    return LabeledSeries(
        patient_id=pid,
        activity=np.asarray(act, dtype=np.float64),
        states=np.asarray(states, dtype=np.int8) if states[0] is not None else None,
        attack=np.asarray(attack, dtype=bool) if attack[0] is not None else None,
        start_clock=start,
        timestamps=ts - start,
    )


def load_series(path: PathLike) -> List[LabeledSeries]:
    path = Path(path)
    codes = {s.code: int(s) for s in SleepState}
    out: List[LabeledSeries] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SERIES_HEADER:
            raise FormatError(path, 1, f"expected header {','.join(SERIES_HEADER)}")
        pid, rows = None, None
        prev_key = None
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(SERIES_HEADER):
                raise FormatError(path, line, f"expected {len(SERIES_HEADER)} fields, got {len(rec)}")
            p, t_txt, a_txt, s_txt, k_txt = rec
            if not p:
                raise FormatError(path, line, "empty patient id")
            try:
                t = int(t_txt)
            except ValueError:
                raise FormatError(path, line, f"timestamp {t_txt!r} is not an integer") from None
            if t < 0 or t % EPOCH_SECONDS:
                raise FormatError(path, line, f"timestamp {t} is off the 30-second grid")
            try:
                a = float(a_txt)
            except ValueError:
                raise FormatError(path, line, f"activity {a_txt!r} is not a number") from None
            if not math.isfinite(a) or a < 0:
                raise FormatError(path, line, f"activity {a_txt!r} must be finite and non-negative")
            if s_txt and s_txt not in codes:
                raise FormatError(path, line, f"unknown state code {s_txt!r}")
            if k_txt not in ("", "0", "1"):
                raise FormatError(path, line, f"attack tag must be 0, 1 or empty, got {k_txt!r}")
            key = (p, t)
            if prev_key is not None and key <= prev_key:
                raise FormatError(path, line, "rows must be sorted by patient id then timestamp")
            if p != pid:
                if rows is not None:
                    out.append(_finish(path, pid, rows))
                pid, rows = p, ([], [], [], [], [])
            elif t != prev_key[1] + EPOCH_SECONDS:
                raise FormatError(path, line, f"gap in patient {p}: {prev_key[1]} is followed by {t}")
            prev_key = key
            rows[0].append(t)
            rows[1].append(a)
            rows[2].append(codes[s_txt] if s_txt else None)
            rows[3].append(k_txt == "1" if k_txt else None)
            rows[4].append(line)
        if rows is not None:
            out.append(_finish(path, pid, rows))
    return out


def load_series_dir(path: PathLike) -> List[LabeledSeries]:
    """All series from a file, or from every ``*.csv`` in a directory."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no series files in {path}")
    out = [s for f in files for s in load_series(f)]
    ids = [s.patient_id for s in out]
    if len(set(ids)) != len(ids):
        raise SeriesError("the same patient id appears in more than one file")
    return sorted(out, key=lambda s: s.patient_id)


# ---------------------------------------------------------------------------
# reports

def _csv(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def metrics_csv(report: MetricsReport) -> str:
    rows: List[Sequence] = [("state", "precision", "recall", "f1", "support")]
    for s in REPORT_ORDER:
        rows.append((SleepState(s).label, _num(report.precision[s]), _num(report.recall[s]),
                     _num(report.f1[s]), int(report.support[s])))
    rows.append(("accuracy", _num(report.accuracy), "", "", int(report.support.sum())))
    rows.append(("macro", _num(report.macro_precision), _num(report.macro_recall),
                 _num(report.macro_f1), ""))
    return _csv(rows)


def confusion_csv(cm: ConfusionMatrix) -> str:
    names = [SleepState(s).label for s in REPORT_ORDER]
    rows: List[Sequence] = [["predicted\\actual"] + names]
    for p in REPORT_ORDER:
        rows.append([SleepState(p).label] + [int(cm.counts[p, a]) for a in REPORT_ORDER])
    return _csv(rows)


def load_confusion(path: PathLike) -> ConfusionMatrix:
    """Read a confusion CSV (rows predicted, columns actual, labelled by
    state name in any order)."""
    by_label = {SleepState(s).label: s for s in range(NUM_STATES)}
    by_label.update({SleepState(s).code: s for s in range(NUM_STATES)})
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if len(rows) != NUM_STATES + 1:
        raise FormatError(path, 1, f"expected a header and {NUM_STATES} rows")
    try:
        cols = [by_label[c.strip()] for c in rows[0][1:]]
    except KeyError as exc:
        raise FormatError(path, 1, f"unknown state {exc.args[0]!r}") from None
    counts = np.zeros((NUM_STATES, NUM_STATES), dtype=np.int64)
    for line, r in enumerate(rows[1:], start=2):
        if r[0].strip() not in by_label:
            raise FormatError(path, line, f"unknown state {r[0]!r}")
        try:
            counts[by_label[r[0].strip()], cols] = [int(v) for v in r[1:]]
        except ValueError:
            raise FormatError(path, line, "counts must be integers") from None
    return ConfusionMatrix(counts)


def curve_csv(curve: ConvergenceCurve, include_timing: bool = False) -> str:
    head = ["epoch", "train_accuracy", "test_accuracy", "train_loss", "test_loss"]
    if include_timing:
        head.append("seconds")
    rows: List[Sequence] = [head]
    for i, e in enumerate(curve.epochs):
        r = [e, _num(curve.train_accuracy[i]), _num(curve.test_accuracy[i]),
             _num(curve.train_loss[i]), _num(curve.test_loss[i])]
        if include_timing:
            r.append(f"{curve.seconds[i]:.3f}")
        rows.append(r)
    return _csv(rows)


def load_curve(path: PathLike, model: str = "") -> ConvergenceCurve:
    curve = ConvergenceCurve(model or Path(path).stem)
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            curve.append(int(rec["epoch"]), float(rec["train_accuracy"]), float(rec["test_accuracy"]),
                         float(rec["train_loss"]), float(rec["test_loss"]),
                         float(rec.get("seconds") or "nan"))
    return curve


def comparison_csv(rows: Sequence[CurveSummary]) -> str:
    thresholds = list(rows[0].epochs_to) if rows else []
    out: List[Sequence] = [["model"] + [f"epochs_to_{t:.2f}" for t in thresholds] + ["final", "best"]]
    for r in rows:
        out.append([r.model] + ["" if r.epochs_to[t] is None else r.epochs_to[t] for t in thresholds]
                   + [_num(r.final_accuracy), _num(r.best_accuracy)])
    return _csv(out)


def distance_csv(labels: Sequence[str], values: np.ndarray) -> str:
    rows: List[Sequence] = [[""] + list(labels)]
    for name, row in zip(labels, values):
        rows.append([name] + [_num(v) for v in row])
    return _csv(rows)


def load_distance_csv(path: PathLike):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return labels, values


def key_value_csv(pairs: Dict[str, object]) -> str:
    return _csv([("key", "value")] + [(k, _num(v) if isinstance(v, float) else v) for k, v in pairs.items()])

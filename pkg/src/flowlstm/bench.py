"""Sequence-length and architecture studies with accuracy / latency reports."""

from __future__ import annotations

import csv
import io
import logging
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from .data import Dataset, GenConfig, build_dataset, fingerprint
from .nn import Network, predict_batch
from .optim import TrainConfig, accuracy, train
from .tensor import make_rng
from .zoo import BASELINE, ArchSpec, canonical, parse_arch
from . import zoo

log = logging.getLogger(__name__)

REPORT_MAGIC = "# flowlstm bench report v1"
TABLE_HEADERS = ("Network Descriptions", "Test Accuracy (%)", "Relative prediction time")
CSV_FIELDS = ("label", "test_accuracy_pct", "relative_time", "inference_seconds", "epochs")


@dataclass
class DataConfig:
    """How to build the synthetic dataset for a study."""

    gen: GenConfig = field(default_factory=GenConfig)
    conditions_per_regime: int = 40
    seg_seconds: float = 5.0
    augment_reverse: bool = True
    split_ratio: float = 0.8

    def build(self, seg_seconds: float | None = None) -> Dataset:
        return build_dataset(
            self.gen,
            self.conditions_per_regime,
            self.seg_seconds if seg_seconds is None else seg_seconds,
            self.augment_reverse,
            self.split_ratio,
        )

    def meta(self) -> dict:
        return {
            "gen_config": self.gen.to_dict(),
            "conditions_per_regime": self.conditions_per_regime,
            "seg_seconds": self.seg_seconds,
            "augment_reverse": self.augment_reverse,
            "split_ratio": self.split_ratio,
        }


@dataclass
class BenchRow:
    label: str
    accuracy: float
    relative_time: float
    seconds: float
    epochs: int


@dataclass
class BenchReport:
    kind: str
    rows: list[BenchRow]
    baseline: str
    fingerprint: str
    title: str = ""

    def row(self, label: str) -> BenchRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.rows]


def normalise_times(rows: list[BenchRow], baseline: str) -> None:
    """Set ``relative_time`` of every row against the baseline row, in place."""
    base = next((r for r in rows if r.label == baseline), None)
    if base is None:
        raise ValueError(f"baseline {baseline!r} not among rows")
    for r in rows:
        r.relative_time = r.seconds / base.seconds


def time_inference(net: Network, x, repeats: int = 5) -> float:
    """Median wall time to classify ``x``, after one discarded warm-up run.

    BLAS is pinned to one thread while timing.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    times = []
    with threadpool_limits(limits=1):
        predict_batch(net, x)
        for _ in range(repeats):
            t0 = time.perf_counter()
            predict_batch(net, x)
            times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _run(arch: ArchSpec, ds: Dataset, train_cfg: TrainConfig, repeats: int) -> tuple[float, float, int]:
    net = zoo.build(arch, make_rng(train_cfg.seed))
    net, report = train(net, ds, train_cfg)
    x_test, y_test = ds.arrays("test")
    acc = 100.0 * accuracy(net, x_test, y_test)
    seconds = time_inference(net, x_test, repeats)
    return acc, seconds, len(report.epochs)


def sensitivity_study(lengths, arch: ArchSpec, data: DataConfig, train_cfg: TrainConfig,
                      repeats: int = 5) -> BenchReport:
    """Train a fresh ``arch`` per segment length; relative times use the first length."""
    lengths = [float(v) for v in lengths]
    if not lengths:
        raise ValueError("need at least one sequence length")
    rows = []
    for seconds in lengths:
        ds = data.build(seg_seconds=seconds)
        acc, t, epochs = _run(arch, ds, train_cfg, repeats)
        label = f"{seconds:g} s"
        log.info("seq len %s: accuracy %.2f%%, %d epochs, %.4f s", label, acc, epochs, t)
        rows.append(BenchRow(label, acc, 1.0, t, epochs))
    normalise_times(rows, rows[0].label)
    fp = fingerprint({"data": data.meta(), "lengths": lengths, "arch": arch.to_dict(),
                      "train_seed": train_cfg.seed})
    title = f"Sensitivity study on the effect of sequence length ({arch.descriptor})"
    return BenchReport("sequence-length", rows, rows[0].label, fp, title)


def architecture_study(descriptors, data: DataConfig, train_cfg: TrainConfig, repeats: int = 5,
                       hidden_scale: float = 1.0, baseline: str = BASELINE, **dims) -> BenchReport:
    """Train every architecture on one dataset and time inference on its test split.

    ``hidden_scale`` shrinks every H (rounded, at least 1) for desk-scale
    runs; rows keep the descriptors as given.
    """
    labels = [canonical(d) for d in descriptors]
    if canonical(baseline) not in labels:
        raise ValueError(f"baseline {baseline!r} missing from the architecture list")
    baseline = canonical(baseline)
    specs = []
    for label in labels:
        spec = parse_arch(label, **dims)
        specs.append(spec.with_hidden(max(1, round(spec.hidden_cells * hidden_scale))))
    ds = data.build()
    rows = []
    for label, spec in zip(labels, specs):
        acc, t, epochs = _run(spec, ds, train_cfg, repeats)
        log.info("%s: accuracy %.2f%%, %d epochs, %.4f s", label, acc, epochs, t)
        rows.append(BenchRow(label, acc, 1.0, t, epochs))
    normalise_times(rows, baseline)
    fp = fingerprint({"data": data.meta(), "train_seed": train_cfg.seed, "hidden_scale": hidden_scale})
    title = "Two-phase flow regime classification results"
    if hidden_scale != 1.0:
        title += f" (hidden cells scaled by {hidden_scale:g})"
    return BenchReport("architecture", rows, baseline, fp, title)


def format_table(r: BenchReport) -> str:
    cells = [(row.label, f"{row.accuracy:.1f}", f"{row.relative_time:.2f}") for row in r.rows]
    widths = [max(len(h), *(len(c[k]) for c in cells)) for k, h in enumerate(TABLE_HEADERS)]

    def line(values):
        return " | ".join(v.ljust(w) for v, w in zip(values, widths)).rstrip()

    out = [r.title] if r.title else []
    out.append(line(TABLE_HEADERS))
    out.append(" | ".join("-" * w for w in widths))
    out.extend(line(c) for c in cells)
    out.append("")
    out.append(f"baseline: {r.baseline}; dataset fingerprint: {r.fingerprint}")
    return "\n".join(out) + "\n"


def format_csv(r: BenchReport) -> str:
    buf = io.StringIO()
    buf.write(f"{REPORT_MAGIC}\n# kind={r.kind}\n# baseline={r.baseline}\n"
              f"# fingerprint={r.fingerprint}\n# title={r.title}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in r.rows:
        w.writerow([row.label, repr(row.accuracy), repr(row.relative_time), repr(row.seconds), row.epochs])
    return buf.getvalue()


def emit_report(r: BenchReport, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and ``<path>.txt``; ``path`` is a file stem."""
    if not r.rows:
        raise ValueError("refusing to write an empty report")
    stem = Path(path)
    if stem.suffix in (".csv", ".txt"):
        stem = stem.with_suffix("")
    csv_path, txt_path = stem.with_suffix(".csv"), stem.with_suffix(".txt")
    csv_path.write_text(format_csv(r))
    txt_path.write_text(format_table(r))
    return csv_path, txt_path


def read_report(path) -> BenchReport:
    """Parse the delimited file written by :func:`emit_report`."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != REPORT_MAGIC:
        raise ValueError(f"{path}: not a flowlstm bench report")
    meta = {}
    k = 1
    while k < len(lines) and lines[k].startswith("# "):
        key, _, value = lines[k][2:].partition("=")
        meta[key] = value
        k += 1
    reader = csv.reader(lines[k:])
    header = next(reader)
    if tuple(header) != CSV_FIELDS:
        raise ValueError(f"{path}: unexpected columns {header}")
    rows = [BenchRow(rec[0], float(rec[1]), float(rec[2]), float(rec[3]), int(rec[4])) for rec in reader if rec]
    return BenchReport(meta.get("kind", ""), rows, meta.get("baseline", ""), meta.get("fingerprint", ""),
                       meta.get("title", ""))


def with_seed(data: DataConfig, train_cfg: TrainConfig, seed: int) -> tuple[DataConfig, TrainConfig]:
    """Copies of both configs re-seeded for a repeat run."""
    return replace(data, gen=replace(data.gen, seed=seed)), replace(train_cfg, seed=seed)

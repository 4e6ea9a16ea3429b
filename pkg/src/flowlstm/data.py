"""Synthetic void-fraction signals, augmentation, statistics, and dataset I/O.

The generator produces stand-ins for impedance-meter recordings of the five
vertical-flow regimes.  Each regime is a simple stochastic process tuned so
its amplitude PDF has the textbook shape:

* bubbly: low level, small AR(1) fluctuation, unimodal near 0
* cap bubbly: moderate level, larger fluctuation plus sparse cap-bubble pulses
* slug: two-state switching between liquid-slug and Taylor-bubble plateaus
  with exponentially distributed dwell times (bimodal PDF)
* churn-turbulent: high level, strong fluctuation, heavy-tailed liquid bursts
  (broad PDF)
* annular: high level near 1, small fluctuation plus occasional liquid waves

Every sample is clipped to [0, 1] (0 = all liquid, 1 = all gas).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .tensor import DTYPE, Rng, child_rng

SIGNAL_MAGIC = "#flowlstm-signal"
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


class FlowRegime(enum.IntEnum):
    Bubbly = 0
    CapBubbly = 1
    Slug = 2
    ChurnTurbulent = 3
    Annular = 4

    @classmethod
    def parse(cls, text: str) -> "FlowRegime":
        key = text.strip().replace("-", "").replace("_", "").replace(" ", "").lower()
        for r in cls:
            if r.name.lower() == key or str(r.value) == key:
                return r
        raise ValueError(f"unknown flow regime {text!r}")


class SignalFormatError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass(eq=False)
class Signal:
    samples: np.ndarray
    sample_rate: float
    label: FlowRegime | None = None
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=DTYPE).reshape(-1)
        if self.samples.size == 0:
            raise ValueError("signal has no samples")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if np.any(~np.isfinite(self.samples)) or self.samples.min() < 0.0 or self.samples.max() > 1.0:
            raise ValueError("signal samples must lie in [0, 1]")
        if self.label is not None:
            self.label = FlowRegime(self.label)
        if any(ch.isspace() for ch in self.source_id):
            raise ValueError(f"source_id may not contain whitespace: {self.source_id!r}")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __eq__(self, other) -> bool:
        if not isinstance(other, Signal):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.label == other.label
            and self.source_id == other.source_id
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class RegimeParams:
    """Per-condition parameter ranges for one regime.

    Ranges are ``(low, high)`` and are sampled uniformly once per condition.
    """

    level: tuple[float, float]
    sigma: tuple[float, float]
    corr_time: float = 0.05
    # slug: Taylor-bubble plateau level and mean dwell (liquid slug, gas bubble) in s
    high_level: tuple[float, float] | None = None
    dwell: tuple[float, float] | None = None
    # pulses (cap bubbles, churn liquid bursts, annular waves): rate in 1/s,
    # signed amplitude range, duration in s; heavy-tailed amplitudes if pareto > 0
    pulse_rate: float = 0.0
    pulse_amp: tuple[float, float] = (0.0, 0.0)
    pulse_width: float = 0.1
    pareto: float = 0.0


def default_regimes() -> dict[FlowRegime, RegimeParams]:
    return {
        FlowRegime.Bubbly: RegimeParams(level=(0.05, 0.18), sigma=(0.015, 0.035), corr_time=0.03),
        FlowRegime.CapBubbly: RegimeParams(
            level=(0.22, 0.36), sigma=(0.04, 0.06), corr_time=0.06,
            pulse_rate=1.5, pulse_amp=(0.08, 0.18), pulse_width=0.12,
        ),
        FlowRegime.Slug: RegimeParams(
            level=(0.10, 0.22), sigma=(0.02, 0.04), corr_time=0.04,
            high_level=(0.72, 0.85), dwell=(0.6, 0.9),
        ),
        FlowRegime.ChurnTurbulent: RegimeParams(
            level=(0.58, 0.70), sigma=(0.10, 0.14), corr_time=0.08,
            pulse_rate=1.0, pulse_amp=(-0.25, -0.10), pulse_width=0.12, pareto=3.0,
        ),
        FlowRegime.Annular: RegimeParams(
            level=(0.82, 0.92), sigma=(0.015, 0.03), corr_time=0.03,
            pulse_rate=0.8, pulse_amp=(-0.08, -0.04), pulse_width=0.08,
        ),
    }


@dataclass(frozen=True)
class GenConfig:
    regimes: dict = field(default_factory=default_regimes)
    sample_rate: float = 100.0
    duration: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if not self.sample_rate > 0 or not self.duration > 0:
            raise ValueError("sample_rate and duration must be positive")
        if set(self.regimes) != set(FlowRegime):
            raise ValueError("GenConfig needs parameters for every flow regime")
        if self.duration * self.sample_rate < 1:
            raise ValueError("duration * sample_rate must give at least one sample")

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "duration": self.duration,
            "seed": self.seed,
            "regimes": {r.name: asdict(self.regimes[r]) for r in FlowRegime},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        regimes = default_regimes()
        for name, fields in d.get("regimes", {}).items():
            fields = {k: tuple(v) if isinstance(v, list) else v for k, v in fields.items()}
            regimes[FlowRegime.parse(name)] = RegimeParams(**fields)
        return cls(regimes=regimes, sample_rate=float(d.get("sample_rate", 100.0)),
                   duration=float(d.get("duration", 60.0)), seed=int(d.get("seed", 0)))


def _ar1(n: int, sigma: float, corr_time: float, fs: float, rng: Rng) -> np.ndarray:
    """Stationary band-limited Gaussian noise with std ``sigma``."""
    phi = math.exp(-1.0 / (fs * corr_time))
    eps = rng.standard_normal(n)
    zi = np.array([phi * sigma * rng.standard_normal()])
    return lfilter([sigma * math.sqrt(1.0 - phi * phi)], [1.0, -phi], eps, zi=zi)[0]


def _pulses(n: int, fs: float, p: RegimeParams, rng: Rng) -> np.ndarray:
    out = np.zeros(n)
    count = rng.poisson(p.pulse_rate * n / fs)
    if count == 0:
        return out
    centers = rng.uniform(0, n, count)
    lo, hi = p.pulse_amp
    amps = rng.uniform(lo, hi, count)
    if p.pareto > 0:
        amps *= np.minimum(1.0 + rng.pareto(p.pareto, count), 4.0)
    width = p.pulse_width * fs
    t = np.arange(n)
    half = int(4 * width) + 1
    for c, a in zip(centers, amps):
        s, e = max(0, int(c) - half), min(n, int(c) + half)
        out[s:e] += a * np.exp(-0.5 * ((t[s:e] - c) / width) ** 2)
    return out


def _switching(n: int, fs: float, low: float, high: float, dwell: tuple[float, float], rng: Rng) -> np.ndarray:
    """Two-state plateau process; dwell times exponential with the given means."""
    out = np.empty(n)
    state = int(rng.integers(2))
    pos = 0
    while pos < n:
        length = max(1, int(round(rng.exponential(dwell[state]) * fs)))
        out[pos:pos + length] = high if state else low
        pos += length
        state = 1 - state
    # short ramps at the bubble nose and tail
    k = max(1, int(round(0.05 * fs)))
    return np.convolve(np.pad(out, (k // 2, k - 1 - k // 2), mode="edge"), np.ones(k) / k, mode="valid")


def generate(regime: FlowRegime, cfg: GenConfig, rng: Rng, source_id: str = "") -> Signal:
    """One steady-state void-fraction recording for ``regime``."""
    regime = FlowRegime(regime)
    p = cfg.regimes[regime]
    fs = cfg.sample_rate
    n = int(round(cfg.duration * fs))
    level = rng.uniform(*p.level)
    sigma = rng.uniform(*p.sigma)
    if p.dwell is not None:
        high = rng.uniform(*p.high_level)
        base = _switching(n, fs, level, high, p.dwell, rng)
    else:
        base = np.full(n, level)
    x = base + _ar1(n, sigma, p.corr_time, fs, rng)
    if p.pulse_rate > 0:
        x += _pulses(n, fs, p, rng)
    return Signal(np.clip(x, 0.0, 1.0), fs, regime, source_id or f"{regime.name.lower()}")


def compute_pdf(s: Signal | np.ndarray, bins: int = 50) -> np.ndarray:
    """Fraction of samples per equal-width bin over [0, 1]; sums to 1."""
    samples = s.samples if isinstance(s, Signal) else np.asarray(s, dtype=DTYPE).reshape(-1)
    if samples.size == 0:
        raise ValueError("cannot compute the PDF of an empty signal")
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    counts, _ = np.histogram(samples, bins=bins, range=(0.0, 1.0))
    return counts / samples.size


def compute_cpdf(s: Signal | np.ndarray, bins: int = 50) -> np.ndarray:
    return np.cumsum(compute_pdf(s, bins))


def bin_centers(bins: int) -> np.ndarray:
    return (np.arange(bins) + 0.5) / bins


def pdf_export(s: Signal, bins: int) -> str:
    """Three delimited columns: bin_center, pdf, cpdf."""
    pdf = compute_pdf(s, bins)
    rows = zip(bin_centers(bins), pdf, np.cumsum(pdf))
    return "bin_center,pdf,cpdf\n" + "".join(f"{float(c)!r},{float(p)!r},{float(q)!r}\n" for c, p, q in rows)


def write_pdf_export(s: Signal, bins: int, path) -> None:
    Path(path).write_text(pdf_export(s, bins))


def segment(s: Signal, seg_seconds: float) -> list[Signal]:
    """Non-overlapping pieces of ``floor(seg_seconds * rate)`` samples; remainder dropped."""
    size = int(math.floor(seg_seconds * s.sample_rate + 1e-9))
    if size < 1:
        raise ValueError(f"segment of {seg_seconds} s holds no samples at {s.sample_rate} Hz")
    if size > len(s):
        raise ValueError(f"segment of {seg_seconds} s is longer than the {s.duration} s signal")
    return [
        Signal(s.samples[k * size:(k + 1) * size], s.sample_rate, s.label, f"{s.source_id}#seg{k}")
        for k in range(len(s) // size)
    ]


def reverse(s: Signal) -> Signal:
    return Signal(s.samples[::-1].copy(), s.sample_rate, s.label, f"{s.source_id}:rev")


@dataclass(eq=False)
class Item:
    signal: Signal
    split: str
    condition: int
    start: int = 0
    reversed: bool = False

    @property
    def label(self) -> FlowRegime:
        return self.signal.label

    def __eq__(self, other) -> bool:
        if not isinstance(other, Item):
            return NotImplemented
        return (self.signal == other.signal and self.split == other.split
                and self.condition == other.condition and self.start == other.start
                and self.reversed == other.reversed)


@dataclass(eq=False)
class Dataset:
    """Labelled, equal-length segments with a train/test tag on each."""

    items: list[Item]
    conditions: list[Signal] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.items:
            lengths = {len(it.signal) for it in self.items}
            rates = {it.signal.sample_rate for it in self.items}
            if len(lengths) > 1 or len(rates) > 1:
                raise ValueError("dataset segments must share length and sample rate")

    def __len__(self) -> int:
        return len(self.items)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.items == other.items and self.conditions == other.conditions and self.meta == other.meta

    @property
    def window(self) -> int:
        return len(self.items[0].signal)

    @property
    def sample_rate(self) -> float:
        return self.items[0].signal.sample_rate

    def subset(self, split: str) -> list[Item]:
        return [it for it in self.items if it.split == split]

    def arrays(self, split: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """``(X, y)`` with X of shape (N, T) for the given split (all if None)."""
        items = self.items if split is None else self.subset(split)
        if not items:
            return np.zeros((0, self.window if self.items else 0)), np.zeros(0, dtype=np.int64)
        X = np.stack([it.signal.samples for it in items])
        y = np.array([int(it.label) for it in items], dtype=np.int64)
        return X, y

    def counts(self, split: str | None = None) -> dict[FlowRegime, int]:
        items = self.items if split is None else self.subset(split)
        out = {r: 0 for r in FlowRegime}
        for it in items:
            out[it.label] += 1
        return out

    def fingerprint(self) -> str:
        return fingerprint(self.meta)


def fingerprint(meta: dict) -> str:
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def build_dataset(
    cfg: GenConfig,
    conditions_per_regime: int = 40,
    seg_seconds: float = 5.0,
    augment_reverse: bool = True,
    split_ratio: float = 0.8,
    seed: int | None = None,
) -> Dataset:
    """Generate conditions, split them train/test, segment, optionally reverse.

    The split is drawn per regime at the condition level so that no
    condition contributes segments to both sides.  Condition ``k`` always
    uses the RNG stream ``(seed, k)``.
    """
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split_ratio must be in (0, 1), got {split_ratio}")
    if conditions_per_regime < 1:
        raise ValueError("conditions_per_regime must be >= 1")
    seed = cfg.seed if seed is None else seed
    n_train = int(round(split_ratio * conditions_per_regime))
    if n_train == 0 or n_train == conditions_per_regime:
        raise ValueError(
            f"split_ratio {split_ratio} with {conditions_per_regime} conditions per regime leaves one side empty"
        )
    split_rng = child_rng(seed, 1 << 20)
    conditions: list[Signal] = []
    splits: list[str] = []
    for regime in FlowRegime:
        order = split_rng.permutation(conditions_per_regime)
        train_ids = set(order[:n_train].tolist())
        for j in range(conditions_per_regime):
            k = int(regime) * conditions_per_regime + j
            sig = generate(regime, cfg, child_rng(seed, k), source_id=f"c{k:04d}-{regime.name.lower()}")
            conditions.append(sig)
            splits.append("train" if j in train_ids else "test")

    items = []
    for k, (sig, split) in enumerate(zip(conditions, splits)):
        pieces = segment(sig, seg_seconds)
        size = len(pieces[0])
        for j, piece in enumerate(pieces):
            items.append(Item(piece, split, k, j * size, False))
            if augment_reverse:
                items.append(Item(reverse(piece), split, k, j * size, True))

    meta = {
        "gen_config": cfg.to_dict(),
        "seed": int(seed),
        "conditions_per_regime": conditions_per_regime,
        "seg_seconds": float(seg_seconds),
        "augment_reverse": bool(augment_reverse),
        "split_ratio": float(split_ratio),
    }
    # JSON-normal form, so a saved and reloaded dataset compares equal
    meta = json.loads(json.dumps(meta))
    return Dataset(items, conditions, meta)


def write_signal(s: Signal, path) -> None:
    label = s.label.name if s.label is not None else "none"
    with open(path, "w") as fh:
        fh.write(f"{SIGNAL_MAGIC} sample_rate={s.sample_rate!r} label={label} source_id={s.source_id}\n")
        fh.write("\n".join(repr(float(v)) for v in s.samples))
        fh.write("\n")


def read_signal(path) -> Signal:
    """Parse a signal file; raises :class:`SignalFormatError` with a line number."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(SIGNAL_MAGIC):
        raise SignalFormatError(path, 1, f"missing '{SIGNAL_MAGIC}' header")
    header = {}
    for tok in lines[0][len(SIGNAL_MAGIC):].split():
        key, sep, value = tok.partition("=")
        if not sep:
            raise SignalFormatError(path, 1, f"bad header field {tok!r}")
        header[key] = value
    try:
        rate = float(header["sample_rate"])
        label_text = header.get("label", "none")
        label = None if label_text == "none" else FlowRegime.parse(label_text)
    except (KeyError, ValueError) as exc:
        raise SignalFormatError(path, 1, f"bad header: {exc}") from None
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            v = float(line)
        except ValueError:
            raise SignalFormatError(path, lineno, f"not a number: {line!r}") from None
        if not 0.0 <= v <= 1.0:
            raise SignalFormatError(path, lineno, f"sample {v} outside [0, 1]")
        values.append(v)
    if not values:
        raise SignalFormatError(path, len(lines), "no samples")
    try:
        return Signal(np.array(values), rate, label, header.get("source_id", ""))
    except ValueError as exc:
        raise SignalFormatError(path, 1, str(exc)) from None


def save_dataset(ds: Dataset, directory) -> Path:
    """Write one signal file per condition plus ``manifest.json`` listing every item."""
    directory = Path(directory)
    (directory / "signals").mkdir(parents=True, exist_ok=True)
    files = []
    for k, sig in enumerate(ds.conditions):
        name = f"signals/{sig.source_id}.sig"
        write_signal(sig, directory / name)
        files.append({"file": name, "label": sig.label.name, "source_id": sig.source_id})
    items = [
        {
            "condition": it.condition,
            "start": it.start,
            "length": len(it.signal),
            "reversed": it.reversed,
            "split": it.split,
            "label": it.label.name,
            "source_id": it.signal.source_id,
        }
        for it in ds.items
    ]
    manifest = {
        "format": "flowlstm-dataset",
        "version": MANIFEST_VERSION,
        "fingerprint": ds.fingerprint(),
        "meta": ds.meta,
        "signals": files,
        "items": items,
    }
    path = directory / MANIFEST_NAME
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    path = directory / MANIFEST_NAME if directory.is_dir() else directory
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "flowlstm-dataset":
        raise ValueError(f"{path}: not a flowlstm dataset manifest")
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported manifest version {manifest.get('version')}")
    root = path.parent
    conditions = [read_signal(root / f["file"]) for f in manifest["signals"]]
    items = []
    for rec in manifest["items"]:
        parent = conditions[rec["condition"]]
        start, length = rec["start"], rec["length"]
        samples = parent.samples[start:start + length]
        if samples.size != length:
            raise ValueError(f"{path}: item {rec['source_id']} runs past the end of its signal")
        if rec["reversed"]:
            samples = samples[::-1].copy()
        sig = Signal(samples, parent.sample_rate, FlowRegime.parse(rec["label"]), rec["source_id"])
        items.append(Item(sig, rec["split"], rec["condition"], start, rec["reversed"]))
    return Dataset(items, conditions, manifest["meta"])


def manifest_digest(directory) -> str:
    with open(os.path.join(directory, MANIFEST_NAME), "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


"""Checkpoint container (JSON, version 1).

Layout::

    {
      "format": "flowlstm-checkpoint",
      "version": 1,
      "arch": {descriptor, lstm_layers, hidden_cells, ...},
      "seed": <training seed>,
      "window": <samples per input sequence> | null,
      "sample_rate": <Hz> | null,
      "dataset": <dataset fingerprint> | null,
      "report": <TrainReport.summary()> | null,
      "params": [{"name": "1.W_xi", "shape": [H, D], "data": <base64>}, ...]
    }

Tensor ``data`` is the base64 of the little-endian float64 bytes in C order,
so values round-trip bit for bit.  Keys are written sorted and nothing
time-dependent is stored, so equal models give byte-identical files.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .nn import Network
from .optim import init_network
from .zoo import ArchSpec

FORMAT = "flowlstm-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    net: Network
    arch: ArchSpec
    seed: int
    window: int | None = None
    sample_rate: float | None = None
    dataset: str | None = None
    report: dict | None = None


def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(text: str, shape) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"), validate=True)
    a = np.frombuffer(raw, dtype="<f8")
    if a.size != int(np.prod(shape)):
        raise CheckpointError(f"tensor has {a.size} values, shape {shape} needs {int(np.prod(shape))}")
    return a.reshape(shape).astype(np.float64)


def dumps(ckpt: Checkpoint) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "arch": ckpt.arch.to_dict(),
        "seed": int(ckpt.seed),
        "window": None if ckpt.window is None else int(ckpt.window),
        "sample_rate": None if ckpt.sample_rate is None else float(ckpt.sample_rate),
        "dataset": ckpt.dataset,
        "report": ckpt.report,
        "params": [
            {"name": name, "shape": list(a.shape), "data": _encode(a)}
            for name, a in ckpt.net.parameters().items()
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def loads(text: str) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a JSON checkpoint: {exc}") from None
    if doc.get("format") != FORMAT:
        raise CheckpointError("not a flowlstm checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    arch = ArchSpec.from_dict(doc["arch"])
    net = init_network(arch, None)
    values = {rec["name"]: _decode(rec["data"], tuple(rec["shape"])) for rec in doc["params"]}
    try:
        net.load_parameters(values)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None
    return Checkpoint(net, arch, doc["seed"], doc.get("window"), doc.get("sample_rate"),
                      doc.get("dataset"), doc.get("report"))


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(ckpt))


def load_checkpoint(path) -> Checkpoint:
    with open(path) as fh:
        return loads(fh.read())

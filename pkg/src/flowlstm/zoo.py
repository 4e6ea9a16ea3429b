"""Architecture descriptors such as ``2LSTM-128H-2ReLU`` and ``(LSTM-128H-2ReLU)×3``.

Grammar::

    descriptor := body | "(" body ")" "×" k
    body       := [n] "LSTM-" H "H-" m "ReLU"

``n`` adjacent LSTM layers of ``H`` cells are followed by ``m`` ReLU layers
of width ``H``; the ``×k`` form repeats that whole block ``k`` times.  Every
network starts with one ReLU feature layer (``feature_dim`` wide) and ends
with the linear softmax head.  ``x``, ``X`` and ``*`` are accepted in place
of ``×``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .nn import Network
from .tensor import Rng

STANDARD_ARCHS = (
    "LSTM-128H-2ReLU",
    "LSTM-256H-2ReLU",
    "2LSTM-128H-2ReLU",
    "3LSTM-128H-2ReLU",
    "LSTM-128H-1ReLU",
    "LSTM-128H-3ReLU",
    "(LSTM-128H-2ReLU)×2",
    "(LSTM-128H-2ReLU)×3",
)
BASELINE = "LSTM-128H-2ReLU"

_TOKENS = (
    (re.compile(r"(\d*)LSTM"), "[n]LSTM"),
    (re.compile(r"(\d+)H"), "<H>H"),
    (re.compile(r"(\d+)ReLU"), "<m>ReLU"),
)
_STACK = re.compile(r"\((?P<body>[^()]*)\)\s*[×xX*]\s*(?P<k>\S*)")


class ArchError(ValueError):
    pass


@dataclass(frozen=True)
class ArchSpec:
    lstm_layers: int
    hidden_cells: int
    relu_layers: int
    stack_factor: int = 1
    input_dim: int = 1
    feature_dim: int = 64
    class_count: int = 5

    def __post_init__(self):
        checks = (
            ("lstm_layers", self.lstm_layers, 1),
            ("hidden_cells", self.hidden_cells, 1),
            ("relu_layers", self.relu_layers, 0),
            ("stack_factor", self.stack_factor, 1),
            ("input_dim", self.input_dim, 1),
            ("feature_dim", self.feature_dim, 1),
            ("class_count", self.class_count, 2),
        )
        for name, value, low in checks:
            if not isinstance(value, int) or value < low:
                raise ArchError(f"{name} must be an integer >= {low}, got {value!r}")

    @property
    def descriptor(self) -> str:
        return format_arch(self)

    def with_hidden(self, hidden_cells: int) -> "ArchSpec":
        return replace(self, hidden_cells=hidden_cells)

    def to_dict(self) -> dict:
        return {
            "descriptor": self.descriptor,
            "lstm_layers": self.lstm_layers,
            "hidden_cells": self.hidden_cells,
            "relu_layers": self.relu_layers,
            "stack_factor": self.stack_factor,
            "input_dim": self.input_dim,
            "feature_dim": self.feature_dim,
            "class_count": self.class_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(**{k: v for k, v in d.items() if k != "descriptor"})


def parse_arch(descriptor: str, **dims) -> ArchSpec:
    """Parse a descriptor; ``dims`` may override input/feature/class sizes."""
    text = descriptor.strip()
    k = 1
    if text.startswith("("):
        m = _STACK.fullmatch(text)
        if m is None:
            raise ArchError(f"malformed stacking in {descriptor!r}: expected '(<body>)×<k>'")
        if not m["k"].isdigit():
            raise ArchError(f"bad stack factor {m['k']!r} in {descriptor!r}: expected a positive integer")
        k = int(m["k"])
        if k < 1:
            raise ArchError(f"bad stack factor {m['k']!r} in {descriptor!r}: must be >= 1")
        text = m["body"].strip()
    tokens = text.split("-")
    if len(tokens) != 3:
        raise ArchError(f"malformed descriptor {descriptor!r}: expected '[n]LSTM-<H>H-<m>ReLU'")
    values = []
    for tok, (pattern, expected) in zip(tokens, _TOKENS):
        m = pattern.fullmatch(tok)
        if m is None:
            raise ArchError(f"bad token {tok!r} in {descriptor!r}: expected {expected}")
        values.append(m.group(1))
    n = int(values[0]) if values[0] else 1
    H, relu = int(values[1]), int(values[2])
    if n < 1:
        raise ArchError(f"bad token {tokens[0]!r} in {descriptor!r}: LSTM layer count must be >= 1")
    if H < 1:
        raise ArchError(f"bad token {tokens[1]!r} in {descriptor!r}: hidden cell count must be >= 1")
    return ArchSpec(n, H, relu, k, **dims)


def format_arch(spec: ArchSpec) -> str:
    body = f"{spec.lstm_layers if spec.lstm_layers > 1 else ''}LSTM-{spec.hidden_cells}H-{spec.relu_layers}ReLU"
    return f"({body})×{spec.stack_factor}" if spec.stack_factor > 1 else body


def canonical(descriptor: str) -> str:
    return format_arch(parse_arch(descriptor))


def layer_plan(spec: ArchSpec) -> list[tuple[str, int, int]]:
    """``(kind, in_dim, out_dim)`` per layer, kind in {relu, lstm, linear}."""
    plan = [("relu", spec.input_dim, spec.feature_dim)]
    width = spec.feature_dim
    for _ in range(spec.stack_factor):
        for _ in range(spec.lstm_layers):
            plan.append(("lstm", width, spec.hidden_cells))
            width = spec.hidden_cells
        # block ReLU layers keep width H so the parameter count grows with every
        # descriptor field (a narrower ReLU would shrink the next block's LSTM input)
        for _ in range(spec.relu_layers):
            plan.append(("relu", width, spec.hidden_cells))
    plan.append(("linear", width, spec.class_count))
    return plan


def build(spec: ArchSpec, rng: Rng | None = None) -> Network:
    """Network for ``spec``; orthogonally initialised from ``rng``, zeros if None."""
    from .optim import init_network

    return init_network(spec, rng)


def parameter_count(spec: ArchSpec) -> int:
    total = 0
    for kind, d_in, d_out in layer_plan(spec):
        if kind == "lstm":
            total += 4 * d_out * (d_in + d_out + 1) + 3 * d_out
        else:
            total += d_out * (d_in + 1)
    return total

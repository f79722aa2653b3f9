"""Serialize numeric series to model-facing text.

Values are formatted at a fixed decimal precision (2, 4, 8 or 16 places,
round-half-even as performed by ``format``), joined by either a space or a
comma-and-space, optionally after rescaling.  Two rescalings are supported:
min-max onto [0, 1], and a quantile-based affine map ``x -> (x - m) / q``
with ``m = min - beta * (max - min)`` and ``q`` the ``alpha``-quantile of the
shifted values (1 when the quantile is 0).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, RejectedInputError

PRECISIONS = (2, 4, 8, 16)

SEPARATORS = {"space": " ", "comma_space": ", "}

_NEG_ZERO = re.compile(r"^-(?=0(?:\.0*)?$)")


@dataclass(frozen=True)
class CodecSpec:
    precision: int = 2
    separator: str = "space"
    scaling: str = "none"  # "none" | "minmax" | "llmtime"
    alpha: float = 0.5
    beta: float = 0.0
    include_x: bool = True
    scale_x: bool = False  # when scaling, x stays raw by default

    def __post_init__(self):
        if self.precision not in PRECISIONS:
            raise RejectedInputError(f"precision must be one of {PRECISIONS}, got {self.precision}")
        if self.separator not in SEPARATORS:
            raise RejectedInputError(f"separator must be one of {tuple(SEPARATORS)}, got {self.separator!r}")
        if self.scaling not in ("none", "minmax", "llmtime"):
            raise RejectedInputError(f"unknown scaling: {self.scaling!r}")
        if self.scaling == "llmtime":
            if not 0 < self.alpha <= 1:
                raise RejectedInputError(f"alpha must be in (0, 1], got {self.alpha}")
            if not 0 <= self.beta <= 1:
                raise RejectedInputError(f"beta must be in [0, 1], got {self.beta}")


@dataclass
class Transform:
    """Affine audit record: scaled = (values - offset) / scale."""

    kind: str
    offset: float = 0.0
    scale: float = 1.0

    def invert(self, scaled: Sequence[float]) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * self.scale + self.offset


def scale(values: Sequence[float], spec: CodecSpec) -> tuple[np.ndarray, Transform]:
    """Rescale values per the spec's scaling mode; returns (scaled, transform)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise RejectedInputError("cannot scale an empty vector")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError("cannot scale non-finite values")
    if spec.scaling == "none":
        return arr.copy(), Transform(kind="none")
    lo = float(arr.min())
    hi = float(arr.max())
    if spec.scaling == "minmax":
        if hi == lo:
            raise DegenerateInputError("min-max scaling is undefined for a constant vector")
        return (arr - lo) / (hi - lo), Transform(kind="minmax", offset=lo, scale=hi - lo)
    # llmtime
    offset = lo - spec.beta * (hi - lo)
    q = float(np.quantile(arr - offset, spec.alpha))
    if q == 0.0:
        q = 1.0
    return (arr - offset) / q, Transform(kind="llmtime", offset=offset, scale=q)


def format_value(value: float, precision: int) -> str:
    """Fixed-precision decimal string; negative zero normalized to plain zero."""
    return _NEG_ZERO.sub("", f"{value:.{precision}f}")


def encode_values(values: Sequence[float], spec: CodecSpec) -> str:
    sep = SEPARATORS[spec.separator]
    return sep.join(format_value(float(v), spec.precision) for v in values)


def decode_values(text: str, spec: CodecSpec) -> np.ndarray:
    """Parse an encoding back to floats (testing / audit helper)."""
    parts = [p for p in text.replace(",", " ").split() if p]
    return np.asarray([float(p) for p in parts], dtype=np.float64)


def encode_series(
    xs: Optional[Sequence[float]],
    named_values: Sequence[tuple[str, Sequence[float]]],
    spec: CodecSpec,
) -> str:
    """Stringify one or more named value vectors, optionally with their xs.

    Each vector becomes one ``name: v1<sep>v2...`` line.  Scaling applies to
    the value vectors; xs are scaled only when ``spec.scale_x`` is set.
    """
    if not named_values or any(len(v) == 0 for _, v in named_values):
        raise RejectedInputError("cannot encode an empty series")
    lines = []
    if spec.include_x and xs is not None:
        x_arr = np.asarray(xs, dtype=np.float64)
        if spec.scale_x and spec.scaling != "none":
            x_arr, _ = scale(x_arr, spec)
        lines.append(f"x: {encode_values(x_arr, spec)}")
    for name, values in named_values:
        arr = np.asarray(values, dtype=np.float64)
        if spec.scaling != "none":
            arr, _ = scale(arr, spec)
        lines.append(f"{name}: {encode_values(arr, spec)}")
    return "\n".join(lines)

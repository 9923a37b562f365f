"""Haar analysis of trajectory profiles.

Two decompositions are provided:

* the classic multi-level Haar transform (``decompose``/``reconstruct``),
  splitting a profile into a coarse approximation plus per-level detail
  coefficients, and
* a filter-free alternative (``downsample_within_horizon``) that builds the
  level stack by plain strided subsampling followed by truncation to a fixed
  number of samples per level.

Coefficient convention: the unnormalized sum/difference pair

    a_t = x_{2t} + x_{2t+1},    d_t = x_{2t} - x_{2t+1}

so reconstruction halves (x_{2t} = (a_t + d_t)/2, x_{2t+1} = (a_t - d_t)/2)
and one analysis level satisfies sum(a^2) + sum(d^2) = 2 * sum(x^2).  The
convention is recorded in metadata as ``haar-sumdiff``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import fmt_float, write_csv

HAAR_CONVENTION = "haar-sumdiff"


def _as_columns(signal) -> tuple[np.ndarray, bool]:
    """Promote (T,) to (T, 1); report whether the input was 1-D."""
    arr = np.asarray(signal, dtype=float)
    if arr.ndim == 1:
        return arr[:, None], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"expected 1-D or 2-D signal, got shape {arr.shape}")


def haar_forward(signal):
    """One analysis level: returns (approx, detail), each half the input length.

    Accepts a (T,) sequence or a (T, K) multi-channel matrix (per-column).
    """
    arr, squeeze = _as_columns(signal)
    n = arr.shape[0]
    if n < 2 or n % 2 != 0:
        raise ValueError(f"signal length must be even and >= 2, got {n}")
    pairs = arr.reshape(n // 2, 2, arr.shape[1])
    approx = pairs[:, 0, :] + pairs[:, 1, :]
    detail = pairs[:, 0, :] - pairs[:, 1, :]
    if squeeze:
        return approx[:, 0], detail[:, 0]
    return approx, detail


def haar_inverse(approx, detail):
    """Invert :func:`haar_forward`; approx and detail must have equal shape."""
    a, squeeze_a = _as_columns(approx)
    d, squeeze_d = _as_columns(detail)
    if a.shape != d.shape:
        raise ValueError(f"approx/detail shape mismatch: {a.shape} vs {d.shape}")
    out = np.empty((2 * a.shape[0], a.shape[1]), dtype=float)
    out[0::2] = (a + d) / 2.0
    out[1::2] = (a - d) / 2.0
    if squeeze_a and squeeze_d:
        return out[:, 0]
    return out


@dataclass
class WaveletPyramid:
    """Multi-level coefficients: ``details[l-1]`` is level l (length T/2^l per
    channel), ``approx`` is the final-level approximation (length T/2^N)."""

    approx: np.ndarray
    details: list[np.ndarray]
    source_length: int

    @property
    def levels(self) -> int:
        return len(self.details)

    def check_shapes(self) -> None:
        t = self.source_length
        for l, det in enumerate(self.details, start=1):
            want = t // (2 ** l)
            if det.shape[0] != want:
                raise ValueError(
                    f"detail level {l} has {det.shape[0]} rows, expected {want}"
                )
        want = t // (2 ** self.levels)
        if self.approx.shape[0] != want:
            raise ValueError(
                f"approximation has {self.approx.shape[0]} rows, expected {want}"
            )


def decompose(matrix, levels: int) -> WaveletPyramid:
    """Recursive Haar analysis of a (T, K) profile into ``levels`` levels.

    Level-1 detail comes straight off the raw signal; each further level
    re-analyzes the previous approximation.
    """
    arr, _ = _as_columns(matrix)
    t = arr.shape[0]
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if t % (2 ** levels) != 0:
        raise ValueError(
            f"signal length {t} must be divisible by 2^levels = {2 ** levels}"
        )
    details = []
    approx = arr
    for _ in range(levels):
        approx, detail = haar_forward(approx)
        details.append(detail)
    return WaveletPyramid(approx=approx, details=details, source_length=t)


def reconstruct(pyramid: WaveletPyramid) -> np.ndarray:
    """Invert :func:`decompose`; exact up to float rounding."""
    pyramid.check_shapes()
    signal = pyramid.approx
    for detail in reversed(pyramid.details):
        signal = haar_inverse(signal, detail)
    return signal


@dataclass
class ScopedStack:
    """Strided-and-truncated sub-trajectories; ``levels[l-1]`` holds the first
    ``horizon`` samples of the source downsampled by stride 2^(l-1)."""

    levels: list[np.ndarray]
    horizon: int
    source_length: int


def downsample_within_horizon(matrix, levels: int, horizon: int) -> ScopedStack:
    """Build the strided stack: level l = source[::2^(l-1)][:horizon]."""
    arr, _ = _as_columns(matrix)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    out = []
    for l in range(1, levels + 1):
        strided = arr[:: 2 ** (l - 1)]
        out.append(strided[:horizon].copy())
    return ScopedStack(levels=out, horizon=horizon, source_length=arr.shape[0])


# ---------------------------------------------------------------------------
# On-disk format: one CSV per component plus a metadata sidecar.


def save_pyramid(pyramid: WaveletPyramid, out_dir, channel_names) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ("idx",) + tuple(channel_names)
    written = []

    def dump(name, data):
        path = out_dir / name
        rows = [[i] + [fmt_float(v) for v in row] for i, row in enumerate(data)]
        write_csv(path, header, rows)
        written.append(path)

    for l, det in enumerate(pyramid.details, start=1):
        dump(f"detail_{l:02d}.csv", det)
    dump("approximation.csv", pyramid.approx)
    meta = {
        "convention": HAAR_CONVENTION,
        "kind": "pyramid",
        "levels": pyramid.levels,
        "source_length": pyramid.source_length,
        "channels": list(channel_names),
    }
    meta_path = out_dir / "metadata.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    written.append(meta_path)
    return written


def save_stack(stack: ScopedStack, out_dir, channel_names) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ("idx",) + tuple(channel_names)
    written = []
    for l, level in enumerate(stack.levels, start=1):
        path = out_dir / f"level_{l:02d}.csv"
        rows = [[i] + [fmt_float(v) for v in row] for i, row in enumerate(level)]
        write_csv(path, header, rows)
        written.append(path)
    meta = {
        "kind": "scoped-stack",
        "levels": len(stack.levels),
        "horizon": stack.horizon,
        "source_length": stack.source_length,
        "channels": list(channel_names),
    }
    meta_path = out_dir / "metadata.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    written.append(meta_path)
    return written

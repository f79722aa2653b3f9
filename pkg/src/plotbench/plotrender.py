"""Deterministic rendering of task instances to PNG images.

Figures are built directly on ``matplotlib.figure.Figure`` (no pyplot state)
with a pinned font and no volatile PNG metadata, so identical (data, spec,
matplotlib version) triples produce identical bytes.  The spec exposes the
ablation axes: dpi, figure size, style sheet, palette, marker shape/size and
which plot components are drawn (``all``, ``minimal`` = grid and axes only,
``none`` = bare data).
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg", force=False)

import matplotlib.style
import numpy as np
from matplotlib.figure import Figure

from .errors import RejectedInputError
from .imupipe import ImuSegment
from .synthgen import ClusterSet, CorrelationPair, DerivativeTask, Series, TaskInstance

ABLATION_DPIS = (25, 50, 100, 200, 400)
ABLATION_FIGSIZES = ((3.5, 3.5), (4, 3), (7, 7), (8, 6), (12, 12))

STYLES = ("default", "classic", "ggplot_like", "whitegrid", "darkgrid")
_STYLE_SHEETS = {
    "default": None,
    "classic": "classic",
    "ggplot_like": "ggplot",
    "whitegrid": "seaborn-v0_8-whitegrid",
    "darkgrid": "seaborn-v0_8-darkgrid",
}

# palette -> (marker color or None for style default, background, text)
PALETTES = {
    "default": (None, "white", "black"),
    "black_white": ("black", "white", "black"),
    "high_contrast": ("yellow", "black", "white"),
    "low_contrast": ("#aaaaaa", "white", "#666666"),
    "invert": ("white", "black", "white"),
}

MARKERS = {"circle": "o", "square": "s", "triangle": "^", "x": "x", "plus": "+"}

MARKER_SIZES = {"small": 10, "medium": 50, "large": 100}

COMPONENTS = ("all", "minimal", "none")

# per-task defaults following the generation code's figure comments
TASK_FIGURE_DEFAULTS = {
    "function_id": ((6.4, 4.8), 100),
    "correlation": ((4.0, 4.0), 96),
    "cluster_count": ((8.0, 8.0), 96),
    "derivative_id": ((6.0, 4.0), 100),
    "quadratic_derivative_id": ((6.0, 4.0), 100),
    "imu_fall": ((6.0, 4.0), 100),
    "imu_activity": ((4.0, 4.0), 90),
    "trimp_bars": ((6.4, 4.8), 100),
}


@dataclass(frozen=True)
class PlotSpec:
    figsize: Optional[tuple[float, float]] = None  # None -> per-task default
    dpi: Optional[int] = None
    style: str = "default"
    palette: str = "default"
    marker: str = "circle"
    marker_size: str = "medium"
    components: str = "all"

    def __post_init__(self):
        if self.style not in STYLES:
            raise RejectedInputError(f"style must be one of {STYLES}, got {self.style!r}")
        if self.palette not in PALETTES:
            raise RejectedInputError(f"palette must be one of {tuple(PALETTES)}, got {self.palette!r}")
        if self.marker not in MARKERS:
            raise RejectedInputError(f"marker must be one of {tuple(MARKERS)}, got {self.marker!r}")
        if self.marker_size not in MARKER_SIZES:
            raise RejectedInputError(f"marker_size must be one of {tuple(MARKER_SIZES)}, got {self.marker_size!r}")
        if self.components not in COMPONENTS:
            raise RejectedInputError(f"components must be one of {COMPONENTS}, got {self.components!r}")

    def resolve(self, task_kind: str) -> tuple[tuple[float, float], int]:
        default_size, default_dpi = TASK_FIGURE_DEFAULTS.get(task_kind, ((6.4, 4.8), 100))
        return tuple(self.figsize or default_size), int(self.dpi or default_dpi)

    def content_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


@dataclass
class Image:
    width_px: int
    height_px: int
    png_bytes: bytes
    sha256: str
    spec: PlotSpec
    role: str = ""  # e.g. "question", "choice_1", "accelerometer"

    def pixels(self) -> np.ndarray:
        """Decode to an (h, w, 3) uint8 array."""
        from PIL import Image as PILImage

        with PILImage.open(io.BytesIO(self.png_bytes)) as im:
            return np.asarray(im.convert("RGB"))


def _rc_for(spec: PlotSpec) -> dict:
    _, bg, text = PALETTES[spec.palette]
    rc = {}
    sheet = _STYLE_SHEETS[spec.style]
    if sheet is not None:
        rc.update(matplotlib.style.library[sheet])
    rc.update(
        {
            "font.family": "DejaVu Sans",  # bundled with matplotlib; no system fonts
            "figure.facecolor": bg,
            "axes.facecolor": bg,
            "savefig.facecolor": bg,
            "text.color": text,
            "axes.labelcolor": text,
            "axes.edgecolor": text,
            "xtick.color": text,
            "ytick.color": text,
            "svg.hashsalt": "plotbench",
        }
    )
    return rc


def _finish(fig: Figure, ax, spec: PlotSpec, title: str, xlabel: str, ylabel: str) -> None:
    if spec.components == "all":
        if title:
            ax.set_title(title)
        if xlabel:
            ax.set_xlabel(xlabel)
        if ylabel:
            ax.set_ylabel(ylabel)
        ax.grid(True)
    elif spec.components == "minimal":
        ax.grid(True)
        ax.tick_params(labelbottom=False, labelleft=False, length=0)
    else:
        ax.set_axis_off()


def _to_image(fig: Figure, spec: PlotSpec, dpi: int, role: str) -> Image:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=dpi, metadata={"Software": None})
    data = buf.getvalue()
    w = int(round(fig.get_figwidth() * dpi))
    h = int(round(fig.get_figheight() * dpi))
    return Image(
        width_px=w,
        height_px=h,
        png_bytes=data,
        sha256=hashlib.sha256(data).hexdigest(),
        spec=spec,
        role=role,
    )


def _check_finite(*arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise RejectedInputError("cannot render non-finite coordinates")


def _scatter_series(xs, ys, spec: PlotSpec, figsize, dpi, title, ylabel, role) -> Image:
    _check_finite(xs, ys)
    with matplotlib.rc_context(_rc_for(spec)):
        fig = Figure(figsize=figsize, dpi=dpi)
        ax = fig.add_subplot()
        color, _, _ = PALETTES[spec.palette]
        kwargs = {"marker": MARKERS[spec.marker], "s": MARKER_SIZES[spec.marker_size]}
        if color is not None:
            kwargs["c"] = color
        ax.scatter(xs, ys, **kwargs)
        _finish(fig, ax, spec, title, "x", ylabel)
        return _to_image(fig, spec, dpi, role)


def render_task(instance: TaskInstance, spec: PlotSpec = PlotSpec()) -> list[Image]:
    """Render a synthetic task instance; derivative tasks yield 5 images."""
    payload = instance.payload
    figsize, dpi = spec.resolve(instance.task_kind)
    if isinstance(payload, Series):
        return [
            _scatter_series(
                payload.xs, payload.ys, spec, figsize, dpi,
                "Data showing a trend to be identified.", "y", "question",
            )
        ]
    if isinstance(payload, CorrelationPair):
        _check_finite(payload.xs, payload.y1s, payload.y2s)
        with matplotlib.rc_context(_rc_for(spec)):
            fig = Figure(figsize=figsize, dpi=dpi)
            ax = fig.add_subplot()
            ax.plot(payload.xs, payload.y1s, color="red", linewidth=3, label="y1")
            ax.plot(payload.xs, payload.y2s, color="blue", linewidth=3, label="y2")
            if spec.components == "all":
                ax.legend(loc="lower right")
            _finish(fig, ax, spec, "Synthetic Function Comparison", "x", "y")
            return [_to_image(fig, spec, dpi, "question")]
    if isinstance(payload, ClusterSet):
        _check_finite(payload.points)
        with matplotlib.rc_context(_rc_for(spec)):
            fig = Figure(figsize=figsize, dpi=dpi)
            ax = fig.add_subplot()
            color, _, _ = PALETTES[spec.palette]
            ax.scatter(
                payload.points[:, 0],
                payload.points[:, 1],
                c=color or "black",
                marker=MARKERS[spec.marker],
                s=MARKER_SIZES[spec.marker_size],
            )
            ax.set_xlim(-1, 1)
            ax.set_ylim(-1, 1)
            _finish(fig, ax, spec, "Synthetic Clustered Data", "x", "y")
            return [_to_image(fig, spec, dpi, "question")]
    if isinstance(payload, DerivativeTask):
        if payload.variant == "quadratic_scale":
            question_title = "Quadratic function whose derivative is to be identified."
        else:
            question_title = "Function whose derivative is to be identified."
        images = [
            _scatter_series(
                payload.question.xs, payload.question.ys, spec, figsize, dpi,
                question_title, "y", "question",
            )
        ]
        for i, choice in enumerate(payload.choices, start=1):
            images.append(
                _scatter_series(
                    choice.xs, choice.ys, spec, figsize, dpi,
                    f"Potential derivative choice {i}", "dy", f"choice_{i}",
                )
            )
        return images
    raise RejectedInputError(f"no renderer for payload type {type(payload).__name__}")


def render_imu(segment: ImuSegment, split_sensors: bool, spec: PlotSpec = PlotSpec()) -> list[Image]:
    """One overlaid 6-trace figure, or accelerometer/gyroscope split in two."""
    channels = np.asarray(segment.channels)
    if channels.ndim != 2 or channels.shape[0] != 6:
        raise RejectedInputError("IMU segment must have 6 equal-length channels")
    _check_finite(channels)
    if not split_sensors:
        figsize, dpi = spec.resolve("imu_fall")
        with matplotlib.rc_context(_rc_for(spec)):
            fig = Figure(figsize=figsize, dpi=dpi)
            ax = fig.add_subplot()
            for row in channels:
                ax.plot(row)  # no legend: the model is not told which trace is which
            _finish(fig, ax, spec, "", "", "")
            return [_to_image(fig, spec, dpi, "imu")]
    figsize, dpi = spec.resolve("imu_activity")
    times = segment.times()
    images = []
    with matplotlib.rc_context(_rc_for(spec)):
        for title, rows in (("Accelerometer", channels[:3]), ("Gyroscope", channels[3:])):
            fig = Figure(figsize=figsize, dpi=dpi)
            ax = fig.add_subplot()
            for axis_name, row in zip(("x", "y", "z"), rows):
                ax.plot(times, row, label=axis_name)
            if spec.components == "all":
                ax.legend()
            ax.set_xlim(0, 15)
            _finish(fig, ax, spec, title, "Time (s)", "")
            images.append(_to_image(fig, spec, dpi, title.lower()))
    return images


def render_bars(values: Sequence[float], spec: PlotSpec = PlotSpec()) -> Image:
    """Daily training-load bar chart (day index on x)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or not 1 <= arr.size <= 60:
        raise RejectedInputError(f"expected 1-60 daily values, got {arr.shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise RejectedInputError("daily values must be finite and non-negative")
    figsize, dpi = spec.resolve("trimp_bars")
    with matplotlib.rc_context(_rc_for(spec)):
        fig = Figure(figsize=figsize, dpi=dpi)
        ax = fig.add_subplot()
        ax.bar(np.arange(1, arr.size + 1), arr)
        _finish(fig, ax, spec, "Daily training impulse", "Day", "TRIMP")
        return _to_image(fig, spec, dpi, "bars")


def render_box(
    groups: Sequence[tuple[str, Sequence[float]]],
    title: str,
    ylabel: str,
    spec: PlotSpec = PlotSpec(),
) -> Image:
    """Box plot for report figures (median, IQR box, 1.5 IQR whiskers)."""
    if not groups:
        raise RejectedInputError("nothing to plot")
    labels = [g[0] for g in groups]
    data = [np.asarray(g[1], dtype=np.float64) for g in groups]
    figsize, dpi = spec.figsize or (6.4, 4.8), spec.dpi or 100
    with matplotlib.rc_context(_rc_for(spec)):
        fig = Figure(figsize=figsize, dpi=dpi)
        ax = fig.add_subplot()
        ax.boxplot(data, tick_labels=labels, whis=1.5)
        ax.set_title(title)
        ax.set_ylabel(ylabel)
        ax.grid(True, axis="y")
        for tick in ax.get_xticklabels():
            tick.set_rotation(30)
            tick.set_ha("right")
        return _to_image(fig, spec, int(dpi), "boxplot")


def cache_path(cache_dir: str | Path, instance_id: str, spec: PlotSpec, index: int) -> Path:
    return Path(cache_dir) / instance_id / f"{spec.content_hash()}-{index}.png"


def render_task_cached(cache_dir: str | Path, instance: TaskInstance, spec: PlotSpec) -> list[Path]:
    """Render to the content-addressed PNG cache, skipping existing files."""
    paths = [cache_path(cache_dir, instance.instance_id, spec, i) for i in range(_image_count(instance))]
    if all(p.exists() for p in paths):
        return paths
    images = render_task(instance, spec)
    for path, image in zip(paths, images):
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(image.png_bytes)
        tmp.replace(path)
    return paths


def _image_count(instance: TaskInstance) -> int:
    return 5 if isinstance(instance.payload, DerivativeTask) else 1

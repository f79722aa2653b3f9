"""Synthetic task generation.

Five task families over sampled 1-D functions: identifying a functional
form, classifying the correlation of two lines, counting 2-D clusters, and
picking a function's first derivative out of four choices (mixed-class and
quadratic-scale variants).  Noise is injected into the function domain,
``y = f(x + noise)``, and the realized noise vector is kept on the series so
labels can be re-derived independently of the stored values.

All randomness flows through :mod:`plotbench.rng`; a task instance is a pure
function of its parameters and derived seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, GenerationFailureError, RejectedInputError
from .rng import Rng, derive_seed

FUNC_TYPES = ("linear", "quadratic", "cubic", "exponential", "periodic")

SLOPE_PAIRS = ((1, 2), (-1, 1), (5, -1), (-2, -5), (-3, 2), (2, 3))

MAIN_QUADRATIC_SCALES = (-10.0, -5.0, -1.0, 1.0, 5.0, 10.0)
CHOICE_QUADRATIC_SCALES = (-20.0, -15.0, -10.0, -5.0, -1.0, 1.0, 5.0, 10.0, 15.0, 20.0)
SHOT_QUADRATIC_SCALES = (-20.0, -15.0, -3.0, 3.0, 15.0, 20.0)

CLUSTER_RADIUS = 1.0
CLUSTER_MARGIN = 0.1
CLUSTER_MIN_SEPARATION = CLUSTER_RADIUS * 0.3
CLUSTER_MAX_ATTEMPTS = 10_000

_MAX_DOUBLE = float(np.finfo(np.float64).max)

SCHEMA_VERSION = 1


@dataclass
class Series:
    """One sampled function: equally spaced xs, ys, and the realized noise."""

    xs: np.ndarray
    ys: np.ndarray
    func_type: str
    noise_level: float
    num_points: int
    seed: int
    noise: np.ndarray
    x_range: tuple[float, float]
    clamped: int = 0
    scale: Optional[float] = None  # set for quadratic-scale series (y = scale * x^2)


@dataclass
class CorrelationPair:
    xs: np.ndarray
    y1s: np.ndarray
    y2s: np.ndarray
    slopes: tuple[int, int]
    label: str
    noise_level: float
    num_points: int
    seed: int
    y1_noise: np.ndarray
    y2_noise: np.ndarray


@dataclass
class ClusterSet:
    points: np.ndarray  # (n, 2)
    cluster_count: int
    cluster_points: int
    cluster_std: float
    centers: np.ndarray  # (cluster_count, 2)
    point_labels: np.ndarray  # generating center index per point
    seed: int


@dataclass
class DerivativeTask:
    question: Series
    choices: list[Series]
    answer_index: int
    variant: str  # "mixed_class" | "quadratic_scale"
    quadratic_scale: Optional[float] = None
    choice_sources: list = field(default_factory=list)


@dataclass
class TaskInstance:
    """One question: payload plus independently re-derivable ground truth."""

    task_kind: str
    payload: object
    ground_truth: object
    params: dict
    instance_id: str


def _closed_form(func_type: str, u: np.ndarray) -> np.ndarray:
    if func_type == "exponential":
        return np.exp(u)
    if func_type == "periodic":
        return np.sin(u)
    if func_type == "quadratic":
        return u**2
    if func_type == "linear":
        return u.copy()
    if func_type == "cubic":
        return u**3
    raise RejectedInputError(f"Invalid function type: {func_type!r}")


def _derivative_form(func_type: str, u: np.ndarray, noise: np.ndarray) -> np.ndarray:
    if func_type == "exponential":
        return np.exp(u)
    if func_type == "periodic":
        return np.cos(u)
    if func_type == "quadratic":
        return 2.0 * u
    if func_type == "linear":
        # derivative of the noiseless line is 1; the noise vector is kept so
        # the choice renders with the same roughness as the others
        return np.ones(len(u)) + noise
    if func_type == "cubic":
        return 3.0 * u**2
    raise RejectedInputError(f"Invalid function type: {func_type!r}")


def _clamp_finite(values: np.ndarray) -> tuple[np.ndarray, int]:
    """Clamp +/-inf to the double range so archives stay serializable."""
    bad = ~np.isfinite(values)
    n = int(bad.sum())
    if n:
        values = np.clip(np.nan_to_num(values, posinf=_MAX_DOUBLE, neginf=-_MAX_DOUBLE), -_MAX_DOUBLE, _MAX_DOUBLE)
    return values, n


def _check_series_args(num_points: int, noise_level: float, x_range: tuple[float, float]) -> None:
    if num_points < 2:
        raise RejectedInputError(f"num_points must be >= 2, got {num_points}")
    if noise_level < 0:
        raise RejectedInputError(f"noise_level must be >= 0, got {noise_level}")
    if not x_range[0] < x_range[1]:
        raise RejectedInputError(f"x_range must be increasing, got {x_range}")


def gen_function(
    seed: int,
    func_type: str,
    x_range: tuple[float, float] = (-10.0, 10.0),
    num_points: int = 50,
    noise_level: float = 0.0,
) -> Series:
    """Sample ``y = f(x + noise)`` on an equally spaced grid over ``x_range``."""
    _check_series_args(num_points, noise_level, x_range)
    if func_type not in FUNC_TYPES:
        raise RejectedInputError(f"Invalid function type: {func_type!r}")
    xs = np.linspace(x_range[0], x_range[1], num_points)
    noise = Rng(seed).normals(num_points, std=noise_level)
    with np.errstate(over="ignore"):
        ys = _closed_form(func_type, xs + noise)
    ys, clamped = _clamp_finite(ys)
    return Series(
        xs=xs,
        ys=ys,
        func_type=func_type,
        noise_level=noise_level,
        num_points=num_points,
        seed=seed,
        noise=noise,
        x_range=tuple(x_range),
        clamped=clamped,
    )


def pearson_sign(y1: Sequence[float], y2: Sequence[float]) -> str:
    """Sign of the Pearson correlation: "positive" or "negative"."""
    a = np.asarray(y1, dtype=np.float64)
    b = np.asarray(y2, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise RejectedInputError("inputs must be equal-length 1-D vectors with >= 2 elements")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DegenerateInputError("correlation sign is undefined for a constant vector")
    cov = float(np.dot(a - a.mean(), b - b.mean()))
    if cov == 0.0:
        raise DegenerateInputError("correlation sign is undefined for exactly uncorrelated vectors")
    return "positive" if cov > 0 else "negative"


def gen_correlation_pair(
    seed: int,
    slope_pair: tuple[int, int],
    x_range: tuple[float, float] = (-10.0, 10.0),
    num_points: int = 50,
    noise_level: float = 0.0,
) -> CorrelationPair:
    """Two noisy lines ``y_i = m_i * (x + noise_i)``; label from the realized data."""
    _check_series_args(num_points, noise_level, x_range)
    if tuple(slope_pair) not in SLOPE_PAIRS:
        raise RejectedInputError(f"slope pair {slope_pair} is not one of {SLOPE_PAIRS}")
    rng = Rng(seed)
    xs = np.linspace(x_range[0], x_range[1], num_points)
    y1_noise = rng.normals(num_points, std=noise_level)
    y2_noise = rng.normals(num_points, std=noise_level)
    y1 = slope_pair[0] * (xs + y1_noise)
    y2 = slope_pair[1] * (xs + y2_noise)
    label = pearson_sign(y1, y2)
    return CorrelationPair(
        xs=xs,
        y1s=y1,
        y2s=y2,
        slopes=tuple(slope_pair),
        label=label,
        noise_level=noise_level,
        num_points=num_points,
        seed=seed,
        y1_noise=y1_noise,
        y2_noise=y2_noise,
    )


def _has_close_centers(centers: np.ndarray, threshold: float) -> bool:
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    iu = np.triu_indices(len(centers), k=1)
    return bool(np.any(dist[iu] < threshold))


def gen_clusters(
    seed: int,
    cluster_points: int,
    cluster_count: int,
    cluster_std: float,
) -> ClusterSet:
    """Isotropic Gaussian blobs around rejection-sampled, well-separated centers."""
    if not 1 <= cluster_count <= 9:
        raise RejectedInputError(f"cluster_count must be in [1, 9], got {cluster_count}")
    if cluster_std <= 0:
        raise RejectedInputError(f"cluster_std must be positive, got {cluster_std}")
    if cluster_points < 1:
        raise RejectedInputError(f"cluster_points must be >= 1, got {cluster_points}")
    rng = Rng(seed)
    lo = -CLUSTER_RADIUS + CLUSTER_MARGIN
    hi = CLUSTER_RADIUS - CLUSTER_MARGIN
    centers = None
    for _ in range(CLUSTER_MAX_ATTEMPTS):
        cx = rng.uniform(lo, hi, cluster_count)
        cy = rng.uniform(lo, hi, cluster_count)
        cand = np.column_stack([cx, cy])
        if cluster_count == 1 or not _has_close_centers(cand, CLUSTER_MIN_SEPARATION):
            centers = cand
            break
    if centers is None:
        raise GenerationFailureError("Could not find well separated centers")
    points = np.empty((cluster_count * cluster_points, 2))
    labels = np.empty(cluster_count * cluster_points, dtype=np.int64)
    for k in range(cluster_count):
        block = rng.normals(cluster_points * 2, std=cluster_std).reshape(cluster_points, 2)
        points[k * cluster_points : (k + 1) * cluster_points] = centers[k] + block
        labels[k * cluster_points : (k + 1) * cluster_points] = k
    return ClusterSet(
        points=points,
        cluster_count=cluster_count,
        cluster_points=cluster_points,
        cluster_std=cluster_std,
        centers=centers,
        point_labels=labels,
        seed=seed,
    )


def _gen_question_with_derivative(
    rng: Rng,
    func_type: str,
    x_range: tuple[float, float],
    num_points: int,
    noise_level: float,
    scale: Optional[float] = None,
) -> tuple[Series, Series]:
    """Question series and its derivative series sharing one noise vector."""
    xs = np.linspace(x_range[0], x_range[1], num_points)
    noise = rng.normals(num_points, std=noise_level)
    u = xs + noise
    with np.errstate(over="ignore"):
        if scale is None:
            ys = _closed_form(func_type, u)
            dys = _derivative_form(func_type, u, noise)
        else:
            ys = scale * u**2
            dys = 2.0 * scale * u
    ys, clamped_q = _clamp_finite(ys)
    dys, clamped_d = _clamp_finite(dys)
    common = dict(noise_level=noise_level, num_points=num_points, seed=rng.seed, noise=noise, x_range=tuple(x_range))
    question = Series(xs=xs, ys=ys, func_type=func_type, clamped=clamped_q, scale=scale, **common)
    deriv = Series(xs=xs, ys=dys, func_type=func_type, clamped=clamped_d, scale=scale, **common)
    return question, deriv


def gen_derivative_task(
    seed: int,
    variant: str,
    question_params: dict,
    choice_scale_set: Sequence[float] = CHOICE_QUADRATIC_SCALES,
) -> DerivativeTask:
    """Build a 4-choice derivative identification task.

    ``mixed_class``: the question is one of the five function classes and each
    choice is the derivative of a distinct class, exactly one matching the
    question.  ``quadratic_scale``: the question is ``A * x^2`` and every
    choice is a line ``2 * A' * x``; distractor scales come from
    ``choice_scale_set`` minus the question's scale (the correct choice always
    uses the question's own scale, so shot pools may use scales outside the
    main grid).
    """
    x_range = tuple(question_params.get("x_range", (-10.0, 10.0)))
    num_points = int(question_params["num_points"])
    noise_level = float(question_params["noise_level"])
    _check_series_args(num_points, noise_level, x_range)
    rng = Rng(seed)

    if variant == "mixed_class":
        func_type = question_params["func_type"]
        if func_type not in FUNC_TYPES:
            raise RejectedInputError(f"Invalid function type: {func_type!r}")
        question, correct = _gen_question_with_derivative(rng, func_type, x_range, num_points, noise_level)
        others = [f for f in FUNC_TYPES if f != func_type]
        distractor_types = rng.choice(others, 3, replace=False)
        distractors = []
        for ft in distractor_types:
            _, dseries = _gen_question_with_derivative(rng, ft, x_range, num_points, noise_level)
            distractors.append(dseries)
        sources = [func_type] + list(distractor_types)
        quadratic_scale = None
    elif variant == "quadratic_scale":
        scale = float(question_params["quadratic_scale"])
        if scale == 0.0:
            raise RejectedInputError("quadratic_scale must be nonzero")
        pool = [float(s) for s in choice_scale_set if float(s) != scale]
        if len(pool) < 3:
            raise RejectedInputError("choice_scale_set too small to draw 3 distinct distractors")
        question, correct = _gen_question_with_derivative(
            rng, "quadratic", x_range, num_points, noise_level, scale=scale
        )
        distractor_scales = rng.choice(pool, 3, replace=False)
        distractors = []
        for s in distractor_scales:
            _, dseries = _gen_question_with_derivative(
                rng, "quadratic", x_range, num_points, noise_level, scale=s
            )
            # rendered/encoded choices are lines; tag them as such
            dseries.func_type = "linear"
            distractors.append(dseries)
        correct.func_type = "linear"
        sources = [scale] + [float(s) for s in distractor_scales]
        quadratic_scale = scale
    else:
        raise RejectedInputError(f"unknown derivative variant: {variant!r}")

    answer_index = int(rng.integers(4)[0])
    choices = distractors[:]
    choices.insert(answer_index, correct)
    ordered_sources = sources[1:]
    ordered_sources.insert(answer_index, sources[0])
    return DerivativeTask(
        question=question,
        choices=choices,
        answer_index=answer_index,
        variant=variant,
        quadratic_scale=quadratic_scale,
        choice_sources=ordered_sources,
    )


# --- task matrices -----------------------------------------------------------

FUNCTION_ID_GRID = {
    "repeats": 5,
    "num_points": (50, 500, 1000, 2500),
    "noise_levels": (0.0, 0.5, 1.0, 2.0, 5.0),
    "func_types": FUNC_TYPES,
}

CORRELATION_GRID = {
    "repeats": 1,
    "num_points": (50, 500, 1000, 2500),
    "noise_levels": (0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0),
    "slope_pairs": SLOPE_PAIRS,
}

CLUSTER_GRID = {
    "repeats": 5,
    "cluster_stds": (0.025, 0.05, 0.075),
    "cluster_points": (5, 50, 100),
    "cluster_counts": tuple(range(1, 10)),
}

DERIVATIVE_GRID = {
    "repeats": 5,
    "num_points": (50, 500, 1000, 2000),
    "noise_levels": (0.0, 0.5, 1.0, 2.0, 5.0),
    "func_types": FUNC_TYPES,
}

QUADRATIC_DERIVATIVE_GRID = {
    "repeats": 5,
    "num_points": (50, 500, 1000, 2000),
    "noise_levels": (0.0, 0.5, 1.0, 2.0, 5.0),
    "scales": MAIN_QUADRATIC_SCALES,
}

PAPER_GRIDS = {
    "function_id": FUNCTION_ID_GRID,
    "correlation": CORRELATION_GRID,
    "cluster_count": CLUSTER_GRID,
    "derivative_id": DERIVATIVE_GRID,
    "quadratic_derivative_id": QUADRATIC_DERIVATIVE_GRID,
}

TASK_KINDS = tuple(PAPER_GRIDS)


def instance_id_for(task_kind: str, params: dict) -> str:
    payload = json.dumps(
        {"schema": SCHEMA_VERSION, "task_kind": task_kind, "params": params},
        sort_keys=True,
        separators=(",", ":"),
        default=str,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _require_axes(grid: dict, keys: Sequence[str]) -> None:
    for key in keys:
        if not grid.get(key):
            raise RejectedInputError(f"grid axis {key!r} is empty")
    if int(grid.get("repeats", 0)) < 1:
        raise RejectedInputError("grid axis 'repeats' is empty")


def instance_from_params(task_kind: str, params: dict) -> TaskInstance:
    """Regenerate one instance from its stored parameter record.

    The params dict is exactly what :func:`build_task_matrix` stores, so any
    cell can be rebuilt in isolation (parallel rendering, partial re-runs,
    audits) and will hash to the same instance_id.
    """
    seed = params["seed"]
    if task_kind == "function_id":
        payload = gen_function(
            seed,
            params["func_type"],
            num_points=int(params["num_points"]),
            noise_level=float(params["noise_level"]),
        )
        truth = params["func_type"]
    elif task_kind == "correlation":
        payload = gen_correlation_pair(
            seed,
            tuple(params["slopes"]),
            num_points=int(params["num_points"]),
            noise_level=float(params["noise_level"]),
        )
        truth = payload.label
    elif task_kind == "cluster_count":
        payload = gen_clusters(
            seed,
            int(params["cluster_points"]),
            int(params["cluster_count"]),
            float(params["cluster_std"]),
        )
        truth = int(params["cluster_count"])
    elif task_kind == "derivative_id":
        payload = gen_derivative_task(
            seed,
            "mixed_class",
            {
                "func_type": params["func_type"],
                "num_points": int(params["num_points"]),
                "noise_level": float(params["noise_level"]),
            },
        )
        truth = payload.answer_index
    elif task_kind == "quadratic_derivative_id":
        payload = gen_derivative_task(
            seed,
            "quadratic_scale",
            {
                "quadratic_scale": float(params["quadratic_scale"]),
                "num_points": int(params["num_points"]),
                "noise_level": float(params["noise_level"]),
            },
            choice_scale_set=tuple(params.get("choice_scales", CHOICE_QUADRATIC_SCALES)),
        )
        truth = payload.answer_index
    else:
        raise RejectedInputError(f"unknown task kind: {task_kind!r}")
    return TaskInstance(
        task_kind=task_kind,
        payload=payload,
        ground_truth=truth,
        params=params,
        instance_id=instance_id_for(task_kind, params),
    )


def build_task_matrix(task_kind: str, master_seed: int, grid: Optional[dict] = None) -> list[TaskInstance]:
    """Enumerate a task grid into deterministic, seeded task instances.

    Cell order is the cartesian product of the grid axes in their declared
    order with the repeat index innermost; the per-cell seed is derived from
    ``(master_seed, task_kind, cell values)`` so any cell can be regenerated
    alone.
    """
    if task_kind not in PAPER_GRIDS:
        raise RejectedInputError(f"unknown task kind: {task_kind!r}")
    grid = dict(PAPER_GRIDS[task_kind]) if grid is None else dict(grid)
    instances: list[TaskInstance] = []

    if task_kind == "function_id":
        _require_axes(grid, ("num_points", "noise_levels", "func_types"))
        for n, nl, ft, rep in product(
            grid["num_points"], grid["noise_levels"], grid["func_types"], range(grid["repeats"])
        ):
            params = {
                "num_points": int(n),
                "noise_level": float(nl),
                "func_type": ft,
                "repeat": rep,
                "master_seed": master_seed,
            }
            seed = derive_seed(master_seed, task_kind, n, nl, ft, rep)
            params["seed"] = seed
            series = gen_function(seed, ft, num_points=int(n), noise_level=float(nl))
            instances.append(
                TaskInstance(
                    task_kind=task_kind,
                    payload=series,
                    ground_truth=ft,
                    params=params,
                    instance_id=instance_id_for(task_kind, params),
                )
            )
    elif task_kind == "correlation":
        _require_axes(grid, ("num_points", "noise_levels", "slope_pairs"))
        for n, nl, slopes, rep in product(
            grid["num_points"], grid["noise_levels"], grid["slope_pairs"], range(grid["repeats"])
        ):
            params = {
                "num_points": int(n),
                "noise_level": float(nl),
                "slopes": list(slopes),
                "repeat": rep,
                "master_seed": master_seed,
            }
            seed = derive_seed(master_seed, task_kind, n, nl, slopes, rep)
            params["seed"] = seed
            pair = gen_correlation_pair(seed, tuple(slopes), num_points=int(n), noise_level=float(nl))
            instances.append(
                TaskInstance(
                    task_kind=task_kind,
                    payload=pair,
                    ground_truth=pair.label,
                    params=params,
                    instance_id=instance_id_for(task_kind, params),
                )
            )
    elif task_kind == "cluster_count":
        _require_axes(grid, ("cluster_stds", "cluster_points", "cluster_counts"))
        for std, pts, count, rep in product(
            grid["cluster_stds"], grid["cluster_points"], grid["cluster_counts"], range(grid["repeats"])
        ):
            params = {
                "cluster_std": float(std),
                "cluster_points": int(pts),
                "cluster_count": int(count),
                "repeat": rep,
                "master_seed": master_seed,
            }
            seed = derive_seed(master_seed, task_kind, std, pts, count, rep)
            params["seed"] = seed
            clusters = gen_clusters(seed, int(pts), int(count), float(std))
            instances.append(
                TaskInstance(
                    task_kind=task_kind,
                    payload=clusters,
                    ground_truth=int(count),
                    params=params,
                    instance_id=instance_id_for(task_kind, params),
                )
            )
    elif task_kind == "derivative_id":
        _require_axes(grid, ("num_points", "noise_levels", "func_types"))
        for n, nl, ft, rep in product(
            grid["num_points"], grid["noise_levels"], grid["func_types"], range(grid["repeats"])
        ):
            params = {
                "num_points": int(n),
                "noise_level": float(nl),
                "func_type": ft,
                "repeat": rep,
                "master_seed": master_seed,
            }
            seed = derive_seed(master_seed, task_kind, n, nl, ft, rep)
            params["seed"] = seed
            task = gen_derivative_task(
                seed, "mixed_class", {"func_type": ft, "num_points": int(n), "noise_level": float(nl)}
            )
            instances.append(
                TaskInstance(
                    task_kind=task_kind,
                    payload=task,
                    ground_truth=task.answer_index,
                    params=params,
                    instance_id=instance_id_for(task_kind, params),
                )
            )
    else:  # quadratic_derivative_id
        _require_axes(grid, ("num_points", "noise_levels", "scales"))
        choice_scales = tuple(grid.get("choice_scales", CHOICE_QUADRATIC_SCALES))
        for n, nl, scale, rep in product(
            grid["num_points"], grid["noise_levels"], grid["scales"], range(grid["repeats"])
        ):
            params = {
                "num_points": int(n),
                "noise_level": float(nl),
                "quadratic_scale": float(scale),
                "repeat": rep,
                "master_seed": master_seed,
            }
            seed = derive_seed(master_seed, task_kind, n, nl, scale, rep)
            params["seed"] = seed
            task = gen_derivative_task(
                seed,
                "quadratic_scale",
                {"quadratic_scale": float(scale), "num_points": int(n), "noise_level": float(nl)},
                choice_scale_set=choice_scales,
            )
            instances.append(
                TaskInstance(
                    task_kind=task_kind,
                    payload=task,
                    ground_truth=task.answer_index,
                    params=params,
                    instance_id=instance_id_for(task_kind, params),
                )
            )
    return instances


def rederive_ground_truth(instance: TaskInstance):
    """Recompute the label from the payload alone (audit path).

    Functions are re-identified by applying every closed form to the recorded
    noise; correlation recomputes the Pearson sign; clusters count distinct
    generating centers; derivative tasks look up which choice source matches
    the question.
    """
    payload = instance.payload
    if instance.task_kind == "function_id":
        u = payload.xs + payload.noise
        matches = []
        with np.errstate(over="ignore"):
            for ft in FUNC_TYPES:
                expected, _ = _clamp_finite(_closed_form(ft, u))
                if np.array_equal(expected, payload.ys):
                    matches.append(ft)
        if len(matches) != 1:
            raise DegenerateInputError(f"series matches {len(matches)} closed forms")
        return matches[0]
    if instance.task_kind == "correlation":
        return pearson_sign(payload.y1s, payload.y2s)
    if instance.task_kind == "cluster_count":
        return int(len(np.unique(payload.point_labels)))
    if instance.task_kind in ("derivative_id", "quadratic_derivative_id"):
        if payload.variant == "mixed_class":
            target = payload.question.func_type
        else:
            target = payload.quadratic_scale
        hits = [i for i, src in enumerate(payload.choice_sources) if src == target]
        if len(hits) != 1:
            raise DegenerateInputError(f"answer bookkeeping matches {len(hits)} choices")
        return hits[0]
    raise RejectedInputError(f"unknown task kind: {instance.task_kind!r}")


# --- archive serialization ---------------------------------------------------


def _series_to_dict(s: Series) -> dict:
    return {
        "xs": s.xs.tolist(),
        "ys": s.ys.tolist(),
        "func_type": s.func_type,
        "noise_level": s.noise_level,
        "num_points": s.num_points,
        "seed": s.seed,
        "noise": s.noise.tolist(),
        "x_range": list(s.x_range),
        "clamped": s.clamped,
        "scale": s.scale,
    }


def _series_from_dict(d: dict) -> Series:
    return Series(
        xs=np.asarray(d["xs"]),
        ys=np.asarray(d["ys"]),
        func_type=d["func_type"],
        noise_level=d["noise_level"],
        num_points=d["num_points"],
        seed=d["seed"],
        noise=np.asarray(d["noise"]),
        x_range=tuple(d["x_range"]),
        clamped=d.get("clamped", 0),
        scale=d.get("scale"),
    )


def instance_to_dict(instance: TaskInstance) -> dict:
    p = instance.payload
    if instance.task_kind == "function_id":
        payload = {"series": _series_to_dict(p)}
    elif instance.task_kind == "correlation":
        payload = {
            "xs": p.xs.tolist(),
            "y1s": p.y1s.tolist(),
            "y2s": p.y2s.tolist(),
            "slopes": list(p.slopes),
            "label": p.label,
            "noise_level": p.noise_level,
            "num_points": p.num_points,
            "seed": p.seed,
            "y1_noise": p.y1_noise.tolist(),
            "y2_noise": p.y2_noise.tolist(),
        }
    elif instance.task_kind == "cluster_count":
        payload = {
            "points": p.points.tolist(),
            "cluster_count": p.cluster_count,
            "cluster_points": p.cluster_points,
            "cluster_std": p.cluster_std,
            "centers": p.centers.tolist(),
            "point_labels": p.point_labels.tolist(),
            "seed": p.seed,
        }
    else:
        payload = {
            "question": _series_to_dict(p.question),
            "choices": [_series_to_dict(c) for c in p.choices],
            "answer_index": p.answer_index,
            "variant": p.variant,
            "quadratic_scale": p.quadratic_scale,
            "choice_sources": p.choice_sources,
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "instance_id": instance.instance_id,
        "task_kind": instance.task_kind,
        "params": instance.params,
        "ground_truth": instance.ground_truth,
        "payload": payload,
    }


def instance_from_dict(d: dict) -> TaskInstance:
    kind = d["task_kind"]
    raw = d["payload"]
    if kind == "function_id":
        payload = _series_from_dict(raw["series"])
    elif kind == "correlation":
        payload = CorrelationPair(
            xs=np.asarray(raw["xs"]),
            y1s=np.asarray(raw["y1s"]),
            y2s=np.asarray(raw["y2s"]),
            slopes=tuple(raw["slopes"]),
            label=raw["label"],
            noise_level=raw["noise_level"],
            num_points=raw["num_points"],
            seed=raw["seed"],
            y1_noise=np.asarray(raw["y1_noise"]),
            y2_noise=np.asarray(raw["y2_noise"]),
        )
    elif kind == "cluster_count":
        payload = ClusterSet(
            points=np.asarray(raw["points"]),
            cluster_count=raw["cluster_count"],
            cluster_points=raw["cluster_points"],
            cluster_std=raw["cluster_std"],
            centers=np.asarray(raw["centers"]),
            point_labels=np.asarray(raw["point_labels"], dtype=np.int64),
            seed=raw["seed"],
        )
    else:
        payload = DerivativeTask(
            question=_series_from_dict(raw["question"]),
            choices=[_series_from_dict(c) for c in raw["choices"]],
            answer_index=raw["answer_index"],
            variant=raw["variant"],
            quadratic_scale=raw.get("quadratic_scale"),
            choice_sources=raw.get("choice_sources", []),
        )
    return TaskInstance(
        task_kind=kind,
        payload=payload,
        ground_truth=d["ground_truth"],
        params=d["params"],
        instance_id=d["instance_id"],
    )

"""Metrics and statistical summaries.

Implements the harness's evaluation row type plus the statistics used in
reports: accuracy / MAE / macro-F1, bootstrap resampling (1,000 replicates by
default), difference distributions over random pairs, a two-sided Wilcoxon
signed-rank test (exact by enumeration up to n=25, normal approximation with
tie and continuity corrections above), Bonferroni adjustment, and
median/IQR/CI summaries.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, RejectedInputError
from .rng import Rng, derive_seed

EXACT_WILCOXON_MAX_N = 25

PARSE_OK = "ok"
PARSE_FAILURE = "parse_failure"


@dataclass
class EvalRecord:
    """One scored model answer; the row type of every statistic."""

    instance_id: str
    task_kind: str
    modality: str
    model: str
    shots: int
    predicted: object  # None iff parse_status != ok
    ground_truth: object
    parse_status: str
    params: dict = field(default_factory=dict)
    template_id: str = ""
    config_hash: str = ""
    note: str = ""  # backend error text for failed calls, empty otherwise

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "task_kind": self.task_kind,
            "modality": self.modality,
            "model": self.model,
            "shots": self.shots,
            "predicted": self.predicted,
            "ground_truth": self.ground_truth,
            "parse_status": self.parse_status,
            "params": self.params,
            "template_id": self.template_id,
            "config_hash": self.config_hash,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        return cls(**d)


@dataclass
class MetricSummary:
    kind: str
    point: Optional[float]
    median: float
    q1: float
    q3: float
    ci_lo: float
    ci_hi: float
    n: int
    whisker_lo: float
    whisker_hi: float


def is_correct(record: EvalRecord) -> bool:
    return record.parse_status == PARSE_OK and record.predicted == record.ground_truth


def _check_records(records: Sequence[EvalRecord]) -> None:
    if not records:
        raise RejectedInputError("no records to score")


def accuracy(records: Sequence[EvalRecord]) -> float:
    _check_records(records)
    return sum(is_correct(r) for r in records) / len(records)


def mae(records: Sequence[EvalRecord]) -> float:
    """Mean absolute error over parse-ok records; failures are excluded."""
    _check_records(records)
    errors = [abs(float(r.predicted) - float(r.ground_truth)) for r in records if r.parse_status == PARSE_OK]
    if not errors:
        raise DegenerateInputError("MAE is undefined: no parse-ok records")
    return float(np.mean(errors))


def macro_f1_detail(records: Sequence[EvalRecord]) -> tuple[float, dict, list]:
    """Macro-F1 plus per-class scores and prediction-only classes excluded."""
    _check_records(records)
    truths = [r.ground_truth for r in records]
    preds = [r.predicted if r.parse_status == PARSE_OK else None for r in records]
    classes = sorted({str(t) for t in truths})
    per_class = {}
    for c in classes:
        tp = sum(1 for t, p in zip(truths, preds) if str(t) == c and p is not None and str(p) == c)
        fp = sum(1 for t, p in zip(truths, preds) if str(t) != c and p is not None and str(p) == c)
        fn = sum(1 for t, p in zip(truths, preds) if str(t) == c and (p is None or str(p) != c))
        denom = 2 * tp + fp + fn
        per_class[c] = (2 * tp / denom) if denom else 0.0
    excluded = sorted({str(p) for p in preds if p is not None} - set(classes))
    return float(np.mean(list(per_class.values()))), per_class, excluded


def macro_f1(records: Sequence[EvalRecord]) -> float:
    return macro_f1_detail(records)[0]


_METRICS = {"accuracy": accuracy, "mae": mae, "macro_f1": macro_f1}


def compute_metric(kind: str, records: Sequence[EvalRecord]) -> float:
    if kind not in _METRICS:
        raise RejectedInputError(f"unknown metric kind: {kind!r}")
    return _METRICS[kind](records)


def bootstrap_distribution(
    records: Sequence[EvalRecord],
    kind: str,
    replicates: int = 1000,
    seed: int = 0,
) -> np.ndarray:
    """Metric recomputed over ``replicates`` resamples with replacement.

    MAE resamples the parse-ok subset (failures are reported, not penalized).
    """
    _check_records(records)
    rng = Rng(derive_seed(seed, "bootstrap", kind, len(records)))
    if kind == "accuracy":
        vals = np.array([1.0 if is_correct(r) else 0.0 for r in records])
    elif kind == "mae":
        vals = np.array(
            [abs(float(r.predicted) - float(r.ground_truth)) for r in records if r.parse_status == PARSE_OK]
        )
        if vals.size == 0:
            raise DegenerateInputError("MAE bootstrap is undefined: no parse-ok records")
    elif kind == "macro_f1":
        return _bootstrap_macro_f1(records, replicates, rng)
    else:
        raise RejectedInputError(f"unknown metric kind: {kind!r}")
    n = vals.size
    out = np.empty(replicates)
    for i in range(replicates):
        out[i] = vals[rng.integers(n, count=n)].mean()
    return out


def _bootstrap_macro_f1(records: Sequence[EvalRecord], replicates: int, rng: Rng) -> np.ndarray:
    classes = sorted({str(r.ground_truth) for r in records})
    index = {c: k for k, c in enumerate(classes)}
    nc = len(classes)
    t = np.array([index[str(r.ground_truth)] for r in records])
    # predictions outside the truth classes (or parse failures) get a sink code
    p = np.array(
        [
            index.get(str(r.predicted), nc) if r.parse_status == PARSE_OK else nc
            for r in records
        ]
    )
    n = len(records)
    out = np.empty(replicates)
    for i in range(replicates):
        idx = rng.integers(n, count=n)
        ti, pi = t[idx], p[idx]
        f1s = []
        for c in range(nc):
            support = ti == c
            if not support.any():
                continue  # resample lost the class entirely
            tp = int(np.sum(support & (pi == c)))
            fp = int(np.sum(~support & (pi == c)))
            fn = int(np.sum(support & (pi != c)))
            denom = 2 * tp + fp + fn
            f1s.append((2 * tp / denom) if denom else 0.0)
        out[i] = float(np.mean(f1s)) if f1s else 0.0
    return out


def paired_diff_distribution(
    dist_a: Sequence[float],
    dist_b: Sequence[float],
    n_pairs: int = 1000,
    seed: int = 0,
) -> np.ndarray:
    """``n_pairs`` draws of ``a - b`` over random pairs of the two distributions.

    Each distribution's index stream is keyed by its own content, so swapping
    the argument order negates every difference exactly (the caller orients
    the sign so that positive favors the plot modality).
    """
    a = np.asarray(dist_a, dtype=np.float64)
    b = np.asarray(dist_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise RejectedInputError("both distributions must be non-empty")

    def _stream(arr: np.ndarray) -> Rng:
        digest = hashlib.sha256(arr.tobytes()).hexdigest()
        return Rng(derive_seed(seed, "paired-diff", digest))

    ia = _stream(a).integers(a.size, count=n_pairs)
    ib = _stream(b).integers(b.size, count=n_pairs)
    return a[ia] - b[ib]


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _exact_wplus_counts(doubled_ranks: Sequence[int]) -> np.ndarray:
    """Counts of each achievable doubled W+ over all sign assignments."""
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Returns ``(W+, p)`` where ``W+`` is the positive-rank sum.  Zero
    differences are dropped; tied magnitudes get mid-ranks.  The p-value is
    exact (``2 * min(tail)`` over the sign-flip distribution conditional on
    the observed ranks) for effective n <= 25, else a normal approximation
    with continuity and tie corrections.
    """
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise RejectedInputError("samples must be equal-length 1-D vectors")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise DegenerateInputError("all paired differences are zero; test undefined")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_WILCOXON_MAX_N:
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _exact_wplus_counts(doubled)
        total = counts.sum()
        w2 = int(round(2 * w_plus))
        p_le = counts[: w2 + 1].sum() / total
        p_ge = counts[w2:].sum() / total
        p = min(1.0, 2.0 * min(p_le, p_ge))
        return w_plus, float(p)
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts)) / 48.0
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if sigma2 <= 0:
        raise DegenerateInputError("zero variance under the null (all ranks tied away)")
    delta = w_plus - mu
    if delta == 0:
        return w_plus, 1.0
    z = (delta - 0.5 * math.copysign(1.0, delta)) / math.sqrt(sigma2)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return w_plus, min(1.0, p)


def bonferroni_adjust(p_values: Sequence[float]) -> list[float]:
    """``p -> min(1, m * p)`` with m the block size."""
    ps = list(p_values)
    for p in ps:
        if not 0 <= p <= 1:
            raise RejectedInputError(f"p-value out of range: {p}")
    m = len(ps)
    return [min(1.0, m * p) for p in ps]


def summarize(dist: Sequence[float], kind: str = "", point: Optional[float] = None) -> MetricSummary:
    """Median, linear-interpolation quartiles, mean +/- 1.96 SEM, 1.5 IQR fences."""
    arr = np.asarray(dist, dtype=np.float64)
    if arr.size == 0:
        raise RejectedInputError("cannot summarize an empty distribution")
    q1, med, q3 = (float(q) for q in np.quantile(arr, [0.25, 0.5, 0.75]))
    mean = float(arr.mean())
    sem = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    iqr = q3 - q1
    return MetricSummary(
        kind=kind,
        point=point,
        median=med,
        q1=q1,
        q3=q3,
        ci_lo=mean - 1.96 * sem,
        ci_hi=mean + 1.96 * sem,
        n=int(arr.size),
        whisker_lo=q1 - 1.5 * iqr,
        whisker_hi=q3 + 1.5 * iqr,
    )

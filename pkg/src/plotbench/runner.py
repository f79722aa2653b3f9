"""Experiment orchestration.

Drives the full pipeline from a YAML config: generate (or load) instances,
render both modalities into a content-addressed cache, prompt the configured
backends, parse answers into evaluation records, and emit the report
(summary and comparison CSVs, per-parameter breakdowns, box-plot figures).

Every run is deterministic for a fixed (config, master seed): records.jsonl
and all report files are byte-identical across cold runs, and a warm rerun
is served entirely from the response cache.  Output files embed the config
hash; an output directory never mixes configs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import evalstats, imupipe, modelgw, plotrender, promptkit, synthgen, tscodec
from .errors import ConfigurationError, DegenerateInputError
from .evalstats import EvalRecord
from .modelgw import Gateway, ModelConfig, PricingTable, make_backend
from .plotrender import Image, PlotSpec
from .promptkit import (
    ChoiceSchema,
    ClassSchema,
    IntRangeSchema,
    Rendering,
    Shot,
    ShotCandidate,
    assemble_fewshots,
    build_prompt,
    build_quadratic_shot_instances,
    quadratic_reasoning_trace,
)
from .rng import derive_seed
from .synthgen import TaskInstance, instance_from_params
from .tscodec import CodecSpec, encode_series

SYNTHETIC_TASKS = synthgen.TASK_KINDS
REALWORLD_TASKS = ("imu_fall", "imu_activity", "readiness")
ALL_TASKS = SYNTHETIC_TASKS + REALWORLD_TASKS

TASK_METRICS = {
    "function_id": "accuracy",
    "correlation": "accuracy",
    "cluster_count": "mae",
    "derivative_id": "accuracy",
    "quadratic_derivative_id": "accuracy",
    "imu_fall": "macro_f1",
    "imu_activity": "macro_f1",
    "readiness": "macro_f1",
}

# grid axes reported in the per-parameter breakdown tables
TASK_BREAKDOWN_AXES = {
    "function_id": ("num_points", "noise_level", "func_type"),
    "correlation": ("num_points", "noise_level", "slopes"),
    "cluster_count": ("cluster_points", "cluster_std", "cluster_count"),
    "derivative_id": ("num_points", "noise_level", "func_type"),
    "quadratic_derivative_id": ("num_points", "noise_level", "quadratic_scale"),
}

_NON_CELL_PARAMS = ("repeat", "seed", "master_seed", "role")

BOOTSTRAP_REPLICATES = 1000


# --- configuration -----------------------------------------------------------


def default_config() -> dict:
    return {
        "master_seed": 0,
        "out_dir": "runs/experiment",
        "tasks": {},
        "modalities": ["text", "plot"],
        "shots": [0],
        "codec": {},
        "plot": {},
        "models": [],
        "report": {"grouping": "grid_cell", "allow_bootstrap_wilcoxon": False},
        "render_workers": max(1, os.cpu_count() or 1),
        "invoke_workers": 4,
    }


def load_config(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    return normalize_config(raw)


def normalize_config(raw: dict) -> dict:
    cfg = default_config()
    cfg.update({k: v for k, v in raw.items() if v is not None})
    cfg["report"] = {**default_config()["report"], **(raw.get("report") or {})}
    if not cfg["models"] and raw.get("backend"):
        cfg["models"] = [raw["backend"]]
    tasks = {}
    for kind, task_cfg in (cfg.get("tasks") or {}).items():
        tasks[kind] = dict(task_cfg or {})
    cfg["tasks"] = tasks
    return cfg


def validate_config(cfg: dict) -> list[str]:
    """Collect every problem before any work happens."""
    errors: list[str] = []
    if not isinstance(cfg.get("master_seed"), int):
        errors.append("master_seed must be an integer (no implicit entropy)")
    if not cfg.get("out_dir"):
        errors.append("out_dir is required")
    if not cfg.get("tasks"):
        errors.append("at least one task must be configured")
    for kind, task_cfg in cfg.get("tasks", {}).items():
        if kind not in ALL_TASKS:
            errors.append(f"unknown task kind: {kind!r}")
            continue
        if kind == "imu_activity":
            for key in ("accel_csv", "gyro_csv"):
                path = task_cfg.get(key)
                if not path:
                    errors.append(f"imu_activity requires {key}")
                elif not Path(path).exists():
                    errors.append(f"imu_activity dataset missing: expected CSV at {path}")
        if kind == "imu_fall":
            path = task_cfg.get("index_csv")
            if not path:
                errors.append("imu_fall requires index_csv")
            elif not Path(path).exists():
                errors.append(f"imu_fall dataset missing: expected index CSV at {path}")
        if kind == "readiness":
            path = task_cfg.get("trimp_csv")
            if not path:
                errors.append("readiness requires trimp_csv")
            elif not Path(path).exists():
                errors.append(f"readiness dataset missing: expected TRIMP CSV at {path}")
        for k in task_cfg.get("shots", cfg.get("shots", [0])):
            if k not in promptkit.SHOT_COUNTS:
                errors.append(f"{kind}: shot count {k} not in {promptkit.SHOT_COUNTS}")
            if k > 0 and kind in SYNTHETIC_TASKS and kind != "quadratic_derivative_id":
                errors.append(f"{kind}: few-shot pools are only defined for quadratic_derivative_id")
            if k > 0 and kind == "readiness":
                errors.append("readiness is a zero-shot task")
    for modality in cfg.get("modalities", []):
        if modality not in promptkit.MODALITIES:
            errors.append(f"unknown modality: {modality!r}")
    if not cfg.get("modalities"):
        errors.append("at least one modality must be configured")
    try:
        CodecSpec(**cfg.get("codec", {}))
    except Exception as exc:
        errors.append(f"codec: {exc}")
    try:
        plot_cfg = dict(cfg.get("plot", {}))
        if "figsize" in plot_cfg and plot_cfg["figsize"] is not None:
            plot_cfg["figsize"] = tuple(plot_cfg["figsize"])
        PlotSpec(**plot_cfg)
    except Exception as exc:
        errors.append(f"plot: {exc}")
    if not cfg.get("models"):
        errors.append("at least one model/backend must be configured")
    for i, model_cfg in enumerate(cfg.get("models", [])):
        try:
            _model_config(model_cfg)
        except Exception as exc:
            errors.append(f"models[{i}]: {exc}")
    if cfg["report"].get("grouping") not in ("grid_cell", "repeat"):
        errors.append("report.grouping must be 'grid_cell' or 'repeat'")
    return errors


# operational knobs that cannot change any output byte
_NON_EXPERIMENT_KEYS = ("out_dir", "render_workers", "invoke_workers")


def config_hash(cfg: dict) -> str:
    payload = json.dumps(
        {k: v for k, v in cfg.items() if k not in _NON_EXPERIMENT_KEYS},
        sort_keys=True,
        separators=(",", ":"),
        default=str,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def _model_config(model_cfg: dict) -> ModelConfig:
    cfg = dict(model_cfg)
    pricing = cfg.pop("pricing", None)
    table = PricingTable(**pricing) if pricing else None
    kind = cfg.pop("kind", cfg.pop("backend", None))
    if kind is None:
        raise ConfigurationError("model config needs a backend 'kind'")
    name = cfg.pop("model", None) or f"scripted-{kind}"
    return ModelConfig(backend=kind, model=name, pricing=table, **cfg)


def _codec_spec(cfg: dict) -> CodecSpec:
    return CodecSpec(**cfg.get("codec", {}))


def _plot_spec(cfg: dict) -> PlotSpec:
    plot_cfg = dict(cfg.get("plot", {}))
    if "figsize" in plot_cfg and plot_cfg["figsize"] is not None:
        plot_cfg["figsize"] = tuple(plot_cfg["figsize"])
    return PlotSpec(**plot_cfg)


# --- schemas and labels ------------------------------------------------------


def schema_for(task_kind: str):
    if task_kind == "function_id":
        return ClassSchema(synthgen.FUNC_TYPES)
    if task_kind == "correlation":
        return ClassSchema(("positive", "negative"))
    if task_kind == "cluster_count":
        return IntRangeSchema(1, 9)
    if task_kind in ("derivative_id", "quadratic_derivative_id"):
        return ChoiceSchema(4)
    if task_kind == "imu_fall":
        return ClassSchema(imupipe.FALL_CLASSES)
    if task_kind == "imu_activity":
        return ClassSchema(imupipe.ACTIVITY_CLASSES)
    if task_kind == "readiness":
        return ClassSchema(("up", "down"))
    raise ConfigurationError(f"unknown task kind: {task_kind!r}")


def oracle_label(instance: TaskInstance) -> str:
    """Ground truth as the answer text a perfectly-behaved model would emit."""
    if instance.task_kind in ("derivative_id", "quadratic_derivative_id"):
        return str(int(instance.ground_truth) + 1)
    return str(instance.ground_truth)


# --- text renderings ---------------------------------------------------------


def text_for_instance(instance: TaskInstance, codec: CodecSpec) -> str:
    kind = instance.task_kind
    payload = instance.payload
    if kind == "function_id":
        return encode_series(payload.xs, [("y", payload.ys)], codec)
    if kind == "correlation":
        return encode_series(payload.xs, [("y1", payload.y1s), ("y2", payload.y2s)], codec)
    if kind == "cluster_count":
        return encode_series(None, [("x", payload.points[:, 0]), ("y", payload.points[:, 1])], codec)
    if kind in ("derivative_id", "quadratic_derivative_id"):
        blocks = ["Function:", encode_series(payload.question.xs, [("y", payload.question.ys)], codec)]
        for i, choice in enumerate(payload.choices, start=1):
            blocks.append(f"Choice {i}:")
            blocks.append(encode_series(choice.xs, [("dy", choice.ys)], codec))
        return "\n".join(blocks)
    if kind in ("imu_fall", "imu_activity"):
        segment = payload
        if kind == "imu_fall":
            # context windows force the pooled representation on the text side
            segment = imupipe.pool_segment(
                segment, imupipe.FALL_TEXT_POOL_KERNEL, imupipe.FALL_TEXT_POOL_KERNEL
            )
        names = ("acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z")
        return encode_series(segment.times(), list(zip(names, segment.channels)), codec)
    if kind == "readiness":
        days = np.arange(1, len(payload) + 1, dtype=np.float64)
        return encode_series(days, [("trimp", np.asarray(payload, dtype=np.float64))], codec)
    raise ConfigurationError(f"no text rendering for task {kind!r}")


# --- image renderings --------------------------------------------------------


def _render_instance_images(instance: TaskInstance, spec: PlotSpec, split_sensors: bool = True) -> list[Image]:
    if instance.task_kind in SYNTHETIC_TASKS:
        return plotrender.render_task(instance, spec)
    if instance.task_kind == "imu_fall":
        return plotrender.render_imu(instance.payload, split_sensors=False, spec=spec)
    if instance.task_kind == "imu_activity":
        return plotrender.render_imu(instance.payload, split_sensors=split_sensors, spec=spec)
    if instance.task_kind == "readiness":
        return [plotrender.render_bars(instance.payload, spec)]
    raise ConfigurationError(f"no image rendering for task {instance.task_kind!r}")


def _render_synthetic_job(args) -> int:
    """Process-pool worker: regenerate one instance and fill the PNG cache."""
    task_kind, params, spec_dict, cache_dir = args
    spec = PlotSpec(**spec_dict)
    instance = instance_from_params(task_kind, params)
    plotrender.render_task_cached(cache_dir, instance, spec)
    return 1


def _spec_dict(spec: PlotSpec) -> dict:
    d = asdict(spec)
    if d.get("figsize") is not None:
        d["figsize"] = tuple(d["figsize"])
    return d


def _load_cached_images(cache_dir: Path, instance: TaskInstance, spec: PlotSpec) -> list[Image]:
    count = 5 if instance.task_kind in ("derivative_id", "quadratic_derivative_id") else 1
    images = []
    for i in range(count):
        path = plotrender.cache_path(cache_dir, instance.instance_id, spec, i)
        data = path.read_bytes()
        from PIL import Image as PILImage
        import io as _io

        with PILImage.open(_io.BytesIO(data)) as im:
            w, h = im.size
        images.append(
            Image(
                width_px=w,
                height_px=h,
                png_bytes=data,
                sha256=hashlib.sha256(data).hexdigest(),
                spec=spec,
                role=f"part_{i}",
            )
        )
    return images


def _ensure_images_cached(cache_dir: Path, instance: TaskInstance, spec: PlotSpec, split_sensors: bool = True) -> list[Image]:
    """Render-or-load for instances whose payloads are not regenerable from params."""
    images = _render_instance_images(instance, spec, split_sensors)
    for i, image in enumerate(images):
        path = plotrender.cache_path(cache_dir, instance.instance_id, spec, i)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(image.png_bytes)
            tmp.replace(path)
    return images


# --- real-world instance construction ---------------------------------------


def build_realworld_instances(
    task_kind: str, task_cfg: dict, master_seed: int
) -> tuple[list[TaskInstance], list[ShotCandidate]]:
    """Load a real-world dataset into eval instances and a few-shot pool."""
    if task_kind == "imu_activity":
        segments, _ = imupipe.ingest_hhar(task_cfg["accel_csv"], task_cfg["gyro_csv"])
        instances = []
        pool = []
        for i, seg in enumerate(segments):
            params = {
                "participant": seg.participant,
                "device": seg.device,
                "label": seg.label,
                "index": i,
                "master_seed": master_seed,
            }
            inst = TaskInstance(
                task_kind=task_kind,
                payload=seg,
                ground_truth=seg.label,
                params=params,
                instance_id=synthgen.instance_id_for(task_kind, params),
            )
            instances.append(inst)
            pool.append(ShotCandidate(payload=inst, label=seg.label, group_key=seg.participant))
        return instances, pool
    if task_kind == "imu_fall":
        trials = imupipe.load_imufd(task_cfg["index_csv"])
        segments = []
        for trial in trials:
            if trial.body_location not in imupipe.FALL_BODY_LOCATIONS:
                continue
            segments.append(imupipe.crop_fall_trial(trial))
        participants = [s.participant for s in segments]
        train, _test = imupipe.split_imufd(participants, master_seed)
        train_set = set(train)
        instances = []
        pool = []
        for seg in segments:
            vote_group = f"{seg.participant}:{seg.label}:{seg.meta.get('trial', '')}"
            params = {
                "participant": seg.participant,
                "location": seg.body_location,
                "label": seg.label,
                "vote_group": vote_group,
                "split": "train" if seg.participant in train_set else "test",
                "master_seed": master_seed,
            }
            inst = TaskInstance(
                task_kind=task_kind,
                payload=seg,
                ground_truth=seg.label,
                params=params,
                instance_id=synthgen.instance_id_for(task_kind, params),
            )
            if seg.participant in train_set:
                pool.append(ShotCandidate(payload=inst, label=seg.label, group_key=seg.participant))
            else:
                instances.append(inst)
        return instances, pool
    if task_kind == "readiness":
        import pandas as pd

        df = pd.read_csv(task_cfg["trimp_csv"])
        day_cols = [c for c in df.columns if c.startswith("day_")]
        if len(day_cols) != imupipe.TRIMP_DAYS:
            raise ConfigurationError(
                f"readiness CSV must have day_1..day_{imupipe.TRIMP_DAYS} columns, found {len(day_cols)}"
            )
        instances = []
        for row in df.itertuples(index=False):
            values = np.asarray([getattr(row, c) for c in day_cols], dtype=np.float64)
            ratio, label = imupipe.acwr_label(values)
            params = {
                "case_id": str(getattr(row, "case_id", len(instances))),
                "acwr": ratio,
                "master_seed": master_seed,
            }
            instances.append(
                TaskInstance(
                    task_kind=task_kind,
                    payload=values,
                    ground_truth=label,
                    params=params,
                    instance_id=synthgen.instance_id_for(task_kind, params),
                )
            )
        return instances, []
    raise ConfigurationError(f"unknown real-world task: {task_kind!r}")


# --- the pipeline ------------------------------------------------------------


class ExperimentRunner:
    def __init__(self, cfg: dict):
        errors = validate_config(cfg)
        if errors:
            raise ConfigurationError("invalid config:\n  - " + "\n  - ".join(errors))
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.out_dir = Path(cfg["out_dir"])
        self.codec = _codec_spec(cfg)
        self.plot_spec = _plot_spec(cfg)
        self.master_seed = cfg["master_seed"]
        self.backend_calls: dict[str, int] = {}

    # -- setup

    def prepare_out_dir(self, resume: bool) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        lock = self.out_dir / "config.lock.json"
        if lock.exists():
            recorded = json.loads(lock.read_text(encoding="utf-8"))
            if recorded.get("config_hash") != self.hash:
                raise ConfigurationError(
                    f"output directory {self.out_dir} was produced by config "
                    f"{recorded.get('config_hash')}, refusing to mix with {self.hash}"
                )
            if (self.out_dir / "records.jsonl").exists() and not resume:
                raise ConfigurationError(
                    f"{self.out_dir} already contains records.jsonl; pass resume=True to rerun"
                )
        else:
            lock.write_text(
                json.dumps({"config_hash": self.hash, "config": self.cfg}, sort_keys=True, indent=2),
                encoding="utf-8",
            )

    def _task_shots(self, task_kind: str) -> list[int]:
        return list(self.cfg["tasks"][task_kind].get("shots", self.cfg.get("shots", [0])))

    def _task_instances(self, task_kind: str) -> tuple[list[TaskInstance], list[ShotCandidate]]:
        if task_kind in SYNTHETIC_TASKS:
            grid = self.cfg["tasks"][task_kind].get("grid")
            return synthgen.build_task_matrix(task_kind, self.master_seed, grid), []
        return build_realworld_instances(task_kind, self.cfg["tasks"][task_kind], self.master_seed)

    # -- rendering

    def render_task_images(self, task_kind: str, instances: Sequence[TaskInstance]) -> None:
        """Fill the PNG cache for one task (process pool for synthetic tasks)."""
        cache_dir = self.out_dir / "renders"
        needs_images = any(m != "text" for m in self.cfg["modalities"])
        if not needs_images:
            return
        if task_kind in SYNTHETIC_TASKS:
            jobs = [
                (task_kind, inst.params, _spec_dict(self.plot_spec), str(cache_dir))
                for inst in instances
                if not all(
                    plotrender.cache_path(cache_dir, inst.instance_id, self.plot_spec, i).exists()
                    for i in range(5 if task_kind.endswith("derivative_id") else 1)
                )
            ]
            workers = int(self.cfg.get("render_workers", 1))
            if len(jobs) > 8 and workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    list(pool.map(_render_synthetic_job, jobs, chunksize=16))
            else:
                for job in jobs:
                    _render_synthetic_job(job)
        else:
            split = bool(self.cfg["tasks"][task_kind].get("split_sensors", True))
            for inst in instances:
                _ensure_images_cached(cache_dir, inst, self.plot_spec, split_sensors=split)

    def rendering_for(self, instance: TaskInstance, modality: str) -> Rendering:
        cache_dir = self.out_dir / "renders"
        text = None
        images: list[Image] = []
        if modality != "plot":
            text = text_for_instance(instance, self.codec)
        if modality != "text":
            if instance.task_kind in SYNTHETIC_TASKS:
                plotrender.render_task_cached(cache_dir, instance, self.plot_spec)
                images = _load_cached_images(cache_dir, instance, self.plot_spec)
            else:
                split = bool(self.cfg["tasks"][instance.task_kind].get("split_sensors", True))
                images = _ensure_images_cached(cache_dir, instance, self.plot_spec, split_sensors=split)
        return Rendering(text=text, images=images)

    # -- shots

    def shots_for(
        self,
        task_kind: str,
        k: int,
        modality: str,
        shot_pool: Sequence[ShotCandidate],
        eval_instance: TaskInstance,
    ) -> tuple[list[Shot], int]:
        if k == 0:
            return [], 0
        if task_kind == "quadratic_derivative_id":
            shot_instances = build_quadratic_shot_instances(derive_seed(self.master_seed, "shots", task_kind), k)
            shots = []
            for inst in shot_instances:
                rendering = self.rendering_for(inst, modality)
                shots.append(
                    Shot(
                        rendering=rendering,
                        label=oracle_label(inst),
                        reasoning=quadratic_reasoning_trace(inst.payload),
                    )
                )
            return shots, k
        balanced = bool(self.cfg["tasks"][task_kind].get("shots_per_class", True))
        exclude = eval_instance.params.get("participant")
        picked = assemble_fewshots(
            shot_pool,
            k,
            seed=derive_seed(self.master_seed, "shots", task_kind, k),
            exclude_group=exclude,
            balanced_per_class=balanced,
        )
        shots = []
        for cand in picked:
            rendering = self.rendering_for(cand.payload, modality)
            shots.append(Shot(rendering=rendering, label=cand.label))
        return shots, k

    # -- invocation

    def _gateways(self) -> list[tuple[ModelConfig, Gateway]]:
        override = self.cfg.get("backend_override")
        gateways = []
        for model_cfg in self.cfg["models"]:
            mc = _model_config(model_cfg)
            if override:
                mc.backend = override
            backend = make_backend(mc.backend, oracle_labels=self._oracle_labels)
            if hasattr(backend, "labels"):
                backend.labels = self._oracle_labels  # live view, filled per task
            gateway = Gateway(
                backend,
                mc,
                cache_dir=self.out_dir / "cache" / f"{mc.backend}-{mc.model}",
            )
            gateways.append((mc, gateway))
        return gateways

    def run(self, resume: bool = False) -> Path:
        self.prepare_out_dir(resume)
        records: list[EvalRecord] = []
        # the oracle backend shares this dict; entries appear as each task is
        # generated, so only one task's payloads are alive at a time
        self._oracle_labels: dict[str, str] = {}
        gateways = self._gateways()
        for task_kind in self.cfg["tasks"]:
            instances, shot_pool = self._task_instances(task_kind)
            for inst in instances:
                self._oracle_labels[inst.instance_id] = oracle_label(inst)
            self.render_task_images(task_kind, instances)
            schema = schema_for(task_kind)
            for modality in self.cfg["modalities"]:
                for k in self._task_shots(task_kind):
                    shared_shots = None
                    if task_kind == "quadratic_derivative_id" and k > 0:
                        shared_shots = self.shots_for(task_kind, k, modality, shot_pool, instances[0])

                    def work(inst: TaskInstance, model_cfg=None, gateway=None, shots_pair=None):
                        shots, shots_k = shots_pair if shots_pair else self.shots_for(
                            task_kind, k, modality, shot_pool, inst
                        )
                        rendering = self.rendering_for(inst, modality)
                        prompt = build_prompt(
                            inst, modality, rendering, schema, shots=shots, shots_k=shots_k
                        )
                        response = gateway.invoke(prompt)
                        if response.ok:
                            parsed = promptkit.parse_response(response.raw_text, schema)
                            predicted, status, note = parsed.value, parsed.status, ""
                        else:
                            predicted, status, note = None, evalstats.PARSE_FAILURE, response.error
                        return EvalRecord(
                            instance_id=inst.instance_id,
                            task_kind=task_kind,
                            modality=modality,
                            model=model_cfg.model,
                            shots=k,
                            predicted=predicted,
                            ground_truth=inst.ground_truth,
                            parse_status=status,
                            params=inst.params,
                            template_id=prompt.template_id,
                            config_hash=self.hash,
                            note=note,
                        )

                    for model_cfg, gateway in gateways:
                        workers = int(self.cfg.get("invoke_workers", 4))
                        if workers > 1 and len(instances) > 1:
                            with ThreadPoolExecutor(max_workers=workers) as pool:
                                results = list(
                                    pool.map(
                                        lambda i: work(i, model_cfg, gateway, shared_shots), instances
                                    )
                                )
                        else:
                            results = [work(i, model_cfg, gateway, shared_shots) for i in instances]
                        records.extend(results)
        for mc, gateway in gateways:
            self.backend_calls[f"{mc.backend}-{mc.model}"] = getattr(gateway.backend, "calls", 0)
        records.sort(key=lambda r: (r.task_kind, r.instance_id, r.modality, r.model, r.shots))
        write_records(records, self.out_dir / "records.jsonl")
        emit_report(records, self.out_dir, self.cfg, self.hash)
        return self.out_dir


def run_experiment(cfg: dict, resume: bool = False) -> Path:
    """Validate, execute and report one experiment; returns the artifact directory."""
    return ExperimentRunner(normalize_config(cfg)).run(resume=resume)


def write_records(records: Sequence[EvalRecord], path: Path) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    tmp.replace(path)


def read_records(path: Path) -> list[EvalRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(EvalRecord.from_dict(json.loads(line)))
    return records


# --- reporting ---------------------------------------------------------------


def _cell_key(record: EvalRecord, grouping: str) -> tuple:
    skip = set(_NON_CELL_PARAMS) - ({"repeat"} if grouping == "repeat" else set())
    items = [(k, v) for k, v in sorted(record.params.items()) if k not in skip]
    return tuple((k, json.dumps(v, sort_keys=True, default=str)) for k, v in items)


def fold_fall_votes(records: Sequence[EvalRecord]) -> list[EvalRecord]:
    """Collapse per-location fall records into one majority-voted record each.

    Locations whose calls failed are ignored as long as one succeeded; a
    group with no successful location keeps a single failure record.
    """
    groups: dict[tuple, list[EvalRecord]] = {}
    for rec in records:
        key = (rec.params.get("vote_group", rec.instance_id), rec.modality, rec.model, rec.shots)
        groups.setdefault(key, []).append(rec)
    voted = []
    for key, group in sorted(groups.items()):
        ok = [r for r in group if r.parse_status == evalstats.PARSE_OK]
        base = group[0]
        if ok:
            label = imupipe.majority_vote([r.predicted for r in ok])
            voted.append(
                EvalRecord(
                    instance_id=str(key[0]),
                    task_kind=base.task_kind,
                    modality=base.modality,
                    model=base.model,
                    shots=base.shots,
                    predicted=label,
                    ground_truth=base.ground_truth,
                    parse_status=evalstats.PARSE_OK,
                    params={"participant": base.params.get("participant")},
                    config_hash=base.config_hash,
                )
            )
        else:
            voted.append(
                EvalRecord(
                    instance_id=str(key[0]),
                    task_kind=base.task_kind,
                    modality=base.modality,
                    model=base.model,
                    shots=base.shots,
                    predicted=None,
                    ground_truth=base.ground_truth,
                    parse_status=evalstats.PARSE_FAILURE,
                    params={"participant": base.params.get("participant")},
                    config_hash=base.config_hash,
                )
            )
    return voted


def _metric_records(task_kind: str, records: list[EvalRecord]) -> list[EvalRecord]:
    if task_kind == "imu_fall":
        return fold_fall_votes(records)
    return records


def _safe_metric(kind: str, records: list[EvalRecord]) -> Optional[float]:
    try:
        return evalstats.compute_metric(kind, records)
    except DegenerateInputError:
        return None


def _group_records(records: Sequence[EvalRecord]) -> dict[tuple, list[EvalRecord]]:
    groups: dict[tuple, list[EvalRecord]] = {}
    for rec in records:
        groups.setdefault((rec.task_kind, rec.modality, rec.model, rec.shots), []).append(rec)
    return groups


def _fmt(value) -> str:
    if value is None:
        return "--"
    if isinstance(value, float):
        return repr(round(value, 10))
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    tmp.replace(path)


def emit_report(records: Sequence[EvalRecord], out_dir: Path, cfg: dict, cfg_hash: str) -> list[Path]:
    """Summary, comparison and breakdown CSVs plus box-plot figures."""
    out_dir = Path(out_dir)
    report_dir = out_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    master_seed = cfg.get("master_seed", 0)
    grouping = cfg.get("report", {}).get("grouping", "grid_cell")
    allow_bootstrap_wilcoxon = bool(cfg.get("report", {}).get("allow_bootstrap_wilcoxon", False))
    written: list[Path] = []

    groups = _group_records(records)

    # summaries.csv / summaries.json
    summary_rows = []
    summary_docs = []
    for (task, modality, model, shots), group in sorted(groups.items()):
        metric_kind = TASK_METRICS[task]
        scored = _metric_records(task, group)
        point = _safe_metric(metric_kind, scored)
        n_failures = sum(1 for r in scored if r.parse_status != evalstats.PARSE_OK)
        if point is None:
            summary_rows.append(
                [task, modality, model, shots, metric_kind, None, None, None, None, None, None,
                 len(scored), n_failures, cfg_hash]
            )
            continue
        boot = evalstats.bootstrap_distribution(
            scored, metric_kind, replicates=BOOTSTRAP_REPLICATES,
            seed=derive_seed(master_seed, "summary", task, modality, model, shots),
        )
        s = evalstats.summarize(boot, kind=metric_kind, point=point)
        summary_rows.append(
            [task, modality, model, shots, metric_kind, point, s.median, s.q1, s.q3,
             s.ci_lo, s.ci_hi, len(scored), n_failures, cfg_hash]
        )
        summary_docs.append(
            {
                "task_kind": task, "modality": modality, "model": model, "shots": shots,
                "metric": metric_kind, "point": point, "median": s.median, "q1": s.q1,
                "q3": s.q3, "ci_lo": s.ci_lo, "ci_hi": s.ci_hi, "n": len(scored),
                "parse_failures": n_failures, "config_hash": cfg_hash,
            }
        )
    path = out_dir / "summaries.csv"
    _write_csv(
        path,
        ["task_kind", "modality", "model", "shots", "metric", "point", "boot_median", "boot_q1",
         "boot_q3", "ci_lo", "ci_hi", "n", "parse_failures", "config_hash"],
        summary_rows,
    )
    written.append(path)
    path = out_dir / "summaries.json"
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(summary_docs, sort_keys=True, indent=2), encoding="utf-8")
    tmp.replace(path)
    written.append(path)

    # comparisons.csv: plot-minus-text cells with significance per task block
    comparison_rows = []
    tasks = sorted({t for (t, _, _, _) in groups})
    for task in tasks:
        metric_kind = TASK_METRICS[task]
        block = []
        pairs = sorted(
            {(model, shots) for (t, _, model, shots) in groups if t == task}
        )
        for model, shots in pairs:
            plot_recs = groups.get((task, "plot", model, shots))
            text_recs = groups.get((task, "text", model, shots))
            if not plot_recs or not text_recs:
                block.append([task, metric_kind, model, shots, None, None, None, None, None, None, cfg_hash])
                continue
            if task in SYNTHETIC_TASKS:
                plot_cells = _per_cell_metrics(task, plot_recs, metric_kind, grouping)
                text_cells = _per_cell_metrics(task, text_recs, metric_kind, grouping)
                shared = sorted(set(plot_cells) & set(text_cells))
                pv = np.array([plot_cells[c] for c in shared])
                tv = np.array([text_cells[c] for c in shared])
                diffs = (tv - pv) if metric_kind == "mae" else (pv - tv)
                try:
                    _, p_raw = evalstats.wilcoxon_signed_rank(pv, tv)
                except DegenerateInputError:
                    p_raw = None
            else:
                plot_boot = evalstats.bootstrap_distribution(
                    _metric_records(task, plot_recs), metric_kind, replicates=BOOTSTRAP_REPLICATES,
                    seed=derive_seed(master_seed, "compare", task, "plot", model, shots),
                )
                text_boot = evalstats.bootstrap_distribution(
                    _metric_records(task, text_recs), metric_kind, replicates=BOOTSTRAP_REPLICATES,
                    seed=derive_seed(master_seed, "compare", task, "text", model, shots),
                )
                a, b = (text_boot, plot_boot) if metric_kind == "mae" else (plot_boot, text_boot)
                diffs = evalstats.paired_diff_distribution(
                    a, b, n_pairs=BOOTSTRAP_REPLICATES, seed=derive_seed(master_seed, "pairs", task, model, shots)
                )
                if allow_bootstrap_wilcoxon:
                    try:
                        _, p_raw = evalstats.wilcoxon_signed_rank(plot_boot, text_boot)
                    except DegenerateInputError:
                        p_raw = None
                else:
                    # bootstrap replicates are not independent samples; the
                    # signed-rank test is refused unless explicitly overridden
                    p_raw = None
            s = evalstats.summarize(diffs)
            block.append([task, metric_kind, model, shots, len(diffs), s.median, s.q1, s.q3, p_raw, None, cfg_hash])
        raw_ps = [row[8] for row in block if row[8] is not None]
        adjusted = evalstats.bonferroni_adjust(raw_ps) if raw_ps else []
        it = iter(adjusted)
        for row in block:
            if row[8] is not None:
                row[9] = next(it)
        comparison_rows.extend(block)
    path = out_dir / "comparisons.csv"
    rows_with_star = [
        row[:10]
        + [
            "--" if row[9] is None else ("yes" if row[9] < 0.05 else "no"),
            cfg_hash,
        ]
        for row in comparison_rows
    ]
    _write_csv(
        path,
        ["task_kind", "metric", "model", "shots", "n_cells", "median_diff", "q1_diff", "q3_diff",
         "p_raw", "p_bonferroni", "significant", "config_hash"],
        rows_with_star,
    )
    written.append(path)

    # per-parameter breakdowns (synthetic tasks)
    for task in tasks:
        if task not in TASK_BREAKDOWN_AXES:
            continue
        metric_kind = TASK_METRICS[task]
        rows = []
        for axis in TASK_BREAKDOWN_AXES[task]:
            task_groups = {key: recs for key, recs in groups.items() if key[0] == task}
            for (t, modality, model, shots), recs in sorted(task_groups.items()):
                by_value: dict[str, list[EvalRecord]] = {}
                for rec in recs:
                    by_value.setdefault(json.dumps(rec.params.get(axis), default=str), []).append(rec)
                for value, sub in sorted(by_value.items()):
                    point = _safe_metric(metric_kind, sub)
                    if point is None:
                        rows.append([task, axis, value, modality, model, shots, metric_kind, None, None, None, len(sub), cfg_hash])
                        continue
                    boot = evalstats.bootstrap_distribution(
                        sub, metric_kind, replicates=BOOTSTRAP_REPLICATES,
                        seed=derive_seed(master_seed, "breakdown", task, axis, value, modality, model, shots),
                    )
                    lo, hi = (float(q) for q in np.quantile(boot, [0.025, 0.975]))
                    rows.append([task, axis, value, modality, model, shots, metric_kind, point, lo, hi, len(sub), cfg_hash])
        path = out_dir / f"breakdown_{task}.csv"
        _write_csv(
            path,
            ["task_kind", "param", "value", "modality", "model", "shots", "metric", "point",
             "ci_lo", "ci_hi", "n", "config_hash"],
            rows,
        )
        written.append(path)

    # box-plot figures
    for task in tasks:
        metric_kind = TASK_METRICS[task]
        box_groups = []
        for (t, modality, model, shots), recs in sorted(groups.items()):
            if t != task:
                continue
            if task in SYNTHETIC_TASKS:
                cells = _per_cell_metrics(task, recs, metric_kind, grouping)
                dist = list(cells.values())
            else:
                scored = _metric_records(task, recs)
                try:
                    dist = evalstats.bootstrap_distribution(
                        scored, metric_kind, replicates=BOOTSTRAP_REPLICATES,
                        seed=derive_seed(master_seed, "box", task, modality, model, shots),
                    ).tolist()
                except DegenerateInputError:
                    continue
            if dist:
                box_groups.append((f"{model}\n{modality} k={shots}", dist))
        if not box_groups:
            continue
        image = plotrender.render_box(
            box_groups, title=f"{task} ({metric_kind})", ylabel=metric_kind
        )
        path = report_dir / f"box_{task}_{cfg_hash}.png"
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(image.png_bytes)
        tmp.replace(path)
        written.append(path)
    return written


def _per_cell_metrics(task: str, records: list[EvalRecord], metric_kind: str, grouping: str) -> dict:
    cells: dict[tuple, list[EvalRecord]] = {}
    for rec in records:
        cells.setdefault(_cell_key(rec, grouping), []).append(rec)
    out = {}
    for key, group in cells.items():
        value = _safe_metric(metric_kind, group)
        if value is not None:
            out[key] = value
    return out


def export_instances(cfg: dict, path: Path) -> int:
    """Write the configured task matrices as a line-delimited JSON archive."""
    cfg = normalize_config(cfg)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for task_kind, task_cfg in cfg["tasks"].items():
            if task_kind in SYNTHETIC_TASKS:
                instances = synthgen.build_task_matrix(task_kind, cfg["master_seed"], task_cfg.get("grid"))
            else:
                instances, _ = build_realworld_instances(task_kind, task_cfg, cfg["master_seed"])
            for inst in instances:
                if task_kind in SYNTHETIC_TASKS:
                    fh.write(json.dumps(synthgen.instance_to_dict(inst), sort_keys=True, default=str) + "\n")
                else:
                    doc = {
                        "schema_version": synthgen.SCHEMA_VERSION,
                        "instance_id": inst.instance_id,
                        "task_kind": task_kind,
                        "params": inst.params,
                        "ground_truth": inst.ground_truth,
                    }
                    fh.write(json.dumps(doc, sort_keys=True, default=str) + "\n")
                count += 1
    return count

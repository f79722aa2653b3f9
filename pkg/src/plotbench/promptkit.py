"""Prompt assembly and response parsing.

Prompts are ordered lists of text and image parts in one of four modalities
(text, plot, or both in either order), always carrying an explicit answer
schema ("answer with exactly one of ...").  Parsing is schema-typed and
conservative: a response naming more than one admissible label is a parse
failure, never a guess.  Few-shot selection enforces group-level exclusion so
no shot shares a participant with the instance under evaluation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence, Union

from .errors import ConfigurationError, RejectedInputError
from .plotrender import Image
from .rng import Rng, derive_seed
from .synthgen import SHOT_QUADRATIC_SCALES, TaskInstance, gen_derivative_task, instance_id_for

MODALITIES = ("text", "plot", "combined_text_first", "combined_plot_first")

SHOT_COUNTS = (0, 1, 2, 3, 5, 10)

TEMPLATE_VERSION = "v1"

PARSE_OK = "ok"
PARSE_FAILURE = "parse_failure"


# --- answer schemas ----------------------------------------------------------


@dataclass(frozen=True)
class ClassSchema:
    classes: tuple[str, ...]

    def instruction(self) -> str:
        return "Answer with exactly one of: " + ", ".join(self.classes) + "."

    def to_dict(self) -> dict:
        return {"kind": "class", "classes": list(self.classes)}


@dataclass(frozen=True)
class IntRangeSchema:
    lo: int
    hi: int

    def instruction(self) -> str:
        return f"Answer with a single integer between {self.lo} and {self.hi}."

    def to_dict(self) -> dict:
        return {"kind": "int_range", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class ChoiceSchema:
    count: int
    option_texts: tuple[str, ...] = ()

    def instruction(self) -> str:
        return f"Answer with the number of the correct choice (1-{self.count})."

    def to_dict(self) -> dict:
        return {"kind": "choice", "count": self.count}


Schema = Union[ClassSchema, IntRangeSchema, ChoiceSchema]


@dataclass
class ParsedLabel:
    value: object
    raw_text: str
    status: str

    @property
    def ok(self) -> bool:
        return self.status == PARSE_OK


_INT_TOKEN = re.compile(r"(?<![\w.\-])-?\d+(?![\w.])")


def _class_pattern(name: str) -> re.Pattern:
    # underscores in canonical labels match either '_' or whitespace in prose
    body = re.escape(name).replace("_", r"[\s_]")
    return re.compile(rf"(?<!\w){body}(?!\w)", re.IGNORECASE)


def parse_response(raw: str, schema: Schema) -> ParsedLabel:
    """Extract a schema-typed label from free-form model text.

    Case-insensitive and whitespace-tolerant.  Exactly one admissible
    candidate must appear; zero or several distinct candidates give
    ``parse_failure`` (failures are data, not exceptions).
    """
    text = raw or ""
    if isinstance(schema, ClassSchema):
        spans = {
            c: [m.span() for m in _class_pattern(c).finditer(text)] for c in schema.classes
        }
        found = []
        for c, own in spans.items():
            if not own:
                continue
            # a hit swallowed by a longer label's hit ("fall" inside "near fall")
            # does not count on its own
            standalone = any(
                not any(
                    other != c and len(other) > len(c) and o[0] <= s[0] and s[1] <= o[1]
                    for other, others in spans.items()
                    for o in others
                )
                for s in own
            )
            if standalone:
                found.append(c)
        if len(found) == 1:
            return ParsedLabel(found[0], raw_text=raw, status=PARSE_OK)
        return ParsedLabel(None, raw_text=raw, status=PARSE_FAILURE)
    if isinstance(schema, IntRangeSchema):
        values = {int(tok) for tok in _INT_TOKEN.findall(text)}
        admissible = sorted(v for v in values if schema.lo <= v <= schema.hi)
        if len(admissible) == 1:
            return ParsedLabel(admissible[0], raw_text=raw, status=PARSE_OK)
        return ParsedLabel(None, raw_text=raw, status=PARSE_FAILURE)
    if isinstance(schema, ChoiceSchema):
        values = {int(tok) for tok in _INT_TOKEN.findall(text)}
        admissible = sorted(v for v in values if 1 <= v <= schema.count)
        if schema.option_texts:
            for i, option in enumerate(schema.option_texts, start=1):
                if option and option in text:
                    admissible = sorted(set(admissible) | {i})
        if len(admissible) == 1:
            return ParsedLabel(admissible[0] - 1, raw_text=raw, status=PARSE_OK)
        return ParsedLabel(None, raw_text=raw, status=PARSE_FAILURE)
    raise RejectedInputError(f"unknown schema type: {type(schema).__name__}")


# --- prompts -----------------------------------------------------------------


@dataclass
class TextPart:
    text: str


@dataclass
class ImagePart:
    sha256: str
    width_px: int
    height_px: int
    png_bytes: Optional[bytes] = None

    @classmethod
    def from_image(cls, image: Image) -> "ImagePart":
        return cls(
            sha256=image.sha256,
            width_px=image.width_px,
            height_px=image.height_px,
            png_bytes=image.png_bytes,
        )


PromptPart = Union[TextPart, ImagePart]


@dataclass
class Rendering:
    """Modality-tagged representations of one instance or shot."""

    text: Optional[str] = None
    images: list[Image] = field(default_factory=list)


@dataclass
class Shot:
    rendering: Rendering
    label: str
    reasoning: Optional[str] = None


@dataclass
class Prompt:
    parts: list[PromptPart]
    modality: str
    schema: Schema
    task_kind: str
    instance_id: str
    template_id: str
    shots_k: int = 0

    def text_chars(self) -> int:
        return sum(len(p.text) for p in self.parts if isinstance(p, TextPart))

    def image_parts(self) -> list[ImagePart]:
        return [p for p in self.parts if isinstance(p, ImagePart)]

    def to_bytes(self) -> bytes:
        """Canonical serialization (images by content hash) for cache keys."""
        doc = {
            "modality": self.modality,
            "schema": self.schema.to_dict(),
            "template_id": self.template_id,
            "instance_id": self.instance_id,
            "parts": [
                {"text": p.text}
                if isinstance(p, TextPart)
                else {"image": p.sha256, "w": p.width_px, "h": p.height_px}
                for p in self.parts
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def load_template(name: str) -> str:
    path = resources.files("plotbench").joinpath("templates", f"{name}.txt")
    return path.read_text(encoding="utf-8").strip()


def _representation_parts(rendering: Rendering, modality: str) -> list[PromptPart]:
    text_parts: list[PromptPart] = []
    if rendering.text is not None:
        text_parts = [TextPart(rendering.text)]
    image_parts: list[PromptPart] = [ImagePart.from_image(im) for im in rendering.images]
    if modality == "text":
        if image_parts or not text_parts:
            raise RejectedInputError("text modality requires a text rendering and no images")
        return text_parts
    if modality == "plot":
        if not image_parts:
            raise RejectedInputError("plot modality requires at least one image")
        return image_parts
    if modality == "combined_text_first":
        if not text_parts or not image_parts:
            raise RejectedInputError("combined modality requires both renderings")
        return text_parts + image_parts
    if modality == "combined_plot_first":
        if not text_parts or not image_parts:
            raise RejectedInputError("combined modality requires both renderings")
        return image_parts + text_parts
    raise RejectedInputError(f"unknown modality: {modality!r}")


def build_prompt(
    task: TaskInstance,
    modality: str,
    rendering: Rendering,
    schema: Schema,
    shots: Sequence[Shot] = (),
    template_name: Optional[str] = None,
    shots_k: Optional[int] = None,
) -> Prompt:
    """Assemble the full prompt: instruction, worked shots, then the question.

    ``shots_k`` is the configured shot count (one of the supported grid
    values); it may differ from ``len(shots)`` when shots are balanced per
    class.
    """
    if modality not in MODALITIES:
        raise RejectedInputError(f"unknown modality: {modality!r}")
    k = len(shots) if shots_k is None else shots_k
    if k not in SHOT_COUNTS:
        raise RejectedInputError(f"shot count must be one of {SHOT_COUNTS}, got {k}")
    name = template_name or task.task_kind
    intro = load_template(name).format(schema_instruction=schema.instruction())
    parts: list[PromptPart] = [TextPart(intro + "\n")]
    for j, shot in enumerate(shots, start=1):
        parts.append(TextPart(f"\nExample {j}:\n"))
        parts.extend(_representation_parts(shot.rendering, modality))
        if shot.reasoning:
            parts.append(TextPart(f"\nReasoning: {shot.reasoning}"))
        parts.append(TextPart(f"\nAnswer: {shot.label}\n"))
    parts.append(TextPart("\nNow answer for the following data.\n"))
    parts.extend(_representation_parts(rendering, modality))
    parts.append(TextPart("\nAnswer:"))
    return Prompt(
        parts=parts,
        modality=modality,
        schema=schema,
        task_kind=task.task_kind,
        instance_id=task.instance_id,
        template_id=f"{name}@{TEMPLATE_VERSION}",
        shots_k=k,
    )


# --- few-shot pools ----------------------------------------------------------


@dataclass
class ShotCandidate:
    payload: object
    label: str
    group_key: str = ""  # participant/user for leakage exclusion


def assemble_fewshots(
    pool: Sequence[ShotCandidate],
    k: int,
    seed: int,
    exclude_group: Optional[str] = None,
    balanced_per_class: bool = False,
) -> list[ShotCandidate]:
    """Pick shot candidates, never sharing a group key with the eval instance.

    With ``balanced_per_class`` the selection takes ``k`` candidates from
    every label present in the pool (real-world tasks); otherwise ``k``
    candidates overall.
    """
    if k not in SHOT_COUNTS:
        raise RejectedInputError(f"shot count must be one of {SHOT_COUNTS}, got {k}")
    if k == 0:
        return []
    eligible = [c for c in pool if exclude_group is None or c.group_key != exclude_group]
    rng = Rng(derive_seed(seed, "fewshot", exclude_group or ""))
    if not balanced_per_class:
        if len(eligible) < k:
            raise ConfigurationError(f"shot pool exhausted: need {k}, have {len(eligible)}")
        return rng.choice(eligible, k, replace=False)
    by_label: dict[str, list[ShotCandidate]] = {}
    for c in eligible:
        by_label.setdefault(c.label, []).append(c)
    picked: list[ShotCandidate] = []
    for label in sorted(by_label):
        candidates = by_label[label]
        if len(candidates) < k:
            raise ConfigurationError(f"shot pool exhausted for label {label!r}: need {k}, have {len(candidates)}")
        picked.extend(rng.choice(candidates, k, replace=False))
    return picked


def build_quadratic_shot_instances(seed: int, k: int) -> list[TaskInstance]:
    """Generate the worked examples for the quadratic derivative task.

    Shot questions use the dedicated scale set with zero noise and 50 points,
    so they never coincide with main-grid instances.
    """
    if k not in SHOT_COUNTS:
        raise RejectedInputError(f"shot count must be one of {SHOT_COUNTS}, got {k}")
    rng = Rng(derive_seed(seed, "quadratic-shots"))
    scales = rng.choice(list(SHOT_QUADRATIC_SCALES), k, replace=False) if k <= len(SHOT_QUADRATIC_SCALES) else rng.choice(list(SHOT_QUADRATIC_SCALES), k)
    instances = []
    for j, scale in enumerate(scales):
        shot_seed = derive_seed(seed, "quadratic-shot", j, scale)
        params = {
            "num_points": 50,
            "noise_level": 0.0,
            "quadratic_scale": float(scale),
            "repeat": j,
            "master_seed": seed,
            "seed": shot_seed,
            "role": "shot",
        }
        task = gen_derivative_task(
            shot_seed,
            "quadratic_scale",
            {"quadratic_scale": float(scale), "num_points": 50, "noise_level": 0.0},
        )
        instances.append(
            TaskInstance(
                task_kind="quadratic_derivative_id",
                payload=task,
                ground_truth=task.answer_index,
                params=params,
                instance_id=instance_id_for("quadratic_derivative_id", params),
            )
        )
    return instances


def quadratic_reasoning_trace(task) -> str:
    """Authored slope-sign then slope-magnitude argument for one shot."""
    scale = task.quadratic_scale
    direction = "upward" if scale > 0 else "downward"
    sign = "positive" if scale > 0 else "negative"
    template = load_template("quadratic_reasoning")
    return template.format(
        direction=direction,
        sign=sign,
        scale=f"{scale:g}",
        slope=f"{2 * scale:g}",
        choice=task.answer_index + 1,
    )

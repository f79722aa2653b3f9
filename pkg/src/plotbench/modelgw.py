"""Uniform gateway to model backends.

Every call goes through a content-addressed response cache (key = SHA-256 of
prompt bytes + model + temperature), bounded in-flight concurrency, and
retries with exponential backoff on transient failures.  Scripted backends
(oracle, random, replay) make full pipeline runs reproducible without any
network; the HTTP backend speaks a chat-style JSON endpoint with mixed
text/image parts.

Token accounting: text tokens are estimated as ceil(chars / 4) unless the
backend reports exact counts; an image costs 258 tokens when both dimensions
are under 384 px and 1290 tokens otherwise.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

from .errors import (
    BackendError,
    ConfigurationError,
    ContextLengthExceededError,
    RejectedInputError,
    TransientBackendError,
)
from .promptkit import (
    ChoiceSchema,
    ClassSchema,
    ImagePart,
    IntRangeSchema,
    Prompt,
)
from .rng import Rng, derive_seed

IMAGE_TOKENS_SMALL = 258
IMAGE_TOKENS_LARGE = 1290
IMAGE_SMALL_MAX_PX = 384

TEXT_CHARS_PER_TOKEN = 4

DEFAULT_TEMPERATURE = 0.1
DEFAULT_MAX_INFLIGHT = 4


@dataclass
class PricingTable:
    """Currency per 1K tokens, text and image rates separately."""

    text_per_1k: float
    image_per_1k: float
    currency: str = "USD"


@dataclass
class ModelConfig:
    backend: str
    model: str
    temperature: float = DEFAULT_TEMPERATURE
    max_retries: int = 3
    retry_base_s: float = 0.1
    max_inflight: int = DEFAULT_MAX_INFLIGHT
    max_context_tokens: Optional[int] = None
    pricing: Optional[PricingTable] = None
    seed: int = 0  # consumed by the scripted random backend
    endpoint: str = ""  # HTTP backend only
    api_key_env: str = ""  # HTTP backend only

    def __post_init__(self):
        if not 0 <= self.temperature <= 1:
            raise ConfigurationError(f"temperature must be in [0, 1], got {self.temperature}")


@dataclass
class ModelResponse:
    raw_text: Optional[str]
    error: Optional[str]
    prompt_tokens_est: int
    image_count: int
    latency_s: float
    backend: str
    model: str
    cache_hit: bool = False

    def __post_init__(self):
        if (self.raw_text is None) == (self.error is None):
            raise ValueError("exactly one of raw_text/error must be set")

    @property
    def ok(self) -> bool:
        return self.error is None


# --- token and cost model ----------------------------------------------------


def estimate_image_tokens(width_px: int, height_px: int) -> int:
    """258 tokens when both dimensions are under 384 px, else 1290."""
    if width_px <= 0 or height_px <= 0:
        raise RejectedInputError("image dimensions must be positive")
    if width_px < IMAGE_SMALL_MAX_PX and height_px < IMAGE_SMALL_MAX_PX:
        return IMAGE_TOKENS_SMALL
    return IMAGE_TOKENS_LARGE


def estimate_text_tokens(chars: int) -> int:
    return math.ceil(chars / TEXT_CHARS_PER_TOKEN)


def prompt_token_estimate(prompt: Prompt) -> tuple[int, int]:
    """(text_tokens, image_tokens) under the documented heuristics."""
    text_tokens = estimate_text_tokens(prompt.text_chars())
    image_tokens = sum(estimate_image_tokens(p.width_px, p.height_px) for p in prompt.image_parts())
    return text_tokens, image_tokens


@dataclass
class CostEstimate:
    text_tokens: int
    image_tokens: int
    cost: float
    currency: str


def estimate_cost(prompt: Prompt, pricing: Optional[PricingTable]) -> CostEstimate:
    """Input-token cost of one prompt under a per-backend pricing table.

    Text-side counts use the chars/4 heuristic and are order-of-magnitude
    estimates; image-side counts are exact under the 258/1290 rule.
    """
    if pricing is None:
        raise ConfigurationError("no pricing table configured for this backend")
    text_tokens, image_tokens = prompt_token_estimate(prompt)
    cost = text_tokens / 1000.0 * pricing.text_per_1k + image_tokens / 1000.0 * pricing.image_per_1k
    return CostEstimate(
        text_tokens=text_tokens,
        image_tokens=image_tokens,
        cost=cost,
        currency=pricing.currency,
    )


# --- backends ----------------------------------------------------------------


class Backend(Protocol):
    name: str

    def complete(self, prompt: Prompt, config: ModelConfig) -> str: ...


class OracleBackend:
    """Returns the stored ground-truth label for any prompt carrying an instance_id."""

    name = "oracle"

    def __init__(self, labels: dict[str, str]):
        self.labels = dict(labels)
        self.calls = 0

    def complete(self, prompt: Prompt, config: ModelConfig) -> str:
        self.calls += 1
        try:
            return self.labels[prompt.instance_id]
        except KeyError:
            raise BackendError(f"oracle has no label for instance {prompt.instance_id!r}")


class RandomBackend:
    """Uniform draw over the prompt schema's admissible answers, seeded per prompt."""

    name = "random"

    def __init__(self):
        self.calls = 0

    def complete(self, prompt: Prompt, config: ModelConfig) -> str:
        self.calls += 1
        digest = hashlib.sha256(prompt.to_bytes()).hexdigest()
        rng = Rng(derive_seed(config.seed, "random-backend", digest))
        schema = prompt.schema
        if isinstance(schema, ClassSchema):
            return rng.choice(list(schema.classes))[0]
        if isinstance(schema, IntRangeSchema):
            return str(schema.lo + int(rng.integers(schema.hi - schema.lo + 1)[0]))
        if isinstance(schema, ChoiceSchema):
            return str(1 + int(rng.integers(schema.count)[0]))
        raise BackendError(f"random backend cannot answer schema {type(schema).__name__}")


class ReplayBackend:
    """Serves only from the response cache; any real call is an error."""

    name = "replay"

    def __init__(self):
        self.calls = 0

    def complete(self, prompt: Prompt, config: ModelConfig) -> str:
        self.calls += 1
        raise BackendError(f"replay backend has no cached response for instance {prompt.instance_id!r}")


class HttpChatBackend:
    """Chat-style HTTPS JSON endpoint with mixed text/image parts.

    Credentials come from the environment variable named in the model config;
    transport failures and 429/5xx raise transiently (retried by the gateway).
    """

    name = "http"

    def __init__(self, session=None):
        import requests

        self.session = session or requests.Session()
        self.calls = 0

    def complete(self, prompt: Prompt, config: ModelConfig) -> str:
        import os

        import requests

        self.calls += 1
        if not config.endpoint:
            raise ConfigurationError("http backend requires an endpoint")
        headers = {"Content-Type": "application/json"}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if not key:
                raise ConfigurationError(f"credential env var {config.api_key_env!r} is not set")
            headers["Authorization"] = f"Bearer {key}"
        content = []
        for part in prompt.parts:
            if isinstance(part, ImagePart):
                if part.png_bytes is None:
                    raise BackendError("image part has no bytes to transmit")
                content.append(
                    {
                        "type": "image",
                        "media_type": "image/png",
                        "data": base64.b64encode(part.png_bytes).decode("ascii"),
                    }
                )
            else:
                content.append({"type": "text", "text": part.text})
        body = {
            "model": config.model,
            "temperature": config.temperature,
            "messages": [{"role": "user", "content": content}],
        }
        try:
            resp = self.session.post(config.endpoint, json=body, headers=headers, timeout=120)
        except requests.RequestException as exc:
            raise TransientBackendError(str(exc))
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}")
        if resp.status_code == 401 or resp.status_code == 403:
            raise ConfigurationError(f"authentication failed: HTTP {resp.status_code}")
        if resp.status_code != 200:
            payload = resp.text[:200]
            if "context" in payload.lower() and "length" in payload.lower():
                raise ContextLengthExceededError(payload)
            raise BackendError(f"HTTP {resp.status_code}: {payload}")
        data = resp.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError(f"malformed response: {str(data)[:200]}")


def make_backend(kind: str, oracle_labels: Optional[dict] = None) -> Backend:
    if kind == "oracle":
        return OracleBackend(oracle_labels or {})
    if kind == "random":
        return RandomBackend()
    if kind == "replay":
        return ReplayBackend()
    if kind == "http":
        return HttpChatBackend()
    raise ConfigurationError(f"unknown backend: {kind!r}")


# --- gateway -----------------------------------------------------------------


class _TokenBucket:
    """Simple pacing: at most ``rate`` acquisitions per second, burst ``rate``."""

    def __init__(self, rate: float):
        self.rate = rate
        self.tokens = rate
        self.stamp = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(self.rate, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


class Gateway:
    """Cached, retried, concurrency-bounded access to one backend."""

    def __init__(
        self,
        backend: Backend,
        config: ModelConfig,
        cache_dir: Optional[str | Path] = None,
        requests_per_s: float = 0.0,
    ):
        self.backend = backend
        self.config = config
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._inflight = threading.Semaphore(config.max_inflight)
        self._bucket = _TokenBucket(requests_per_s) if requests_per_s > 0 else None
        self._write_lock = threading.Lock()

    def cache_key(self, prompt: Prompt) -> str:
        h = hashlib.sha256()
        h.update(prompt.to_bytes())
        h.update(b"\x00")
        h.update(self.config.model.encode("utf-8"))
        h.update(b"\x00")
        h.update(repr(self.config.temperature).encode("utf-8"))
        return h.hexdigest()

    def _cache_file(self, key: str) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{key}.json"

    def invoke(self, prompt: Prompt) -> ModelResponse:
        text_tokens, image_tokens = prompt_token_estimate(prompt)
        total = text_tokens + image_tokens
        n_images = len(prompt.image_parts())
        key = self.cache_key(prompt)
        path = self._cache_file(key)
        if path is not None and path.exists():
            rec = json.loads(path.read_text(encoding="utf-8"))
            return ModelResponse(
                raw_text=rec.get("raw_text"),
                error=rec.get("error"),
                prompt_tokens_est=rec.get("prompt_tokens_est", total),
                image_count=rec.get("image_count", n_images),
                latency_s=0.0,
                backend=rec.get("backend", self.backend.name),
                model=self.config.model,
                cache_hit=True,
            )

        if self.config.max_context_tokens is not None and total > self.config.max_context_tokens:
            # do not even attempt the call; mirror the provider's refusal
            response = ModelResponse(
                raw_text=None,
                error=f"context_length_exceeded: {total} > {self.config.max_context_tokens}",
                prompt_tokens_est=total,
                image_count=n_images,
                latency_s=0.0,
                backend=self.backend.name,
                model=self.config.model,
            )
            self._store(path, response)
            return response

        start = time.monotonic()
        raw_text = None
        error = None
        with self._inflight:
            for attempt in range(self.config.max_retries + 1):
                if self._bucket is not None:
                    self._bucket.acquire()
                try:
                    raw_text = self.backend.complete(prompt, self.config)
                    break
                except TransientBackendError as exc:
                    error = f"transient: {exc}"
                    if attempt < self.config.max_retries:
                        time.sleep(self.config.retry_base_s * (2**attempt))
                except ContextLengthExceededError as exc:
                    error = f"context_length_exceeded: {exc}"
                    break
                except BackendError as exc:
                    error = str(exc)
                    break
        response = ModelResponse(
            raw_text=raw_text,
            error=None if raw_text is not None else (error or "unknown backend failure"),
            prompt_tokens_est=total,
            image_count=n_images,
            latency_s=time.monotonic() - start,
            backend=self.backend.name,
            model=self.config.model,
        )
        self._store(path, response)
        return response

    def _store(self, path: Optional[Path], response: ModelResponse) -> None:
        if path is None:
            return
        rec = {
            "raw_text": response.raw_text,
            "error": response.error,
            "prompt_tokens_est": response.prompt_tokens_est,
            "image_count": response.image_count,
            "latency_s": response.latency_s,
            "backend": response.backend,
            "model": response.model,
        }
        with self._write_lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(rec, sort_keys=True), encoding="utf-8")
            tmp.replace(path)

"""Clients for networked model inference.

Two backend flavors share one contract: an HTTP client speaking a
chat-completions-style protocol (plus a minimal JSON segmentation endpoint),
and a scripted in-process mock for tests and offline runs (see mocks.py).
Retry, backoff, and per-profile admission control live in the shared base so
both flavors behave identically under failure.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import random
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Union

import httpx
import numpy as np
from PIL import Image

from .errors import (
    DecodeError,
    PreconditionError,
    ProtocolError,
    TransportError,
    ValidationError,
)
from .masks import BinaryMask, PointPrompt, rle_from_text

CHAT_ROLES = frozenset({"tagger", "captioner", "verifier", "merger"})
SEGMENT_ROLES = frozenset({"panoptic_segmenter", "promptable_segmenter"})
ALL_ROLES = CHAT_ROLES | SEGMENT_ROLES

API_KEY_ENV_PREFIX = "DG_API_KEY_"

# HTTP statuses worth another attempt; everything else non-2xx is final.
RETRYABLE_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class BackendProfile:
    """A named, role-tagged inference endpoint."""

    name: str
    endpoint: str
    model_id: str
    role: str
    max_in_flight: int = 4
    timeout: float = 60.0
    retry_limit: int = 3

    def __post_init__(self):
        if self.role not in ALL_ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")

    @property
    def api_key_env(self) -> str:
        sanitized = "".join(c if c.isalnum() else "_" for c in self.name.upper())
        return API_KEY_ENV_PREFIX + sanitized


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    media_type: str = "image/png"

    def digest(self) -> str:
        return hashlib.sha256(self.data).hexdigest()


ContentPart = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class Turn:
    role: str  # "user" or "assistant"
    parts: tuple[ContentPart, ...]


@dataclass(frozen=True)
class ChatRequest:
    turns: tuple[Turn, ...]
    system_text: str | None = None
    temperature: float = 0.2
    max_output_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self):
        if not self.turns:
            raise ValueError("chat request needs at least one turn")
        for turn in self.turns:
            if turn.role != "user" and any(isinstance(p, ImagePart) for p in turn.parts):
                raise ValueError("images are only allowed in user turns")

    def text_content(self) -> str:
        return "\n".join(
            p.text for t in self.turns for p in t.parts if isinstance(p, TextPart)
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str  # stop | length | error
    prompt_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0

    def __post_init__(self):
        if self.finish_reason == "stop" and not self.text:
            raise ValueError("finish_reason=stop implies non-empty text")


@dataclass(frozen=True)
class SegmentRequest:
    image: np.ndarray  # (H, W, 3) uint8
    mode: str  # "panoptic" | "points"; points mode with no points = everything mode
    vocabulary: tuple[str, ...] = ()
    points: tuple[PointPrompt, ...] = ()

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) image, got {self.image.shape}")
        if self.mode not in ("panoptic", "points"):
            raise ValueError(f"unknown segment mode {self.mode!r}")

    @property
    def image_size(self) -> tuple[int, int]:
        return self.image.shape[:2]


@dataclass(frozen=True)
class SegmentCandidate:
    mask: BinaryMask
    label: str | None
    score: float


def image_png_part(image: np.ndarray) -> ImagePart:
    """Encode an (H, W, 3) uint8 array into a PNG content part."""
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return ImagePart(data=buf.getvalue(), media_type="image/png")


def _image_digest(image: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(image.shape).encode())
    h.update(np.ascontiguousarray(image).tobytes())
    return h.hexdigest()


def chat_fingerprint(role: str, request: ChatRequest) -> str:
    doc = {
        "kind": "chat",
        "role": role,
        "system": request.system_text,
        "turns": [
            {
                "role": t.role,
                "parts": [
                    {"text": p.text}
                    if isinstance(p, TextPart)
                    else {"image": p.digest(), "media_type": p.media_type}
                    for p in t.parts
                ],
            }
            for t in request.turns
        ],
        "temperature": request.temperature,
        "max_output_tokens": request.max_output_tokens,
        "seed": request.seed,
    }
    return _digest_doc(doc)


def segment_fingerprint(role: str, request: SegmentRequest) -> str:
    doc = {
        "kind": "segment",
        "role": role,
        "image": _image_digest(request.image),
        "size": list(request.image_size),
        "mode": request.mode,
        "vocabulary": list(request.vocabulary),
        "points": [[p.x, p.y, p.polarity] for p in request.points],
    }
    return _digest_doc(doc)


def _digest_doc(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def chat_summary(role: str, request: ChatRequest) -> str:
    bits = [f"chat[{role}]"]
    for turn in request.turns:
        for part in turn.parts:
            if isinstance(part, TextPart):
                bits.append(part.text)
            else:
                bits.append(f"[image:{part.digest()[:8]}]")
    return " | ".join(bits)


def segment_summary(role: str, request: SegmentRequest) -> str:
    h, w = request.image_size
    return (
        f"segment[{role}] mode={request.mode} size={h}x{w}"
        f" vocab={','.join(request.vocabulary)} points={len(request.points)}"
    )


class Backend:
    """Shared retry / backoff / admission-control behavior.

    Subclasses implement one-shot ``_chat_once`` / ``_segment_once``;
    the base wraps them in at most ``retry_limit + 1`` attempts with
    exponential backoff (base 1 s, factor 2, full jitter) and a per-profile
    in-flight ceiling. Only TransportError triggers a retry.
    """

    def __init__(self, sleep=time.sleep, rng: random.Random | None = None,
                 backoff_base: float = 1.0):
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._backoff_base = backoff_base
        self._limiters: dict[str, threading.BoundedSemaphore] = {}
        self._limiters_lock = threading.Lock()

    def chat(self, profile: BackendProfile, request: ChatRequest) -> ChatResponse:
        if profile.role not in CHAT_ROLES:
            raise PreconditionError(f"profile {profile.name} has non-chat role {profile.role}")
        return self._attempts(profile, lambda: self._chat_once(profile, request))

    def segment(self, profile: BackendProfile, request: SegmentRequest) -> list[SegmentCandidate]:
        if profile.role not in SEGMENT_ROLES:
            raise PreconditionError(
                f"profile {profile.name} has non-segmentation role {profile.role}"
            )
        candidates = self._attempts(profile, lambda: self._segment_once(profile, request))
        for cand in candidates:
            if cand.mask.size != request.image_size:
                raise ValidationError(
                    f"{profile.name}: mask {cand.mask.size} does not match "
                    f"request image {request.image_size}"
                )
            if not 0.0 <= cand.score <= 1.0:
                raise ValidationError(f"{profile.name}: score {cand.score} outside [0, 1]")
        return candidates

    def _attempts(self, profile: BackendProfile, once):
        last_error = None
        for attempt in range(profile.retry_limit + 1):
            if attempt:
                delay = self._rng.uniform(0, self._backoff_base * 2 ** (attempt - 1))
                self._sleep(delay)
            try:
                with self._admit(profile):
                    return once()
            except TransportError as exc:
                last_error = exc
        raise TransportError(
            f"{profile.name}: giving up after {profile.retry_limit + 1} attempts: {last_error}"
        ) from last_error

    @contextmanager
    def _admit(self, profile: BackendProfile):
        with self._limiters_lock:
            limiter = self._limiters.get(profile.name)
            if limiter is None:
                limiter = threading.BoundedSemaphore(profile.max_in_flight)
                self._limiters[profile.name] = limiter
        with limiter:
            yield

    def _chat_once(self, profile: BackendProfile, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def _segment_once(
        self, profile: BackendProfile, request: SegmentRequest
    ) -> list[SegmentCandidate]:
        raise NotImplementedError


class HttpBackend(Backend):
    """HTTP client: chat completions plus the JSON segmentation endpoint.

    Bearer tokens come from ``DG_API_KEY_{NAME}`` (profile name uppercased,
    non-alphanumerics mapped to underscores). Real segmentation servers are
    expected to sit behind a thin adapter exposing POST /segment.
    """

    def __init__(self, transport: httpx.BaseTransport | None = None, env: dict | None = None,
                 **kwargs):
        super().__init__(**kwargs)
        self._env = env if env is not None else os.environ
        self._client = httpx.Client(transport=transport)

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def _headers(self, profile: BackendProfile) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        key = self._env.get(profile.api_key_env)
        if key:
            headers["authorization"] = f"Bearer {key}"
        return headers

    def _post(self, profile: BackendProfile, url: str, payload: dict) -> dict:
        try:
            response = self._client.post(
                url, json=payload, headers=self._headers(profile), timeout=profile.timeout
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"{profile.name}: {exc}") from exc
        if response.status_code in RETRYABLE_STATUSES:
            raise TransportError(f"{profile.name}: HTTP {response.status_code}")
        if response.status_code < 200 or response.status_code >= 300:
            raise ProtocolError(
                f"{profile.name}: HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()
        except ValueError as exc:
            raise DecodeError(f"{profile.name}: body is not JSON") from exc

    def _chat_once(self, profile: BackendProfile, request: ChatRequest) -> ChatResponse:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        for turn in request.turns:
            parts = []
            for part in turn.parts:
                if isinstance(part, TextPart):
                    parts.append({"type": "text", "text": part.text})
                else:
                    uri = f"data:{part.media_type};base64,{base64.b64encode(part.data).decode()}"
                    parts.append({"type": "image_url", "image_url": {"url": uri}})
            messages.append({"role": turn.role, "content": parts})
        payload = {
            "model": profile.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed

        started = time.perf_counter()
        body = self._post(profile, profile.endpoint.rstrip("/") + "/v1/chat/completions", payload)
        latency = time.perf_counter() - started
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"] or ""
            finish = choice.get("finish_reason", "stop")
        except (KeyError, IndexError, TypeError) as exc:
            raise DecodeError(f"{profile.name}: malformed chat completion body") from exc
        if finish not in ("stop", "length"):
            finish = "error"
        usage = body.get("usage") or {}
        return ChatResponse(
            text=text,
            finish_reason=finish if (text or finish != "stop") else "error",
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            latency=latency,
        )

    def _segment_once(
        self, profile: BackendProfile, request: SegmentRequest
    ) -> list[SegmentCandidate]:
        png = image_png_part(request.image)
        payload = {
            "image": base64.b64encode(png.data).decode(),
            "mode": request.mode,
            "vocabulary": list(request.vocabulary),
            "points": [{"x": p.x, "y": p.y, "polarity": p.polarity} for p in request.points],
        }
        body = self._post(profile, profile.endpoint.rstrip("/") + "/segment", payload)
        try:
            raw_masks = body["masks"]
            out = []
            for item in raw_masks:
                out.append(
                    SegmentCandidate(
                        mask=rle_from_text(item["rle"]),
                        label=item.get("label"),
                        score=float(item["score"]),
                    )
                )
            return out
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"{profile.name}: malformed segmentation body") from exc

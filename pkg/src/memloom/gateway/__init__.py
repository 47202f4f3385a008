"""Uniform access to chat and embedding backends.

The gateway owns the template registry, validates placeholder binding, and
normalizes every embedding to unit length. Two backend kinds exist: ``mock``
(pure, offline, deterministic) and ``remote`` (OpenAI-compatible HTTP).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, EmptyInput, TemplateUnbound
from ..text import tokenize
from .mock import MOCK_DIMENSION, TOPIC_CHANGE_MARKER, MockBackend
from .remote import RemoteBackend, TransientBackendError, BackendTimeout
from .templates import TEMPLATE_IDS, PromptTemplate, load_templates

__all__ = [
    "BackendConfig",
    "ChatRequest",
    "ChatResponse",
    "EmbeddingVector",
    "LlmGateway",
    "MockBackend",
    "RemoteBackend",
    "TransientBackendError",
    "BackendTimeout",
    "TOPIC_CHANGE_MARKER",
    "MOCK_DIMENSION",
    "TEMPLATE_IDS",
    "create_gateway",
]

_NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ChatRequest:
    template_id: str
    variables: dict[str, str]
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        if self.template_id not in TEMPLATE_IDS:
            raise TemplateUnbound(f"unknown template id {self.template_id!r}")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int


class EmbeddingVector:
    """Unit-norm embedding; wraps a read-only float64 array."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("embedding must be one-dimensional")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ValueError("cannot normalize a zero vector")
        if abs(norm - 1.0) > _NORM_TOLERANCE:
            arr = arr / norm
        arr = arr.copy()
        arr.flags.writeable = False
        self.values = arr

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.dimension


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # "mock" | "remote"
    endpoint_url: str = ""
    chat_model: str = "gpt-4o-mini"
    embed_model: str = "text-embedding-3-small"
    api_key_env: str = "OPENAI_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 2
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"backend kind must be mock or remote, got {self.kind!r}")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class LlmGateway:
    """Template-aware front door to one configured backend."""

    def __init__(self, backend, dimension: int, templates: dict[str, PromptTemplate] | None = None):
        self.backend = backend
        self.dimension = dimension
        self.templates = templates or load_templates()

    def chat(self, request: ChatRequest) -> ChatResponse:
        template = self.templates[request.template_id]
        prompt = template.render(request.variables)  # raises TemplateUnbound
        result = self.backend.chat(
            request.template_id,
            prompt,
            request.variables,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
        )
        if isinstance(result, str):
            return ChatResponse(result, len(tokenize(prompt)), len(tokenize(result)))
        return ChatResponse(result["text"], result["prompt_tokens"], result["completion_tokens"])

    def ask(self, template_id: str, **variables: str) -> str:
        """Chat shorthand returning just the reply text."""
        return self.chat(ChatRequest(template_id, variables)).text

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmptyInput("embed() requires at least one text")
        raw = self.backend.embed(list(texts))
        out = []
        for vec in raw:
            ev = EmbeddingVector(vec)
            if ev.dimension != self.dimension:
                raise DimensionMismatch(f"backend returned dimension {ev.dimension}, engine uses {self.dimension}")
            out.append(ev)
        return out

    def embed_one(self, text: str) -> EmbeddingVector:
        return self.embed([text])[0]


def create_gateway(config: BackendConfig, dimension: int) -> LlmGateway:
    if config.kind == "mock":
        return LlmGateway(MockBackend(dimension), dimension)
    backend = RemoteBackend(
        endpoint_url=config.endpoint_url,
        chat_model=config.chat_model,
        embed_model=config.embed_model,
        api_key_env=config.api_key_env,
        timeout_s=config.timeout_s,
        max_retries=config.max_retries,
        max_in_flight=config.max_in_flight,
    )
    return LlmGateway(backend, dimension)

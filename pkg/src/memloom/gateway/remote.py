"""Remote chat/embedding backend speaking the OpenAI-compatible HTTP shape.

Transport is injectable so tests can exercise retries, timeouts, and the
in-flight admission limit without a network.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from typing import Callable, Optional

import numpy as np
import requests

from ..errors import BackendUnavailable, Timeout

logger = logging.getLogger(__name__)

# transport(url, headers, payload, timeout_s) -> parsed JSON dict
Transport = Callable[[str, dict, dict, float], dict]


class TransientBackendError(Exception):
    """Retryable failure (connection refused, 5xx, rate limit)."""


class BackendTimeout(TransientBackendError):
    """Retryable failure specifically caused by a timeout."""


def _requests_transport(url: str, headers: dict, payload: dict, timeout_s: float) -> dict:
    try:
        response = requests.post(url, headers=headers, json=payload, timeout=timeout_s)
    except requests.Timeout as exc:
        raise BackendTimeout(str(exc)) from exc
    except requests.RequestException as exc:
        raise TransientBackendError(str(exc)) from exc
    if response.status_code >= 500 or response.status_code == 429:
        raise TransientBackendError(f"HTTP {response.status_code}")
    if response.status_code >= 400:
        raise BackendUnavailable(f"HTTP {response.status_code}: {response.text[:200]}")
    return response.json()


class RemoteBackend:
    """OpenAI-shape backend with bounded retries and bounded parallelism."""

    def __init__(
        self,
        endpoint_url: str,
        chat_model: str,
        embed_model: str,
        api_key_env: str = "",
        timeout_s: float = 30.0,
        max_retries: int = 2,
        max_in_flight: int = 4,
        transport: Optional[Transport] = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_base_s: float = 0.5,
    ):
        self.endpoint_url = endpoint_url.rstrip("/")
        self.chat_model = chat_model
        self.embed_model = embed_model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self._transport = transport or _requests_transport
        self._sleep = sleep
        self._backoff_base_s = backoff_base_s
        self._admission = threading.BoundedSemaphore(max(1, max_in_flight))

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "") if self.api_key_env else ""
        if key:
            # The key never appears in logs or errors.
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.endpoint_url}{path}"
        last_exc: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            if attempt > 0:
                self._sleep(self._backoff_base_s * (2 ** (attempt - 1)))
            with self._admission:
                try:
                    return self._transport(url, self._headers(), payload, self.timeout_s)
                except TransientBackendError as exc:
                    last_exc = exc
                    logger.warning("backend attempt %d/%d failed: %s", attempt + 1, self.max_retries + 1, exc)
        if isinstance(last_exc, BackendTimeout):
            raise Timeout(f"backend timed out after {self.max_retries + 1} attempts") from last_exc
        raise BackendUnavailable(f"backend unavailable after {self.max_retries + 1} attempts") from last_exc

    def chat(self, template_id: str, prompt: str, variables: dict[str, str],
             temperature: float = 0.0, max_tokens: int = 1024) -> dict:
        system, _, user = prompt.partition("\n\n")
        data = self._post(
            "/chat/completions",
            {
                "model": self.chat_model,
                "temperature": temperature,
                "max_tokens": max_tokens,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": user},
                ],
            },
        )
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed chat response: {exc}") from exc
        usage = data.get("usage") or {}
        return {
            "text": text,
            "prompt_tokens": int(usage.get("prompt_tokens", 0)),
            "completion_tokens": int(usage.get("completion_tokens", 0)),
        }

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        data = self._post("/embeddings", {"model": self.embed_model, "input": texts})
        try:
            rows = sorted(data["data"], key=lambda d: d["index"])
            vectors = [np.asarray(r["embedding"], dtype=np.float64) for r in rows]
        except (KeyError, TypeError) as exc:
            raise BackendUnavailable(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != len(texts):
            raise BackendUnavailable(f"expected {len(texts)} embeddings, got {len(vectors)}")
        return vectors

"""Minimal chat-completions HTTP client used by the optional chat annotator.

Endpoint, model, and credentials come from environment variables so nothing
secret ever lands in config files or artifacts:

    GRIDNAV_CHAT_BASE_URL   e.g. https://llm.example.com/v1
    GRIDNAV_CHAT_MODEL      model identifier sent in the request body
    GRIDNAV_CHAT_API_KEY    optional bearer token
    GRIDNAV_CHAT_TIMEOUT_S  optional request timeout (default 30)
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import requests

from .errors import ChatParseError, ChatServiceError, ChatTransportError

RETRYABLE_STATUSES = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class ChatConfig:
    base_url: str
    model: str
    api_key: str = ""
    timeout_s: float = 30.0
    max_attempts: int = 3
    backoff_base_s: float = 1.0
    temperature: float = 0.0

    @classmethod
    def from_env(cls, env=None) -> "ChatConfig":
        env = os.environ if env is None else env
        base_url = env.get("GRIDNAV_CHAT_BASE_URL", "")
        model = env.get("GRIDNAV_CHAT_MODEL", "")
        if not base_url or not model:
            raise ChatTransportError(
                "chat backend needs GRIDNAV_CHAT_BASE_URL and GRIDNAV_CHAT_MODEL set"
            )
        return cls(
            base_url=base_url,
            model=model,
            api_key=env.get("GRIDNAV_CHAT_API_KEY", ""),
            timeout_s=float(env.get("GRIDNAV_CHAT_TIMEOUT_S", "30")),
        )


def chat_complete(config: ChatConfig, messages: list[dict]) -> str:
    """POST one chat-completion request; retry transient failures with
    exponential backoff; return the assistant message text."""
    url = config.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    body = {
        "model": config.model,
        "messages": messages,
        "temperature": config.temperature,
    }

    last_error: Exception | None = None
    for attempt in range(config.max_attempts):
        if attempt:
            time.sleep(config.backoff_base_s * 2 ** (attempt - 1))
        try:
            response = requests.post(url, json=body, headers=headers, timeout=config.timeout_s)
        except requests.RequestException as exc:
            last_error = ChatTransportError(f"chat request failed: {exc}")
            continue
        if response.status_code in RETRYABLE_STATUSES:
            last_error = ChatServiceError(
                f"chat endpoint returned {response.status_code}", response.status_code
            )
            continue
        if response.status_code != 200:
            raise ChatServiceError(
                f"chat endpoint returned {response.status_code}: {response.text[:200]}",
                response.status_code,
            )
        try:
            doc = response.json()
            content = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ChatParseError(
                f"chat reply is not a completion object: {exc}", raw=response.text[:500]
            ) from exc
        if not isinstance(content, str):
            raise ChatParseError("chat reply content is not text", raw=str(content)[:500])
        return content
    raise last_error if last_error is not None else ChatTransportError("chat request failed")

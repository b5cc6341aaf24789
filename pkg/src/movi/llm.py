"""Chat-completion client for trajectory planning and trajectory judging.

Wire format (OpenAI-compatible)::

    POST {base_url}/chat/completions
    {"model": ..., "temperature": 0.0,
     "messages": [{"role": "system", ...}?, {"role": "user", "content": ...}]}

    -> {"choices": [{"message": {"role": "assistant", "content": "..."}}]}

Tests and the ``--stub`` CLI flag inject an ``httpx`` transport instead of
hitting the network.
"""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass

import httpx

from .errors import EmptyPlanError, EndpointError, JudgeParseError, ParameterError
from .trajectory import DEFAULT_FRAMES, format_tracks

log = logging.getLogger(__name__)

ENV_BASE_URL = "MOVI_LLM_BASE_URL"
ENV_API_KEY = "MOVI_LLM_API_KEY"
ENV_MODEL = "MOVI_LLM_MODEL"

JUDGE_TEMPLATE = (
    "Here's a possible trajectory for a {frames}-frame video of {prompt}:\n\n"
    "{trajectories}\n\n"
    "Rate this trajectory, consider realisticness, physics, smoothness and consistency. "
    "Give a combined score only."
)

_RETRY_STATUS = {429, 500, 502, 503, 504}


@dataclass
class LlmEndpoint:
    base_url: str = "http://localhost:8000/v1"
    model: str = "llama-3.1-405b-instruct"
    api_key_env: str = ENV_API_KEY
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    backoff: float = 0.5
    system: str | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ParameterError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_retries < 0:
            raise ParameterError(f"max_retries must be >= 0, got {self.max_retries}")

    @classmethod
    def from_env(cls, **overrides) -> "LlmEndpoint":
        """Defaults, then explicit overrides, then the ``MOVI_LLM_*`` variables."""
        ep = cls(**overrides)
        ep.base_url = os.environ.get(ENV_BASE_URL, ep.base_url)
        ep.model = os.environ.get(ENV_MODEL, ep.model)
        return ep

    def messages(self, user_text: str) -> list[dict]:
        msgs = [{"role": "system", "content": self.system}] if self.system else []
        msgs.append({"role": "user", "content": user_text})
        return msgs


def chat(endpoint: LlmEndpoint, user_text: str, transport: httpx.BaseTransport | None = None) -> str:
    """Send one user message and return the assistant text, retrying transport failures."""
    headers = {}
    token = os.environ.get(endpoint.api_key_env)
    if token:
        headers["Authorization"] = f"Bearer {token}"
    body = {"model": endpoint.model, "temperature": endpoint.temperature, "messages": endpoint.messages(user_text)}
    url = endpoint.base_url.rstrip("/") + "/chat/completions"

    last_error: Exception | None = None
    with httpx.Client(transport=transport, timeout=endpoint.timeout) as client:
        for attempt in range(endpoint.max_retries + 1):
            if attempt:
                time.sleep(endpoint.backoff * 2 ** (attempt - 1))
            try:
                resp = client.post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = exc
                log.warning("LLM request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code in _RETRY_STATUS:
                last_error = EndpointError(f"HTTP {resp.status_code}")
                log.warning("LLM endpoint returned HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise EndpointError(f"LLM endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise EndpointError(f"malformed chat-completion response: {exc}") from exc
    raise EndpointError(f"LLM endpoint unreachable after {endpoint.max_retries + 1} attempts: {last_error}")


def request_trajectories(
    endpoint: LlmEndpoint, prompt_text: str, transport: httpx.BaseTransport | None = None
) -> str:
    text = chat(endpoint, prompt_text, transport)
    if not text.strip():
        raise EmptyPlanError("LLM returned an empty plan")
    return text


def stub_transport(reply: str) -> httpx.MockTransport:
    """A transport that answers every chat request with ``reply``."""

    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": reply}}]})

    return httpx.MockTransport(handler)


def render_judge_prompt(scene_prompt: str, tracks, frames: int = DEFAULT_FRAMES) -> str:
    trajectories = format_tracks(tracks).replace("\n", "\n\n")
    return JUDGE_TEMPLATE.format(frames=frames, prompt=scene_prompt, trajectories=trajectories)


_NUMBER_RE = re.compile(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)")


def parse_judge_score(reply: str) -> float:
    """First number in ``reply`` that lies in [0, 10]."""
    for m in _NUMBER_RE.finditer(reply):
        value = float(m.group())
        if 0.0 <= value <= 10.0:
            return value
    raise JudgeParseError(f"no score in [0, 10] found in judge reply: {reply!r}")


def score_trajectory_llm(
    endpoint: LlmEndpoint,
    scene_prompt: str,
    tracks,
    frames: int = DEFAULT_FRAMES,
    transport: httpx.BaseTransport | None = None,
) -> float:
    reply = chat(endpoint, render_judge_prompt(scene_prompt, tracks, frames), transport)
    return parse_judge_score(reply)

"""Reasoner backends. A reasoner turns one fully specified request into text.

Every call carries its whole context; backends keep no conversation state.
``meta`` is harness bookkeeping (instance id, stage, earlier replies) and is
never sent over the wire.
"""

from __future__ import annotations

import base64
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol, Sequence

import httpx

from grassland.dynamics import CHOICE_TEXT, outcome_to_choice, simulate
from grassland.errors import ConfigError, TransportError
from grassland.generator import Instance, Task
from grassland.prompts import (
    CAN_NOT_PASS,
    FINISH_TOKEN,
    TOOL_NAMES,
    ImagePart,
    Part,
    TextPart,
    format_route,
    parse_step_action,
)
from grassland.render import encode_png

log = logging.getLogger(__name__)

API_KEY_ENV = "GRASSLAND_API_KEY"


@dataclass(frozen=True)
class Request:
    system: str
    parts: tuple[Part, ...]
    max_tokens: int
    temperature: float
    meta: Mapping[str, Any] = field(default_factory=dict)


class Reasoner(Protocol):
    def complete(self, request: Request) -> str: ...


def to_wire(request: Request, model: str) -> dict[str, Any]:
    """The JSON document posted to a remote endpoint."""
    messages = []
    if request.system:
        messages.append({"role": "system", "content": [{"type": "text", "text": request.system}]})
    content = []
    for part in request.parts:
        if isinstance(part, TextPart):
            content.append({"type": "text", "text": part.text})
        else:
            data = base64.b64encode(encode_png(part.frame)).decode("ascii")
            content.append({"type": "image", "data": data})
    messages.append({"role": "user", "content": content})
    return {
        "model": model,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "messages": messages,
    }


class ScriptedReasoner:
    """Replays canned replies, either one shared list or one list per instance id."""

    def __init__(self, script: Sequence[str] | Mapping[str, Sequence[str]]):
        self._shared = None if isinstance(script, Mapping) else list(script)
        self._per_instance = {k: list(v) for k, v in script.items()} if isinstance(script, Mapping) else {}
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, request: Request) -> str:
        key = request.meta.get("instance_id", "")
        replies = self._shared if self._shared is not None else self._per_instance.get(key)
        if replies is None:
            raise TransportError(f"no scripted replies for instance {key!r}")
        with self._lock:
            i = self._cursor.get(key, 0)
            self._cursor[key] = i + 1
        if i >= len(replies):
            raise TransportError(f"scripted replies exhausted for instance {key!r} after {len(replies)} calls")
        return replies[i]


class RuleHub:
    """Deterministic stand-in for the scheduling hub: canonical plan, always continue."""

    def complete(self, request: Request) -> str:
        if request.meta.get("stage") == "decide":
            return "CONTINUE"
        return " -> ".join(TOOL_NAMES)


class OracleReasoner:
    """Answers from ground truth; closes the loop for harness self-tests.

    In D2R iteration it walks the instance's action sequence (judgment) or
    safe route (navigation) one action per call, counting its own earlier
    action replies in ``meta['history']`` to know where it is.
    """

    def __init__(self, instances: Mapping[str, Instance] | Sequence[Instance]):
        if not isinstance(instances, Mapping):
            instances = {inst.id: inst for inst in instances}
        self.instances = dict(instances)
        self._hub = RuleHub()

    def _answer(self, inst: Instance) -> str:
        if inst.task is Task.JUDGMENT:
            letter = outcome_to_choice(inst.ground_truth)
            return f"So the answer is: {letter}. {CHOICE_TEXT[letter]}"
        return format_route(inst.ground_truth.route)

    def complete(self, request: Request) -> str:
        stage = request.meta.get("stage", "single")
        if stage in ("plan", "decide"):
            return self._hub.complete(request)
        inst = self.instances[request.meta["instance_id"]]
        if stage != "iterate":
            return self._answer(inst)
        done = sum(1 for r in request.meta.get("history", ()) if parse_step_action(r) is not None)
        if inst.task is Task.JUDGMENT:
            trace = simulate(inst.scenario, inst.actions)
            if done >= trace.steps_executed:
                return f"{self._answer(inst)} {FINISH_TOKEN}"
            reply = inst.actions[done].command
            return f"{reply} {CAN_NOT_PASS}" if trace.blocked_flags[done] else reply
        route = inst.ground_truth.route
        if done >= len(route):
            return f"{format_route(route)} {FINISH_TOKEN}"
        return route[done].command


class RemoteReasoner:
    """HTTP client for a hosted model.

    Posts the :func:`to_wire` document to ``base_url`` and expects ``{"text": ...}``
    back. Transport errors, 429 and 5xx are retried with exponential backoff;
    ``min_interval`` throttles request starts across threads.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.5,
        min_interval: float = 0.0,
        transport: httpx.BaseTransport | None = None,
    ):
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not api_key:
            raise ConfigError(f"remote reasoner needs an API key in ${API_KEY_ENV}")
        self.base_url = base_url
        self.model = model
        self.retries = retries
        self.backoff = backoff
        self.min_interval = min_interval
        self._client = httpx.Client(
            timeout=timeout,
            headers={"Authorization": f"Bearer {api_key}"},
            transport=transport,
        )
        self._rate_lock = threading.Lock()
        self._next_slot = 0.0

    def _throttle(self) -> None:
        if self.min_interval <= 0:
            return
        with self._rate_lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self.min_interval
        if wait > 0:
            time.sleep(wait)

    def complete(self, request: Request) -> str:
        body = to_wire(request, self.model)
        last: str = ""
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self._throttle()
            try:
                resp = self._client.post(self.base_url, json=body)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("request to %s failed (attempt %d): %s", self.base_url, attempt + 1, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise TransportError(f"{self.base_url} rejected request: HTTP {resp.status_code}")
            try:
                text = resp.json()["text"]
            except (ValueError, KeyError, TypeError):
                raise TransportError(f"{self.base_url} returned a malformed response") from None
            if not isinstance(text, str):
                raise TransportError(f"{self.base_url} returned non-text reply")
            return text
        raise TransportError(f"{self.base_url}: giving up after {self.retries + 1} attempts ({last})")

    def close(self) -> None:
        self._client.close()


def count_words(parts: Sequence[Part], system: str = "") -> tuple[int, int]:
    """Whitespace word count of the text parts and number of images in a request."""
    words = len(system.split())
    images = 0
    for p in parts:
        if isinstance(p, ImagePart):
            images += 1
        else:
            words += len(p.text.split())
    return words, images

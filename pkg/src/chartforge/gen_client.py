"""Chat-completion clients plus the spec expansion and repair loops.

The HTTP client speaks the OpenAI-compatible chat-completions wire format
(JSON over HTTP, messages array, optional base64 image part) against any
endpoint. Retries are exponential with jitter: 0.5s base, factor 2,
+/-20%. Every test-facing path runs against MockChatClient, which shares
the retry machinery and is scriptable per prompt hash, as a global
sequence, or with a handler function.

Candidate charts produced by expansion are declarative spec JSON, not
executable plotting code: validation is deterministic and sandbox-free,
and the spec itself remains the ground truth. Candidates that never pass
validation are abandoned and can never reach a dataset.
"""

from __future__ import annotations

import base64
import json
import os
import random
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .chart_model import ChartSpec, Violation, spec_dumps, spec_from_dict, validate_spec
from .errors import AuthError, ChartforgeError, ConfigError, InputError, TransportError
from .serialize import content_hash

BACKOFF_BASE_S = 0.5
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER = 0.2

SYSTEM_QA = "You answer questions about charts with a single numeric estimate."
SYSTEM_SPEC_GEN = "You write chart specifications as strict JSON."


def load_prompt(name: str) -> str:
    return resources.files("chartforge").joinpath(f"prompts/{name}.txt").read_text(encoding="utf-8")


def prompt_hash(system_prompt: str, user_prompt: str) -> str:
    return content_hash([system_prompt, user_prompt])


@dataclass
class ClientConfig:
    endpoint_url: str = "http://localhost:8000/v1/chat/completions"
    model_name: str = "qwen2.5-vl-32b-instruct"
    api_key_env: str = "CHARTFORGE_API_KEY"
    max_retries: int = 3
    timeout_s: float = 60.0
    temperature: float = 0.0
    max_tokens: int = 1024

    def validate(self) -> None:
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.timeout_s <= 0:
            raise ConfigError("timeout must be positive")


class _TransientFailure(Exception):
    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class BaseClient:
    """Retry/backoff wrapper; subclasses implement a single send attempt."""

    def __init__(self, config: Optional[ClientConfig] = None, sleep: Callable[[float], None] = time.sleep):
        self.config = config or ClientConfig()
        self.config.validate()
        self._sleep = sleep
        self.send_count = 0
        self._lock = threading.Lock()

    def complete(self, system_prompt: str, user_prompt: str, image=None,
                 temperature: Optional[float] = None) -> str:
        attempts = self.config.max_retries + 1
        last: Optional[_TransientFailure] = None
        for attempt in range(attempts):
            try:
                with self._lock:
                    self.send_count += 1
                return self._send(system_prompt, user_prompt, image, temperature)
            except _TransientFailure as exc:
                last = exc
                if attempt < attempts - 1:
                    self._sleep(_backoff_delay(attempt))
        raise TransportError(
            f"request failed after {attempts} attempts: {last}",
            last_status=getattr(last, "status", None),
        )

    def _send(self, system_prompt, user_prompt, image, temperature) -> str:
        raise NotImplementedError


def _backoff_delay(attempt: int) -> float:
    jitter = 1.0 + random.uniform(-BACKOFF_JITTER, BACKOFF_JITTER)
    return BACKOFF_BASE_S * (BACKOFF_FACTOR ** attempt) * jitter


class HttpChatClient(BaseClient):
    """OpenAI-compatible chat-completions client over HTTP."""

    def _send(self, system_prompt, user_prompt, image, temperature) -> str:
        import requests

        content = user_prompt
        if image is not None:
            content = [
                {"type": "text", "text": user_prompt},
                {"type": "image_url", "image_url": {"url": _image_data_url(image)}},
            ]
        payload = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": content},
            ],
            "temperature": self.config.temperature if temperature is None else temperature,
            "max_tokens": self.config.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = requests.post(
                self.config.endpoint_url, json=payload, headers=headers,
                timeout=self.config.timeout_s,
            )
        except requests.RequestException as exc:
            raise _TransientFailure(f"request error: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code in (408, 429) or resp.status_code >= 500:
            raise _TransientFailure(f"HTTP {resp.status_code}", status=resp.status_code)
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}",
                                 last_status=resp.status_code)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed completion payload: {exc}",
                                 last_status=resp.status_code) from exc


_MIME_BY_SUFFIX = {".svg": "image/svg+xml", ".png": "image/png", ".jpg": "image/jpeg",
                   ".jpeg": "image/jpeg"}


def _image_data_url(image) -> str:
    if isinstance(image, bytes):
        data, mime = image, "image/png"
    else:
        path = Path(image)
        data = path.read_bytes()
        mime = _MIME_BY_SUFFIX.get(path.suffix.lower(), "application/octet-stream")
    return f"data:{mime};base64,{base64.b64encode(data).decode('ascii')}"


class MockChatClient(BaseClient):
    """Deterministic stand-in for an endpoint.

    Script resolution order: ``handler(system, user, image)`` if set, then
    ``by_prompt`` (prompt hash -> response sequence; the last entry
    repeats once exhausted), then the global ``sequence``, then
    ``default``. Scripted entries are either response strings or dicts
    like {"error": "transient"} / {"error": "auth"} to exercise failure
    paths. Sleeps are no-ops so retry tests run instantly.
    """

    def __init__(self, handler=None, by_prompt=None, sequence=None, default=None,
                 config: Optional[ClientConfig] = None):
        super().__init__(config=config, sleep=lambda _s: None)
        self.handler = handler
        self.by_prompt = {k: list(v) for k, v in (by_prompt or {}).items()}
        self.sequence = list(sequence or [])
        self.default = default
        self.calls: list[str] = []

    @classmethod
    def from_script_file(cls, path, config: Optional[ClientConfig] = None) -> "MockChatClient":
        script = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            by_prompt=script.get("by_prompt"),
            sequence=script.get("sequence"),
            default=script.get("default"),
            config=config,
        )

    def _send(self, system_prompt, user_prompt, image, temperature) -> str:
        key = prompt_hash(system_prompt, user_prompt)
        with self._lock:
            self.calls.append(key)
            entry = self._next_entry(key)
        if isinstance(entry, dict):
            kind = entry.get("error")
            if kind == "transient":
                raise _TransientFailure("scripted transient failure", status=entry.get("status", 503))
            if kind == "auth":
                raise AuthError("scripted auth failure")
            if "text" in entry:
                return str(entry["text"])
            raise InputError(f"mock script entry not understood: {entry}")
        return str(entry)

    def _next_entry(self, key: str):
        if key in self.by_prompt and self.by_prompt[key]:
            queue = self.by_prompt[key]
            return queue.pop(0) if len(queue) > 1 else queue[0]
        if self.sequence:
            return self.sequence.pop(0)
        if self.default is not None:
            return self.default
        raise InputError(f"mock has no scripted response for prompt hash {key}")

    def complete(self, system_prompt, user_prompt, image=None, temperature=None) -> str:
        if self.handler is not None:
            with self._lock:
                self.send_count += 1
                self.calls.append(prompt_hash(system_prompt, user_prompt))
            return str(self.handler(system_prompt, user_prompt, image))
        return super().complete(system_prompt, user_prompt, image, temperature)


def complete(config: ClientConfig, system_prompt: str, user_prompt: str, image=None) -> str:
    """One-shot completion against an HTTP endpoint described by config."""
    return HttpChatClient(config).complete(system_prompt, user_prompt, image=image)


# ---------------------------------------------------------------------------
# Spec pool expansion and repair
# ---------------------------------------------------------------------------


class ExpansionInterrupted(ChartforgeError):
    """Client failure mid-expansion; candidates produced so far are kept."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = list(partial)


class RepairInterrupted(ChartforgeError):
    """Client failure mid-repair; attempt history is kept."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


def self_instruct_expand(seed_specs, client, n: int, k: int = 3, rng_seed: int = 42) -> list[str]:
    """Ask the model for n new candidate spec texts, k seed demos per prompt."""
    if not seed_specs:
        raise InputError("self-instruct expansion requires a non-empty seed pool")
    if n == 0:
        return []
    from .rng import SeededRng, derive_seed

    rng = SeededRng(derive_seed(rng_seed, "self-instruct"))
    template = load_prompt("self_instruct")
    out: list[str] = []
    for _ in range(n):
        demos = rng.sample(list(seed_specs), min(k, len(seed_specs)))
        user = template.format(demonstrations="\n".join(spec_dumps(d) for d in demos))
        try:
            out.append(client.complete(SYSTEM_SPEC_GEN, user))
        except (TransportError, AuthError) as exc:
            raise ExpansionInterrupted(f"expansion stopped after {len(out)} of {n}: {exc}",
                                       partial=out) from exc
    return out


@dataclass
class RepairAttempt:
    candidate_spec_text: str
    validation_report: list
    attempt_index: int  # 1-based
    outcome: str  # accepted | repaired | abandoned


@dataclass
class RepairResult:
    history: list[RepairAttempt]
    spec: Optional[ChartSpec]

    @property
    def outcome(self) -> str:
        return self.history[-1].outcome

    @property
    def accepted(self) -> bool:
        return self.spec is not None


def _parse_candidate(text: str):
    try:
        spec = spec_from_dict(json.loads(text))
    except Exception as exc:  # noqa: BLE001 - any parse failure is a validation fact
        return None, [Violation("$", f"unparseable spec JSON: {exc}")]
    return spec, validate_spec(spec)


def repair_loop(candidate_text: str, client, max_attempts: int = 3) -> RepairResult:
    """Validate a candidate, feeding violations back for correction.

    Outcome of the final attempt: ``accepted`` (valid as submitted),
    ``repaired`` (valid after at least one correction round), or
    ``abandoned`` (still invalid when attempts ran out). Earlier failing
    attempts are marked ``repaired`` since they were sent back for repair.
    Only accepted/repaired candidates yield a spec; abandoned candidates
    never reach a dataset.
    """
    if max_attempts < 1:
        raise ConfigError("max_attempts must be >= 1")
    template = load_prompt("repair")
    history: list[RepairAttempt] = []
    text = candidate_text
    for attempt in range(1, max_attempts + 1):
        spec, report = _parse_candidate(text)
        if spec is not None and not report:
            outcome = "accepted" if attempt == 1 else "repaired"
            history.append(RepairAttempt(text, report, attempt, outcome))
            return RepairResult(history=history, spec=spec)
        is_last = attempt == max_attempts
        history.append(RepairAttempt(text, report, attempt, "abandoned" if is_last else "repaired"))
        if is_last:
            break
        violations = "\n".join(f"- {v.field}: {v.rule}" for v in report)
        try:
            text = client.complete(SYSTEM_SPEC_GEN, template.format(candidate=text, violations=violations))
        except (TransportError, AuthError) as exc:
            raise RepairInterrupted(f"repair stopped at attempt {attempt}: {exc}",
                                    history=history) from exc
    return RepairResult(history=history, spec=None)

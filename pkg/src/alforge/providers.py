"""Provider contracts, HTTP clients, deterministic mocks, and call taping.

Four provider roles: embedder (texts -> unit vectors), scorer ((input,
output) -> logits), learner (generate + finetune), teacher (chat). Each has
an HTTP client speaking the JSON wire contract and an offline mock. Any
provider can be wrapped in a tape that records request/response pairs to a
JSONL log and replays them for offline, deterministic re-runs.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .errors import ProviderError
from .util import canonical_json, stable_rng, stable_u64


def with_retries(fn: Callable, attempts: int = 3, base_delay: float = 0.2):
    """Call fn with exponential backoff; raise ProviderError after the last attempt."""
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except ProviderError:
            raise
        except Exception as exc:  # noqa: BLE001 - provider transports vary
            last = exc
            if attempt < attempts - 1 and base_delay > 0:
                time.sleep(base_delay * 2**attempt)
    raise ProviderError(f"provider failed after {attempts} attempts: {last}")


class RetryingTransport:
    """Wrap a fallible callable-based provider with the standard retry policy."""

    def __init__(self, attempts: int = 3, base_delay: float = 0.2):
        self.attempts = attempts
        self.base_delay = base_delay

    def call(self, fn: Callable):
        return with_retries(fn, attempts=self.attempts, base_delay=self.base_delay)


class TokenBucket:
    """Blocking token-bucket rate limiter shared across provider workers."""

    def __init__(self, rate_per_s: float, capacity: float | None = None):
        if rate_per_s <= 0:
            raise ValueError("rate_per_s must be positive")
        self.rate = rate_per_s
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_s)
        self._tokens = self.capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self, tokens: float = 1.0) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(
                    self.capacity, self._tokens + (now - self._updated) * self.rate
                )
                self._updated = now
                if self._tokens >= tokens:
                    self._tokens -= tokens
                    return
                wait = (tokens - self._tokens) / self.rate
            time.sleep(wait)


# --------------------------------------------------------------- HTTP clients


class _HttpBase:
    def __init__(
        self,
        endpoint: str,
        auth_token: str | None = None,
        timeout: float = 30.0,
        attempts: int = 3,
        base_delay: float = 0.2,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.auth_token = auth_token
        self.timeout = timeout
        self._retry = RetryingTransport(attempts, base_delay)

    def _post(self, path: str, payload: Mapping) -> dict:
        import requests

        url = self.endpoint + path
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"

        def attempt():
            resp = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()

        return self._retry.call(attempt)

    def health(self) -> bool:
        import requests

        try:
            requests.head(self.endpoint, timeout=5.0)
            return True
        except Exception:
            return False


class HttpEmbedder(_HttpBase):
    """Wire contract: POST {"texts": [str]} -> {"vectors": [[number]]}."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._dim: int | None = None

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ProviderError("empty batch")
        data = self._post("", {"texts": list(texts)})
        vectors = data.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError("embedding response shape mismatch")
        vectors = [normalize_unit(v) for v in vectors]
        for v in vectors:
            if self._dim is None:
                self._dim = len(v)
            elif len(v) != self._dim:
                raise ProviderError(
                    f"embedding dimension changed from {self._dim} to {len(v)}"
                )
        return vectors


class HttpScorer(_HttpBase):
    """Wire contract: POST {"input": str, "output": str} -> {"logits": [number]}."""

    def score(self, input_text: str, output_text: str) -> list[float]:
        data = self._post("", {"input": input_text, "output": output_text})
        logits = data.get("logits")
        if not isinstance(logits, list) or not logits:
            raise ProviderError("scorer response missing logits")
        return [float(x) for x in logits]


class HttpLearner(_HttpBase):
    """Generation: POST /generate {"input", "max_tokens", "temperature"} ->
    {"output"}; finetune: POST /finetune {"pairs", "epochs", "learning_rate"}
    -> {"revision"}."""

    def generate(self, input_text: str, max_tokens: int = 256, temperature: float = 0.0) -> str:
        data = self._post(
            "/generate",
            {"input": input_text, "max_tokens": max_tokens, "temperature": temperature},
        )
        out = data.get("output")
        if not isinstance(out, str):
            raise ProviderError("learner response missing output")
        return out

    def finetune(
        self,
        pairs: Sequence[tuple[str, str]],
        epochs: int = 10,
        learning_rate: float = 3e-5,
    ) -> str:
        data = self._post(
            "/finetune",
            {
                "pairs": [{"input": a, "target": b} for a, b in pairs],
                "epochs": epochs,
                "learning_rate": learning_rate,
            },
        )
        rev = data.get("revision")
        if not isinstance(rev, str):
            raise ProviderError("finetune response missing revision")
        return rev


class HttpTeacher(_HttpBase):
    """Chat contract: POST {"messages": [{"role", "content"}], "temperature"}
    -> {"content": str}."""

    def __init__(self, *args, model: str = "teacher", **kwargs):
        super().__init__(*args, **kwargs)
        self.model = model

    def chat(self, messages: Sequence[Mapping], temperature: float = 0.7) -> str:
        data = self._post("", {"messages": list(messages), "temperature": temperature})
        content = data.get("content")
        if not isinstance(content, str) or not content:
            raise ProviderError("teacher response missing content")
        return content


# --------------------------------------------------------------------- mocks


def normalize_unit(vector: Sequence[float]) -> list[float]:
    norm = math.sqrt(sum(float(x) ** 2 for x in vector))
    if norm == 0:
        raise ProviderError("cannot normalize a zero vector")
    return [float(x) / norm for x in vector]


def anchor_vector(index: int, dim: int) -> list[float]:
    """Unit anchors at mutually large angles: basis vectors, then signed pairs."""
    v = [0.0] * dim
    if index < dim:
        v[index] = 1.0
        return v
    # Past the basis, fall back to deterministic pseudo-random unit vectors.
    rng = stable_rng("anchor", index, dim)
    v = [rng.gauss(0.0, 1.0) for _ in range(dim)]
    return normalize_unit(v)


class MockEmbedder:
    """Deterministic embeddings: per-group anchor plus seeded hash noise.

    Group is resolved by `group_of` (exact lookup built by the caller) or by
    scanning known group names as substrings; texts with no group hash to a
    stable pseudo-random direction.
    """

    def __init__(
        self,
        groups: Sequence[str] | None = None,
        dim: int = 16,
        noise: float = 0.01,
        seed: int = 0,
        group_of: Callable[[str], str | None] | None = None,
    ):
        self.groups = list(groups) if groups else []
        self.dim = max(dim, len(self.groups))
        self.noise = noise
        self.seed = seed
        self.group_of = group_of

    def _group(self, text: str) -> str | None:
        if self.group_of is not None:
            return self.group_of(text)
        for g in sorted(self.groups, key=len, reverse=True):
            if g in text:
                return g
        return None

    def _vector(self, text: str) -> list[float]:
        group = self._group(text)
        if group is not None and group in self.groups:
            base = anchor_vector(self.groups.index(group), self.dim)
        else:
            rng = stable_rng("mock-embed", self.seed, text)
            base = normalize_unit([rng.gauss(0.0, 1.0) for _ in range(self.dim)])
        if self.noise > 0:
            rng = stable_rng("mock-embed-noise", self.seed, text)
            jitter = [rng.uniform(-self.noise, self.noise) for _ in range(self.dim)]
            base = [b + j for b, j in zip(base, jitter)]
        return normalize_unit(base)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ProviderError("empty batch")
        return [self._vector(t) for t in texts]

    def health(self) -> bool:
        return True


class MockTeacher:
    """Deterministic rewrite of the prompt's input block."""

    def __init__(self, model: str = "mock-teacher", style: str = "respectful rewrite"):
        self.model = model
        self.style = style
        self.calls = 0

    @staticmethod
    def _extract_input(prompt: str) -> str:
        marker = "Input:"
        pos = prompt.rfind(marker)
        if pos == -1:
            return prompt.strip()
        return prompt[pos + len(marker) :].strip()

    def chat(self, messages: Sequence[Mapping], temperature: float = 0.7) -> str:
        self.calls += 1
        user = ""
        for m in messages:
            if m.get("role") == "user":
                user = m.get("content", "")
        return f"{self.style}: {self._extract_input(user)}"

    def health(self) -> bool:
        return True


class MockLearner:
    """Deterministic learner: echo-style generation, revision = digest of pairs.

    Per-group quality state (used by the simulation's scorer) is recomputed
    from scratch on every finetune, mirroring retraining from the base
    checkpoint on the full labeled set.
    """

    def __init__(self, group_of: Callable[[str], str | None] | None = None):
        self.group_of = group_of or (lambda text: None)
        self.revision = "base"
        self.labeled_count_per_group: dict[str, int] = {}
        self.finetune_calls = 0

    def generate(self, input_text: str, max_tokens: int = 256, temperature: float = 0.0) -> str:
        return f"[{self.revision}] rewrite: {input_text}"

    def finetune(
        self,
        pairs: Sequence[tuple[str, str]],
        epochs: int = 10,
        learning_rate: float = 3e-5,
    ) -> str:
        self.finetune_calls += 1
        counts: dict[str, int] = {}
        for input_text, _target in pairs:
            group = self.group_of(input_text)
            if group is not None:
                counts[group] = counts.get(group, 0) + 1
        self.labeled_count_per_group = counts
        digest = stable_u64(
            "finetune", self.finetune_calls, canonical_json(sorted(pairs))
        )
        self.revision = f"rev-{digest:016x}"
        return self.revision

    def health(self) -> bool:
        return True


class MockScorer:
    """Deterministic pseudo-scorer for generic runs without group structure.

    Adherence probability is a stable hash of (input, output, revision), so
    scores are reproducible and vary across learner revisions.
    """

    def __init__(self, learner: MockLearner | None = None, seed: int = 0):
        self.learner = learner
        self.seed = seed

    def score(self, input_text: str, output_text: str) -> list[float]:
        rev = self.learner.revision if self.learner is not None else "base"
        u = stable_u64("mock-score", self.seed, rev, input_text, output_text)
        p = 0.02 + 0.96 * (u / 2**64)
        return [math.log(p / (1.0 - p)), 0.0]

    def health(self) -> bool:
        return True


class FlakyProvider:
    """Test helper: fail the first n calls of each wrapped method."""

    def __init__(self, inner, fail_first: int = 0, error: str = "injected failure"):
        self._inner = inner
        self._fail_first = fail_first
        self._error = error
        self.calls = 0

    def __getattr__(self, name):
        target = getattr(self._inner, name)
        if not callable(target):
            return target

        def wrapped(*args, **kwargs):
            self.calls += 1
            if self.calls <= self._fail_first:
                raise ConnectionError(self._error)
            return target(*args, **kwargs)

        return wrapped


# ---------------------------------------------------------------------- tape


@dataclass
class TapeEntry:
    request: dict
    response: object


class Tape:
    """Replay index over a JSONL log of {"request", "response", "timestamp"}.

    Identical requests replay their responses in recorded order (then stick
    on the last one). Safe for concurrent workers.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._index: dict[str, list] = {}
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    key = canonical_json(entry["request"])
                    self._index.setdefault(key, []).append(entry["response"])
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    def fetch(self, request: Mapping):
        key = canonical_json(request)
        with self._lock:
            responses = self._index.get(key)
            if not responses:
                return None
            pos = self._cursor.get(key, 0)
            if pos < len(responses):
                self._cursor[key] = pos + 1
                return responses[pos]
            return responses[-1]


class TapeWriter:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def record(self, request: Mapping, response) -> None:
        entry = {"request": dict(request), "response": response, "timestamp": time.time()}
        line = json.dumps(entry, ensure_ascii=False) + "\n"
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)


class TapedProvider:
    """Record/replay wrapper: replays from a tape when possible, otherwise
    calls the live provider (if any) and records the exchange."""

    def __init__(
        self,
        inner=None,
        record_path: str | Path | None = None,
        replay_path: str | Path | None = None,
    ):
        self._inner = inner
        self._writer = TapeWriter(record_path) if record_path else None
        self._tape = Tape(replay_path) if replay_path else None

    def _call(self, request: dict, live: Callable):
        if self._tape is not None:
            found = self._tape.fetch(request)
            if found is not None:
                return found
        if self._inner is None:
            raise ProviderError(f"replay miss and no live provider: {request.get('op')}")
        response = live()
        if self._writer is not None:
            self._writer.record(request, response)
        return response

    def health(self) -> bool:
        if self._inner is not None:
            return self._inner.health()
        return self._tape is not None


class TapedEmbedder(TapedProvider):
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return self._call(
            {"op": "embed", "texts": list(texts)},
            lambda: self._inner.embed(texts),
        )


class TapedScorer(TapedProvider):
    def score(self, input_text: str, output_text: str) -> list[float]:
        return self._call(
            {"op": "score", "input": input_text, "output": output_text},
            lambda: self._inner.score(input_text, output_text),
        )


class TapedLearner(TapedProvider):
    """Learner tape.

    The learner is stateful (finetune changes what generate returns), so
    generate entries are keyed by the revision the tape has observed through
    finetune responses; otherwise a resumed replay would pop responses
    recorded under an older revision.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._revision = "base"

    def generate(self, input_text: str, max_tokens: int = 256, temperature: float = 0.0) -> str:
        return self._call(
            {
                "op": "generate",
                "revision": self._revision,
                "input": input_text,
                "max_tokens": max_tokens,
                "temperature": temperature,
            },
            lambda: self._inner.generate(input_text, max_tokens, temperature),
        )

    def finetune(
        self,
        pairs: Sequence[tuple[str, str]],
        epochs: int = 10,
        learning_rate: float = 3e-5,
    ) -> str:
        revision = self._call(
            {
                "op": "finetune",
                "pairs": [[a, b] for a, b in pairs],
                "epochs": epochs,
                "learning_rate": learning_rate,
            },
            lambda: self._inner.finetune(pairs, epochs, learning_rate),
        )
        self._revision = revision
        return revision


class TapedTeacher(TapedProvider):
    def chat(self, messages: Sequence[Mapping], temperature: float = 0.7) -> str:
        return self._call(
            {"op": "chat", "messages": list(messages), "temperature": temperature},
            lambda: self._inner.chat(messages, temperature),
        )

"""Template rendering and teacher distillation of target generations."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Sequence

from .errors import ConfigError, ProviderError
from .pool import DISTILLED, SELECTED, PoolStore
from .providers import TokenBucket, with_retries

PLACEHOLDER = "{input}"


@dataclass(frozen=True)
class Template:
    """Prompt layout: preamble, task directive, instruction, then the input block.

    Exactly one "{input}" placeholder must appear across the parts; it is
    replaced verbatim (no recursive substitution) at render time.
    """

    task_directive: str
    instruction: str
    preamble: str | None = None
    input_block: str = "Input: {input}"

    def __post_init__(self):
        if not self.task_directive:
            raise ConfigError("template task_directive must be non-empty")
        if not self.instruction:
            raise ConfigError("template instruction must be non-empty")
        count = sum(
            part.count(PLACEHOLDER)
            for part in (self.preamble or "", self.task_directive, self.instruction, self.input_block)
        )
        if count == 0:
            raise ConfigError("template has no {input} placeholder")
        if count > 1:
            raise ConfigError(f"template has {count} {{input}} placeholders, expected 1")

    def layout(self) -> str:
        parts = [self.preamble, self.task_directive, self.instruction, self.input_block]
        return "\n\n".join(p for p in parts if p)


BUILTIN_TEMPLATES = {
    "counter_narration": Template(
        preamble="You write constructive responses to harmful statements.",
        task_directive="Write a counter-narrative responding to the text below.",
        instruction=(
            "Be polite and respectful. Do not repeat or amplify the harmful "
            "content. The response must stay socially acceptable and must "
            "not be aggressive."
        ),
    ),
    "style_transfer": Template(
        preamble="You rewrite text to remove offensiveness.",
        task_directive=(
            "Rewrite the text below so it is inoffensive while preserving "
            "the underlying intent."
        ),
        instruction=(
            "Keep the tone calm and non-aggressive; the rewrite must be "
            "socially acceptable."
        ),
    ),
}


def render(template: Template, source_text: str) -> str:
    """Deterministic prompt for one input; byte-stable across runs.

    The single placeholder is replaced exactly once, so a literal "{input}"
    inside the source text survives verbatim.
    """
    return template.layout().replace(PLACEHOLDER, source_text, 1)


@dataclass
class DistillationCandidate:
    instance_id: str
    prompt: str
    candidate_text: str
    provider_meta: dict = field(default_factory=dict)
    created_at: str = ""


@dataclass(frozen=True)
class DistillationFailure:
    instance_id: str
    error: str


def distill_batch(
    store: PoolStore,
    instance_ids: Sequence[str],
    template: Template,
    teacher,
    *,
    iteration: int = 0,
    temperature: float = 0.7,
    attempts: int = 3,
    base_delay: float = 0.2,
    concurrency: int = 4,
    rate_limiter: "TokenBucket | None" = None,
) -> tuple[list[DistillationCandidate], list[DistillationFailure]]:
    """Distill one candidate per selected instance.

    Teacher calls run on a bounded worker pool (optionally throttled by a
    shared token bucket); pool-store writes are applied in input order on
    the calling thread, so the outcome is independent of scheduling. Each
    success moves the instance to `distilled` and registers its live
    candidate; each failure (after retries) is recorded and the instance
    returns to the pool, leaving the budget untouched.
    """
    prompts: dict[str, str] = {}
    for iid in instance_ids:
        inst = store.get(iid)
        if inst.state != SELECTED:
            raise ProviderError(
                f"distill_batch: instance {iid} is {inst.state}, expected {SELECTED}"
            )
        prompts[iid] = render(template, inst.source_text)

    def call_teacher(iid: str) -> tuple[str, float]:
        if rate_limiter is not None:
            rate_limiter.acquire()
        messages = [{"role": "user", "content": prompts[iid]}]
        started = time.monotonic()
        content = with_retries(
            lambda: teacher.chat(messages, temperature=temperature),
            attempts=attempts,
            base_delay=base_delay,
        )
        if not content:
            raise ProviderError("teacher returned empty content")
        return content, (time.monotonic() - started) * 1000.0

    results: dict[str, tuple[str, float] | ProviderError] = {}
    if concurrency > 1 and len(instance_ids) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = {iid: pool.submit(call_teacher, iid) for iid in instance_ids}
            for iid, future in futures.items():
                try:
                    results[iid] = future.result()
                except ProviderError as exc:
                    results[iid] = exc
    else:
        for iid in instance_ids:
            try:
                results[iid] = call_teacher(iid)
            except ProviderError as exc:
                results[iid] = exc

    candidates: list[DistillationCandidate] = []
    failures: list[DistillationFailure] = []
    for iid in instance_ids:
        outcome = results[iid]
        if isinstance(outcome, ProviderError):
            failures.append(DistillationFailure(instance_id=iid, error=str(outcome)))
            store.record_failure("distillation", iid, str(outcome))
            store.release_to_pool(iid, f"distillation failed: {outcome}", iteration)
            continue
        content, latency_ms = outcome
        candidate = DistillationCandidate(
            instance_id=iid,
            prompt=prompts[iid],
            candidate_text=content,
            provider_meta={
                "model": getattr(teacher, "model", "unknown"),
                "latency_ms": round(latency_ms, 3),
            },
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        store.set_candidate(candidate)
        store.transition(iid, DISTILLED, iteration)
        candidates.append(candidate)
    return candidates, failures

"""Informativeness scoring and acquisition strategies.

An auxiliary scorer maps (input, interim generation) to logits over a
regulated attribute; the informativeness of an instance is the probability
mass its generation puts on violating that attribute. Three strategies turn
scores into a selection: uniform random, global top-N, and per-cluster
quotas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import ProviderError, StateError
from .util import stable_rng

if TYPE_CHECKING:
    from .clustering import ClusterModel
    from .pool import Instance

STRATEGIES = ("random", "topn", "cluster")


@dataclass(frozen=True)
class RegulatedAttribute:
    """A property generations must preserve (e.g. inoffensiveness).

    adhere_index selects which scorer logit means "attribute satisfied";
    all remaining probability mass counts as violation.
    """

    name: str
    adhere_index: int
    description: str = ""

    def validate_arity(self, logit_count: int) -> None:
        if not 0 <= self.adhere_index < logit_count:
            raise StateError(
                f"attribute {self.name!r}: adhere_index {self.adhere_index} "
                f"out of range for {logit_count} logits"
            )


@dataclass(frozen=True)
class AttributeScore:
    instance_id: str
    generated_text: str
    logits: tuple[float, ...]
    p_adhere: float
    informativeness: float


@dataclass(frozen=True)
class ScoringFailure:
    instance_id: str
    error: str


@dataclass(frozen=True)
class SelectionResult:
    strategy: str
    chosen: tuple[str, ...]
    seed: int
    per_cluster_quota: dict[int, int] | None = None


def entropy(dist: Sequence[float]) -> float:
    """Shannon entropy in nats of a probability vector; 0*ln(0) treated as 0."""
    if not dist:
        raise StateError("entropy of an empty distribution")
    total = 0.0
    for p in dist:
        if p < 0:
            raise StateError(f"negative probability component {p}")
        total += p
    if abs(total - 1.0) > 1e-9:
        raise StateError(f"probabilities sum to {total}, expected 1")
    return -sum(p * math.log(p) for p in dist if p > 0.0)


def softmax(logits: Sequence[float]) -> list[float]:
    """Numerically stable softmax (max-subtracted)."""
    if not logits:
        raise StateError("softmax of an empty vector")
    if any(not math.isfinite(x) for x in logits):
        raise StateError("softmax requires finite logits")
    peak = max(logits)
    exps = [math.exp(x - peak) for x in logits]
    norm = sum(exps)
    return [e / norm for e in exps]


def informativeness_from_logits(
    logits: Sequence[float], attr: RegulatedAttribute
) -> tuple[float, float]:
    """(p_adhere, informativeness) for a scorer logit vector."""
    attr.validate_arity(len(logits))
    p_adhere = softmax(logits)[attr.adhere_index]
    return p_adhere, 1.0 - p_adhere


def score_instance(
    instance: "Instance",
    learner,
    scorer,
    attr: RegulatedAttribute,
    *,
    max_tokens: int = 256,
    cache: dict | None = None,
    learner_revision: str = "",
) -> AttributeScore:
    """Generate interim output for one instance and score attribute adherence.

    Generation runs at temperature 0 so the interim output, and therefore the
    score, is deterministic for a given learner revision. Results are cached
    by (instance id, learner revision).
    """
    key = (instance.id, learner_revision)
    if cache is not None and key in cache:
        return cache[key]
    generated = learner.generate(
        instance.source_text, max_tokens=max_tokens, temperature=0.0
    )
    logits = tuple(float(x) for x in scorer.score(instance.source_text, generated))
    p_adhere, info = informativeness_from_logits(logits, attr)
    result = AttributeScore(
        instance_id=instance.id,
        generated_text=generated,
        logits=logits,
        p_adhere=p_adhere,
        informativeness=info,
    )
    if cache is not None:
        cache[key] = result
    return result


def score_pool(
    instances: Iterable["Instance"],
    learner,
    scorer,
    attr: RegulatedAttribute,
    *,
    max_tokens: int = 256,
    cache: dict | None = None,
    learner_revision: str = "",
) -> tuple[list[AttributeScore], list[ScoringFailure]]:
    """Score every instance; provider failures are recorded, never dropped silently."""
    scores: list[AttributeScore] = []
    failures: list[ScoringFailure] = []
    for inst in instances:
        try:
            scores.append(
                score_instance(
                    inst,
                    learner,
                    scorer,
                    attr,
                    max_tokens=max_tokens,
                    cache=cache,
                    learner_revision=learner_revision,
                )
            )
        except ProviderError as exc:
            failures.append(ScoringFailure(instance_id=inst.id, error=str(exc)))
    return scores, failures


def _candidate_ids(pool) -> list[str]:
    if hasattr(pool, "unlabeled_ids"):
        return sorted(pool.unlabeled_ids())
    return sorted(pool)


def select_random(pool, n: int, seed: int) -> SelectionResult:
    """Uniform sample without replacement from the unlabeled candidates."""
    ids = _candidate_ids(pool)
    if n > len(ids):
        raise StateError(f"cannot select {n} from {len(ids)} unlabeled instances")
    rng = stable_rng("select_random", seed)
    chosen = tuple(rng.sample(ids, n))
    return SelectionResult(strategy="random", chosen=chosen, seed=seed)


def select_topn(scores: Sequence[AttributeScore], n: int, seed: int = 0) -> SelectionResult:
    """The n most informative instances; ties broken by ascending instance id."""
    if n > len(scores):
        raise StateError(f"cannot select {n} from {len(scores)} scored instances")
    ranked = sorted(scores, key=lambda s: (-s.informativeness, s.instance_id))
    chosen = tuple(s.instance_id for s in ranked[:n])
    return SelectionResult(strategy="topn", chosen=chosen, seed=seed)


def select_cluster(
    scores: Sequence[AttributeScore],
    model: "ClusterModel",
    n: int,
    seed: int = 0,
) -> SelectionResult:
    """Per-cluster quota selection.

    Base quota is floor(n/k) per cluster; the n mod k remainder slots go one
    each to the clusters with the most remaining candidates (ties by lowest
    cluster index). Within a cluster the quota is filled by descending
    informativeness with ascending-id tie-break. Shortfall from clusters with
    too few candidates is redistributed one slot at a time by the same
    most-remaining rule, so the total chosen is min(n, available).
    """
    if n < 1:
        raise StateError("cluster selection requires n >= 1")
    by_cluster: dict[int, list[AttributeScore]] = {c: [] for c in range(model.k)}
    for s in scores:
        cluster = model.assignments.get(s.instance_id)
        if cluster is None:
            raise StateError(f"instance {s.instance_id} has no cluster assignment")
        by_cluster[cluster].append(s)
    for members in by_cluster.values():
        members.sort(key=lambda s: (-s.informativeness, s.instance_id))

    k = model.k
    quota = {c: n // k for c in range(k)}
    remainder_order = sorted(range(k), key=lambda c: (-len(by_cluster[c]), c))
    for c in remainder_order[: n % k]:
        quota[c] += 1

    taken: dict[int, list[AttributeScore]] = {}
    for c in range(k):
        taken[c] = by_cluster[c][: quota[c]]
    remaining = {c: by_cluster[c][quota[c] :] for c in range(k)}

    shortfall = n - sum(len(t) for t in taken.values())
    while shortfall > 0:
        eligible = [c for c in range(k) if remaining[c]]
        if not eligible:
            break
        c = min(eligible, key=lambda c: (-len(remaining[c]), c))
        taken[c].append(remaining[c].pop(0))
        shortfall -= 1

    chosen: list[str] = []
    for c in range(k):
        chosen.extend(s.instance_id for s in taken[c])
    return SelectionResult(
        strategy="cluster",
        chosen=tuple(chosen),
        seed=seed,
        per_cluster_quota={c: len(taken[c]) for c in range(k)},
    )

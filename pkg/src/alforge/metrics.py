"""Evaluation metrics: correctness percentages, per-subgroup error spread, MTLD.

All functions are pure; reports serialize to canonical JSON so repeated
evaluations of the same state are byte-identical.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import StateError
from .util import round_half_up

MTLD_THRESHOLD = 0.72

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class Judgment:
    """One boolean verdict on a generated output, tagged with its subgroup."""

    instance_id: str
    subgroup: str
    correct: bool


@dataclass
class MetricsReport:
    """Aggregate evaluation of one model state on one judged set.

    cs_score and safe_score are percentages rounded half-up to one decimal
    (the reporting contract); per_group_error and error_ratio_variance are
    kept at full precision.
    """

    cs_score: float
    safe_score: float
    mtld: float
    per_group_error: dict[str, float]
    error_ratio_variance: float
    n: int
    per_group_counts: dict[str, tuple[int, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cs_score": self.cs_score,
            "safe_score": self.safe_score,
            "mtld": self.mtld,
            "per_group_error": dict(sorted(self.per_group_error.items())),
            "error_ratio_variance": self.error_ratio_variance,
            "n": self.n,
            "per_group_counts": {
                g: list(c) for g, c in sorted(self.per_group_counts.items())
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        return cls(
            cs_score=d["cs_score"],
            safe_score=d["safe_score"],
            mtld=d["mtld"],
            per_group_error=dict(d["per_group_error"]),
            error_ratio_variance=d["error_ratio_variance"],
            n=d["n"],
            per_group_counts={
                g: (c[0], c[1]) for g, c in d.get("per_group_counts", {}).items()
            },
        )

    def csv_rows(self) -> list[tuple[str, int, int, float]]:
        """(group, errors, total, ratio) rows for the per-group CSV export."""
        rows = []
        for group in sorted(self.per_group_error):
            errors, total = self.per_group_counts.get(group, (0, 0))
            rows.append((group, errors, total, self.per_group_error[group]))
        return rows


def tokenize(text: str) -> list[str]:
    """Lower-case and split on non-alphanumeric characters, dropping empties."""
    return _TOKEN_RE.findall(text.lower())


def mtld(tokens: Sequence[str], threshold: float = MTLD_THRESHOLD) -> float:
    """Measure of textual lexical diversity: mean of a forward and a backward pass.

    A pass scans tokens accumulating a factor; when the running type-token
    ratio drops below `threshold` the factor closes and the scan resets. A
    trailing partial factor counts as (1 - TTR) / (1 - threshold). The pass
    value is token_count / factor_count; if no factor ever closed and the
    final TTR is 1.0 (factor count 0), the pass value is the token count.
    """
    if not tokens:
        raise StateError("mtld requires at least one token")
    forward = _mtld_pass(tokens, threshold)
    backward = _mtld_pass(list(reversed(tokens)), threshold)
    return (forward + backward) / 2.0


def _mtld_pass(tokens: Sequence[str], threshold: float) -> float:
    factors = 0.0
    types: set[str] = set()
    length = 0
    ttr = 1.0
    for tok in tokens:
        length += 1
        types.add(tok)
        ttr = len(types) / length
        if ttr < threshold:
            factors += 1.0
            types.clear()
            length = 0
            ttr = 1.0
    if length > 0 and ttr < 1.0:
        factors += (1.0 - ttr) / (1.0 - threshold)
    if factors == 0.0:
        return float(len(tokens))
    return len(tokens) / factors


def error_ratio_variance(
    judgments: Iterable[Judgment],
) -> tuple[dict[str, float], float]:
    """Per-subgroup error proportions and their population variance.

    Population (not sample) variance: the subgroups are the whole population
    of interest.
    """
    errors: dict[str, int] = {}
    totals: dict[str, int] = {}
    for j in judgments:
        if not j.subgroup:
            raise StateError(f"judgment for {j.instance_id} has no subgroup")
        totals[j.subgroup] = totals.get(j.subgroup, 0) + 1
        if not j.correct:
            errors[j.subgroup] = errors.get(j.subgroup, 0) + 1
    if not totals:
        raise StateError("no judgments to aggregate")
    ratios = {g: errors.get(g, 0) / totals[g] for g in totals}
    mean = sum(ratios.values()) / len(ratios)
    variance = sum((r - mean) ** 2 for r in ratios.values()) / len(ratios)
    return ratios, variance


def safe_score(flags: Sequence[bool]) -> float:
    """Percentage of True flags, rounded half-up to one decimal."""
    if not flags:
        raise StateError("safe_score requires at least one flag")
    return round_half_up(100.0 * sum(flags) / len(flags), 1)


def cs_score(judgments: Sequence[Judgment]) -> float:
    """Percentage of correct judgments, rounded half-up to one decimal."""
    if not judgments:
        raise StateError("cs_score requires at least one judgment")
    return safe_score([j.correct for j in judgments])


def build_report(
    judgments: Sequence[Judgment],
    generated_texts: Iterable[str] = (),
    safe_flags: Sequence[bool] | None = None,
) -> MetricsReport:
    """Assemble a MetricsReport from judgments plus optional text/safety inputs.

    MTLD is computed over the concatenated generated texts; when no text is
    supplied it is reported as 0. Safety flags default to the correctness
    flags.
    """
    ratios, variance = error_ratio_variance(judgments)
    counts: dict[str, tuple[int, int]] = {}
    for group in ratios:
        total = sum(1 for j in judgments if j.subgroup == group)
        bad = sum(1 for j in judgments if j.subgroup == group and not j.correct)
        counts[group] = (bad, total)
    tokens: list[str] = []
    for text in generated_texts:
        tokens.extend(tokenize(text))
    diversity = mtld(tokens) if tokens else 0.0
    flags = safe_flags if safe_flags is not None else [j.correct for j in judgments]
    return MetricsReport(
        cs_score=cs_score(judgments),
        safe_score=safe_score(list(flags)),
        mtld=diversity,
        per_group_error=ratios,
        error_ratio_variance=variance,
        n=len(judgments),
        per_group_counts=counts,
    )

"""Deterministic simulation harness: synthetic skewed pools + mock providers.

Models the mechanism under study: a learner whose per-group error falls
linearly with the number of labeled examples from that group, over a pool
whose group proportions are heavily skewed. Quota-based cluster selection
reaches every group; random and global top-N selection need not. Every run
is a pure function of (spec, strategy, seed), so reports are byte-identical
across machines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .config import Config, HoldoutConfig, LoopConfig
from .errors import ConfigError, StateError
from .metrics import Judgment, build_report, cs_score, error_ratio_variance
from .orchestrator import Orchestrator, ProviderBindings
from .pool import Instance, PoolStore
from .providers import MockEmbedder, MockTeacher, anchor_vector, normalize_unit
from .util import canonical_json, canonical_json_bytes, stable_rng, stable_u64


@dataclass(frozen=True)
class GroupSpec:
    name: str
    proportion: float
    difficulty: float = 1.0


@dataclass(frozen=True)
class SyntheticPoolSpec:
    groups: tuple[GroupSpec, ...]
    total: int
    seed: int
    embed_dim: int = 16
    embed_noise: float = 0.005

    def validate(self) -> None:
        if not self.groups:
            raise ConfigError("pool spec needs at least one group")
        for g in self.groups:
            if not 0.0 < g.proportion <= 1.0:
                raise ConfigError(f"group {g.name}: proportion {g.proportion} not in (0, 1]")
            if not 0.0 <= g.difficulty <= 1.0:
                raise ConfigError(f"group {g.name}: difficulty {g.difficulty} not in [0, 1]")
        total_p = sum(g.proportion for g in self.groups)
        if abs(total_p - 1.0) > 1e-9:
            raise ConfigError(f"group proportions sum to {total_p}, expected 1")
        if self.total < 10 * len(self.groups):
            raise ConfigError(
                f"total {self.total} below 10 x {len(self.groups)} groups"
            )


@dataclass
class MockLearnerState:
    """Per-group quality model: error falls linearly with labeled examples."""

    labeled_count_per_group: dict[str, int] = field(default_factory=dict)
    base_error: float = 0.5
    gain_per_label: float = 0.04
    floor: float = 0.05

    def error_rate(self, group: str, difficulty: float = 1.0) -> float:
        count = self.labeled_count_per_group.get(group, 0)
        raw = self.base_error * difficulty - self.gain_per_label * count
        return min(1.0, max(self.floor, raw))

    def adherence(self, group: str, difficulty: float = 1.0) -> float:
        return 1.0 - self.error_rate(group, difficulty)


def apportion(total: int, proportions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment; counts sum exactly to total."""
    raw = [total * p for p in proportions]
    counts = [int(math.floor(r)) for r in raw]
    leftover = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def gen_pool(spec: SyntheticPoolSpec, id_prefix: str = "") -> list[Instance]:
    """Synthetic instances with group-aligned unit embeddings.

    Each instance's embedding is its group anchor plus small seeded noise,
    renormalized; its text carries the group tag; assignment order is a
    seeded shuffle so ids do not correlate with groups.
    """
    spec.validate()
    counts = apportion(spec.total, [g.proportion for g in spec.groups])
    membership: list[int] = []
    for gi, count in enumerate(counts):
        membership.extend([gi] * count)
    rng = stable_rng("gen-pool", spec.seed, id_prefix)
    rng.shuffle(membership)

    instances = []
    for i, gi in enumerate(membership):
        group = spec.groups[gi]
        iid = f"{id_prefix}{i:06d}"
        noise_rng = stable_rng("gen-pool-noise", spec.seed, iid)
        vec = anchor_vector(gi, spec.embed_dim)
        if spec.embed_noise > 0:
            vec = [
                x + noise_rng.uniform(-spec.embed_noise, spec.embed_noise) for x in vec
            ]
        instances.append(
            Instance(
                id=iid,
                source_text=f"sample {iid} discussing topic {group.name}",
                subgroup=group.name,
                embedding=normalize_unit(vec),
            )
        )
    return instances


def mock_scorer(
    instance: Instance,
    state: MockLearnerState,
    *,
    difficulty: float = 1.0,
    noise_amp: float = 0.02,
    salt: str = "",
) -> tuple[float, float]:
    """(adhere, violate) logits whose softmax matches the group's adherence.

    Noise of amplitude <= noise_amp is added to the probability, seeded by
    the instance id and salt.
    """
    if not instance.subgroup:
        raise StateError(f"instance {instance.id} has no group")
    p = state.adherence(instance.subgroup, difficulty)
    if noise_amp > 0:
        rng = stable_rng("mock-scorer", instance.id, salt)
        p += rng.uniform(-noise_amp, noise_amp)
    p = min(1.0 - 1e-9, max(1e-9, p))
    return (math.log(p / (1.0 - p)), 0.0)


class SimLearner:
    """Learner provider whose quality state is shared with the scorer."""

    def __init__(self, state: MockLearnerState, group_of_text: Mapping[str, str]):
        self.state = state
        self.group_of_text = group_of_text
        self.revision = "base"
        self.finetune_calls = 0

    def generate(self, input_text: str, max_tokens: int = 256, temperature: float = 0.0) -> str:
        return f"[{self.revision}] rewrite: {input_text}"

    def finetune(self, pairs, epochs: int = 10, learning_rate: float = 3e-5) -> str:
        self.finetune_calls += 1
        counts: dict[str, int] = {}
        for input_text, _target in pairs:
            group = self.group_of_text.get(input_text)
            if group is not None:
                counts[group] = counts.get(group, 0) + 1
        self.state.labeled_count_per_group = counts
        self.revision = f"rev-{stable_u64(canonical_json(sorted(pairs))):016x}"
        return self.revision

    def health(self) -> bool:
        return True


class SimScorer:
    """Scorer provider: resolves the group from the input text, consults the
    shared learner state, and adds seeded tie-break noise per revision."""

    def __init__(
        self,
        state: MockLearnerState,
        group_of_text: Mapping[str, str],
        difficulty_of: Mapping[str, float],
        learner: SimLearner,
        noise_amp: float = 0.02,
    ):
        self.state = state
        self.group_of_text = group_of_text
        self.difficulty_of = difficulty_of
        self.learner = learner
        self.noise_amp = noise_amp

    def score(self, input_text: str, output_text: str) -> tuple[float, float]:
        group = self.group_of_text.get(input_text)
        if group is None:
            raise StateError(f"unknown group for text {input_text!r}")
        p = self.state.adherence(group, self.difficulty_of.get(group, 1.0))
        if self.noise_amp > 0:
            u = stable_u64("sim-score", self.learner.revision, input_text)
            p += (u / 2**64 * 2.0 - 1.0) * self.noise_amp
        p = min(1.0 - 1e-9, max(1e-9, p))
        return (math.log(p / (1.0 - p)), 0.0)

    def health(self) -> bool:
        return True


def threshold_judgments(
    instances: Sequence[Instance], error_by_group: Mapping[str, float]
) -> list[Judgment]:
    """Deterministic common-random-number judge.

    Within each group, instances (sorted by id) get evenly spaced quantiles
    (i + 0.5)/n; an instance is judged incorrect iff its quantile falls below
    the group's error rate. Group error ratios then track the model-implied
    rates with zero sampling noise.
    """
    by_group: dict[str, list[Instance]] = {}
    for inst in instances:
        if not inst.subgroup:
            raise StateError(f"instance {inst.id} has no group")
        by_group.setdefault(inst.subgroup, []).append(inst)
    judgments = []
    for group in sorted(by_group):
        members = sorted(by_group[group], key=lambda i: i.id)
        e = error_by_group[group]
        for i, inst in enumerate(members):
            quantile = (i + 0.5) / len(members)
            judgments.append(
                Judgment(instance_id=inst.id, subgroup=group, correct=quantile >= e)
            )
    return judgments


# ------------------------------------------------------------------ experiment


DEFAULT_GROUP_NAMES = (
    "alpha", "bravo", "charlie", "delta", "echo",
    "foxtrot", "golf", "hotel", "india", "juliet",
)
DEFAULT_PROPORTIONS = (0.30, 0.20, 0.15, 0.10, 0.08, 0.06, 0.05, 0.03, 0.02, 0.01)


@dataclass(frozen=True)
class ExperimentConfig:
    spec: SyntheticPoolSpec
    strategies: tuple[str, ...] = ("random", "topn", "cluster")
    seeds: tuple[int, ...] = tuple(range(20))
    budget: int = 100
    batch_size: int = 20
    clusters: int = 10
    bootstrap_n: int = 0
    test_total: int = 400
    base_error: float = 0.5
    gain_per_label: float = 0.04
    floor_error: float = 0.05
    score_noise: float = 0.02
    # The transfer model sits outside the loop: a different base quality and
    # learning rate, fine-tuned once on an exported split.
    transfer_base_error: float = 0.6
    transfer_gain_per_label: float = 0.035
    transfer_floor_error: float = 0.08


def default_experiment() -> ExperimentConfig:
    groups = tuple(
        GroupSpec(name=n, proportion=p)
        for n, p in zip(DEFAULT_GROUP_NAMES, DEFAULT_PROPORTIONS)
    )
    return ExperimentConfig(spec=SyntheticPoolSpec(groups=groups, total=2000, seed=0))


def _learner_state(config: ExperimentConfig) -> MockLearnerState:
    return MockLearnerState(
        base_error=config.base_error,
        gain_per_label=config.gain_per_label,
        floor=config.floor_error,
    )


def _error_by_group(
    state: MockLearnerState, spec: SyntheticPoolSpec
) -> dict[str, float]:
    return {g.name: state.error_rate(g.name, g.difficulty) for g in spec.groups}


def run_single(
    config: ExperimentConfig,
    strategy: str,
    seed: int,
    out_dir: Path | None = None,
) -> dict:
    """One full loop run with mock providers and auto-approved verification."""
    spec = replace(config.spec, seed=stable_u64("pool", config.spec.seed, seed) % 2**31)
    pool = gen_pool(spec)
    test_spec = replace(
        config.spec,
        total=config.test_total,
        seed=stable_u64("test", config.spec.seed, seed) % 2**31,
    )
    test_pool = gen_pool(test_spec, id_prefix="t")

    group_of_text = {i.source_text: i.subgroup for i in pool}
    group_of_text.update({i.source_text: i.subgroup for i in test_pool})
    difficulty_of = {g.name: g.difficulty for g in config.spec.groups}

    state = _learner_state(config)
    learner = SimLearner(state, group_of_text)
    scorer = SimScorer(state, group_of_text, difficulty_of, learner, config.score_noise)
    bindings = ProviderBindings(
        embedder=MockEmbedder(groups=[g.name for g in config.spec.groups], dim=spec.embed_dim),
        scorer=scorer,
        learner=learner,
        teacher=MockTeacher(),
    )

    store = PoolStore()
    for inst in pool:
        store.add_instance(inst)

    run_config = Config()
    run_config.seed = seed
    run_config.loop = LoopConfig(
        budget=config.budget,
        batch_size=config.batch_size,
        clusters=config.clusters,
        strategy=strategy,
        bootstrap_n=config.bootstrap_n,
    )
    run_config.holdout = HoldoutConfig(test_size=0)
    run_config.verification_mode = "auto"
    run_config.distill_concurrency = 1  # runs are internally single-threaded
    run_config.validate()

    def judge(_store: PoolStore):
        errors = _error_by_group(state, config.spec)
        judgments = threshold_judgments(test_pool, errors)
        generations = [learner.generate(i.source_text) for i in test_pool]
        return build_report(judgments, generations)

    orch = Orchestrator(store, bindings, run_config, judge=judge)
    orch.bootstrap(config.bootstrap_n, seed)
    if strategy == "cluster":
        orch.embed_and_cluster(config.clusters)
    orch.run_loop()
    orch.check_budget_ledger()

    # Final evaluation; identical to the last per-iteration report when the
    # loop ran at least once.
    report = orch.latest_report or judge(store)

    labeled_counts = {
        g.name: state.labeled_count_per_group.get(g.name, 0) for g in config.spec.groups
    }

    run_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir) / "runs" / f"{strategy}-{seed:04d}"
        run_dir.mkdir(parents=True, exist_ok=True)
    split_path = (run_dir or Path(".")) / "split.jsonl"
    if run_dir is not None:
        store.export_split(None, split_path)
        transfer_variance, transfer_cs = transfer_evaluation(
            split_path, config, group_of_text, test_pool
        )
    else:
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            split_path = Path(tmp) / "split.jsonl"
            store.export_split(None, split_path)
            transfer_variance, transfer_cs = transfer_evaluation(
                split_path, config, group_of_text, test_pool
            )

    result = {
        "strategy": strategy,
        "seed": seed,
        "iterations": store.loop_state.iteration,
        "cs_score": report.cs_score,
        "safe_score": report.safe_score,
        "mtld": report.mtld,
        "error_ratio_variance": report.error_ratio_variance,
        "per_group_error": dict(sorted(report.per_group_error.items())),
        "labeled_per_group": dict(sorted(labeled_counts.items())),
        "min_group_labeled": min(labeled_counts.values()),
        "transfer_error_ratio_variance": transfer_variance,
        "transfer_cs_score": transfer_cs,
    }
    if run_dir is not None:
        (run_dir / "snapshot.json").write_bytes(store.snapshot_bytes())
    return result


def transfer_evaluation(
    split_path: Path,
    config: ExperimentConfig,
    group_of_text: Mapping[str, str],
    test_pool: Sequence[Instance],
) -> tuple[float, float]:
    """Fine-tune a fresh mock learner once on an exported split and evaluate it."""
    import json

    transfer_state = MockLearnerState(
        base_error=config.transfer_base_error,
        gain_per_label=config.transfer_gain_per_label,
        floor=config.transfer_floor_error,
    )
    counts: dict[str, int] = {}
    with Path(split_path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            group = group_of_text.get(row["input"])
            if group is not None:
                counts[group] = counts.get(group, 0) + 1
    transfer_state.labeled_count_per_group = counts
    errors = _error_by_group(transfer_state, config.spec)
    judgments = threshold_judgments(test_pool, errors)
    _ratios, variance = error_ratio_variance(judgments)
    return variance, cs_score(judgments)


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    progress: Callable[[str], None] | None = None,
) -> dict:
    """Run every (strategy, seed) pair and aggregate a comparison report."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    runs = []
    for strategy in config.strategies:
        for seed in config.seeds:
            if progress is not None:
                progress(f"run strategy={strategy} seed={seed}")
            runs.append(run_single(config, strategy, seed, out))

    summary = {}
    for strategy in config.strategies:
        rows = [r for r in runs if r["strategy"] == strategy]
        n = len(rows)
        summary[strategy] = {
            "runs": n,
            "mean_cs_score": sum(r["cs_score"] for r in rows) / n,
            "mean_error_ratio_variance": sum(r["error_ratio_variance"] for r in rows) / n,
            "mean_transfer_error_ratio_variance": sum(
                r["transfer_error_ratio_variance"] for r in rows
            )
            / n,
            "mean_mtld": sum(r["mtld"] for r in rows) / n,
            "mean_min_group_labeled": sum(r["min_group_labeled"] for r in rows) / n,
        }

    report = {
        "config": {
            "groups": [
                {"name": g.name, "proportion": g.proportion, "difficulty": g.difficulty}
                for g in config.spec.groups
            ],
            "total": config.spec.total,
            "pool_seed": config.spec.seed,
            "strategies": list(config.strategies),
            "seeds": list(config.seeds),
            "budget": config.budget,
            "batch_size": config.batch_size,
            "clusters": config.clusters,
            "bootstrap_n": config.bootstrap_n,
            "test_total": config.test_total,
            "base_error": config.base_error,
            "gain_per_label": config.gain_per_label,
            "floor_error": config.floor_error,
            "score_noise": config.score_noise,
        },
        "runs": runs,
        "summary": summary,
    }
    if out is not None:
        (out / "report.json").write_bytes(canonical_json_bytes(report))
        _write_per_seed_csv(out / "per_seed.csv", runs)
    return report


def _write_per_seed_csv(path: Path, runs: Sequence[dict]) -> None:
    import csv

    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "strategy",
                "seed",
                "cs_score",
                "error_ratio_variance",
                "transfer_error_ratio_variance",
                "min_group_labeled",
                "mtld",
            ]
        )
        for r in runs:
            writer.writerow(
                [
                    r["strategy"],
                    r["seed"],
                    r["cs_score"],
                    r["error_ratio_variance"],
                    r["transfer_error_ratio_variance"],
                    r["min_group_labeled"],
                    r["mtld"],
                ]
            )


def spec_from_dict(raw: Mapping) -> ExperimentConfig:
    """Build an experiment config from a parsed YAML/JSON document."""
    base = default_experiment()
    groups_raw = raw.get("groups")
    if groups_raw:
        groups = tuple(
            GroupSpec(
                name=g["name"],
                proportion=float(g["proportion"]),
                difficulty=float(g.get("difficulty", 1.0)),
            )
            for g in groups_raw
        )
    else:
        groups = base.spec.groups
    spec = SyntheticPoolSpec(
        groups=groups,
        total=int(raw.get("total", base.spec.total)),
        seed=int(raw.get("pool_seed", base.spec.seed)),
        embed_dim=int(raw.get("embed_dim", base.spec.embed_dim)),
        embed_noise=float(raw.get("embed_noise", base.spec.embed_noise)),
    )
    spec.validate()
    seeds_raw = raw.get("seeds", list(base.seeds))
    seeds = tuple(range(int(seeds_raw))) if isinstance(seeds_raw, int) else tuple(seeds_raw)
    return ExperimentConfig(
        spec=spec,
        strategies=tuple(raw.get("strategies", base.strategies)),
        seeds=seeds,
        budget=int(raw.get("budget", base.budget)),
        batch_size=int(raw.get("batch_size", base.batch_size)),
        clusters=int(raw.get("clusters", base.clusters)),
        bootstrap_n=int(raw.get("bootstrap_n", base.bootstrap_n)),
        test_total=int(raw.get("test_total", base.test_total)),
        base_error=float(raw.get("base_error", base.base_error)),
        gain_per_label=float(raw.get("gain_per_label", base.gain_per_label)),
        floor_error=float(raw.get("floor_error", base.floor_error)),
        score_noise=float(raw.get("score_noise", base.score_noise)),
        transfer_base_error=float(raw.get("transfer_base_error", base.transfer_base_error)),
        transfer_gain_per_label=float(
            raw.get("transfer_gain_per_label", base.transfer_gain_per_label)
        ),
        transfer_floor_error=float(raw.get("transfer_floor_error", base.transfer_floor_error)),
    )

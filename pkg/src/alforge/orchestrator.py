"""The acquisition loop: select, distill, verify, retrain, repeat.

Each completed iteration consumes exactly batch_size budget; rejected items
return to the pool (the instance slot is refunded, the budget counter is
not). Snapshots after every iteration make any run resumable; with taped
providers a resumed run reproduces the uninterrupted one byte for byte.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from .clustering import ClusterModel, kmeans_fit
from .config import Config
from .distill import distill_batch, render
from .embedding import embed_batch
from .errors import ConfigError, ProviderError, StateError
from .metrics import MetricsReport
from .pool import (
    LABELED,
    REJECTED,
    SELECTED,
    UNLABELED,
    LoopState,
    PoolStore,
    read_pool_records,
    validate_disjoint,
)
from .providers import (
    HttpEmbedder,
    HttpLearner,
    HttpScorer,
    HttpTeacher,
    MockEmbedder,
    MockLearner,
    MockScorer,
    MockTeacher,
    TapedEmbedder,
    TapedLearner,
    TapedScorer,
    TapedTeacher,
    TokenBucket,
    with_retries,
)
from .scoring import (
    AttributeScore,
    score_pool,
    select_cluster,
    select_random,
    select_topn,
)
from .util import canonical_json, canonical_json_bytes, stable_u64

log = logging.getLogger(__name__)


@dataclass
class ProviderBindings:
    """The four provider roles the loop talks to."""

    embedder: object
    scorer: object
    learner: object
    teacher: object

    def health_check(self) -> None:
        down = [
            name
            for name in ("embedder", "scorer", "learner", "teacher")
            if not getattr(self, name).health()
        ]
        if down:
            raise ProviderError(f"providers unreachable: {', '.join(down)}")


@dataclass
class AssignmentView:
    """Cluster membership without centroids, rebuilt from instance fields."""

    k: int
    assignments: dict[str, int]


def providers_from_config(config: Config, label: str = "run") -> ProviderBindings:
    """Build fresh provider instances (mock or HTTP) with optional taping."""
    built = {}
    for name in ("embedder", "scorer", "learner", "teacher"):
        pc = config.providers[name]
        if pc.kind == "http":
            cls = {
                "embedder": HttpEmbedder,
                "scorer": HttpScorer,
                "learner": HttpLearner,
                "teacher": HttpTeacher,
            }[name]
            if name == "teacher":
                built[name] = cls(pc.endpoint, pc.auth_token, model=pc.model or "teacher")
            else:
                built[name] = cls(pc.endpoint, pc.auth_token)
        elif name == "embedder":
            built[name] = MockEmbedder(
                groups=pc.groups, dim=pc.dim, noise=pc.noise, seed=config.seed
            )
        elif name == "scorer":
            built[name] = MockScorer(seed=config.seed)
        elif name == "learner":
            built[name] = MockLearner()
        else:
            built[name] = MockTeacher()
    if isinstance(built["scorer"], MockScorer) and isinstance(built["learner"], MockLearner):
        built["scorer"].learner = built["learner"]

    if config.record or config.replay_dir:
        tape_dir = Path(config.replay_dir or (Path(config.workdir or ".") / "replay"))
        replaying = config.replay_dir is not None and tape_dir.exists()
        wrappers = {
            "embedder": TapedEmbedder,
            "scorer": TapedScorer,
            "learner": TapedLearner,
            "teacher": TapedTeacher,
        }
        for name, wrapper in wrappers.items():
            path = tape_dir / f"{label}.{name}.jsonl"
            built[name] = wrapper(
                inner=built[name],
                record_path=path if config.record else None,
                replay_path=path if replaying else None,
            )
    return ProviderBindings(**built)


class Orchestrator:
    """Drives the loop against a PoolStore with the given provider bindings."""

    def __init__(
        self,
        store: PoolStore,
        bindings: ProviderBindings,
        config: Config,
        queue=None,
        judge: Callable[[PoolStore], MetricsReport | None] | None = None,
    ):
        from .verify import VerificationQueue

        self.store = store
        self.bindings = bindings
        self.config = config
        self.judge = judge
        event_log = None
        if store.workdir is not None:
            event_log = store.workdir / "queue.jsonl"
        self.queue = queue or VerificationQueue(store, event_log=event_log)
        self.cluster_model: ClusterModel | AssignmentView | None = None
        self.latest_report: MetricsReport | None = None
        self._score_cache: dict = {}
        self._learner_synced = False
        self.initial_budget = config.loop.budget
        self._rate_limiter = (
            TokenBucket(config.distill_rate_limit_per_s)
            if config.distill_rate_limit_per_s
            else None
        )
        self._bootstrap_ids: tuple[str, ...] | None = None
        if store.workdir is not None:
            self._load_workdir_state()

    # ----------------------------------------------------------------- set-up

    def _load_workdir_state(self) -> None:
        model_path = self.store.workdir / "cluster_model.json"
        if model_path.exists():
            self.cluster_model = ClusterModel.from_dict(
                json.loads(model_path.read_text(encoding="utf-8"))
            )
        manifest = self.store.workdir / "bootstrap.json"
        if manifest.exists():
            data = json.loads(manifest.read_text(encoding="utf-8"))
            self._bootstrap_ids = tuple(data["ids"])

    def _cluster_view(self) -> ClusterModel | AssignmentView:
        if self.cluster_model is not None:
            return self.cluster_model
        assignments = {
            i.id: i.cluster_id
            for i in self.store.instances.values()
            if i.cluster_id is not None
        }
        if not assignments:
            raise StateError("cluster strategy requires clustering before iterating")
        view = AssignmentView(k=self.config.loop.clusters, assignments=assignments)
        self.cluster_model = view
        return view

    def ingest(self, path: str | Path | None = None) -> int:
        path = path or self.config.pool_path
        if not path:
            raise ConfigError("no pool path configured")
        count = self.store.ingest(path)
        self._save_snapshot()
        return count

    def embed_and_cluster(self, k: int | None = None) -> ClusterModel:
        """Vectorize every instance lacking an embedding, then fit k clusters."""
        k = k or self.config.loop.clusters
        todo = [i for i in self.store.instances.values() if i.embedding is None]
        for start in range(0, len(todo), 128):
            chunk = todo[start : start + 128]
            vectors = embed_batch(
                [i.source_text for i in chunk],
                self.bindings.embedder,
                base_delay=self.config.retry_base_delay,
            )
            for inst, vec in zip(chunk, vectors):
                self.store.set_embedding(inst.id, vec)
        ids = sorted(self.store.instances)
        matrix = [self.store.instances[i].embedding for i in ids]
        model = kmeans_fit(
            matrix,
            k,
            seed=stable_u64("kmeans", self.store.loop_state.rng_seed),
            ids=ids,
        )
        for iid, cluster in model.assignments.items():
            self.store.set_cluster(iid, cluster)
        self.cluster_model = model
        if self.store.workdir is not None:
            (self.store.workdir / "cluster_model.json").write_bytes(model.to_bytes())
        self._save_snapshot()
        return model

    # -------------------------------------------------------------- bootstrap

    def bootstrap(self, n: int | None = None, seed: int | None = None) -> LoopState:
        """Distill and label n random instances, then fine-tune the learner once."""
        cfg = self.config.loop
        n = cfg.bootstrap_n if n is None else n
        seed = self.config.seed if seed is None else seed
        state = self.store.loop_state
        if state.iteration > 0:
            raise StateError(
                f"loop already at iteration {state.iteration}; bootstrap would reset it"
            )
        state.budget_remaining = cfg.budget
        state.batch_size = cfg.batch_size
        state.clusters = cfg.clusters
        state.strategy = cfg.strategy
        state.rng_seed = seed
        state.iteration = 0

        if n > 0:
            if self._bootstrap_ids is None:
                selection = select_random(
                    self.store.unlabeled_ids(), n, stable_u64("bootstrap", seed)
                )
                self._bootstrap_ids = selection.chosen
                self._write_bootstrap_manifest(n, seed)
            elif len(self._bootstrap_ids) != n:
                raise StateError(
                    f"bootstrap manifest has {len(self._bootstrap_ids)} ids, asked for {n}"
                )
            done = {
                p.instance_id for p in self.store.pairs if p.provenance == "bootstrap"
            }
            todo = [i for i in self._bootstrap_ids if i not in done]
            for iid in todo:
                self.store.transition(iid, SELECTED, 0)
            candidates, failures = distill_batch(
                self.store,
                todo,
                self.config.template,
                self.bindings.teacher,
                iteration=0,
                temperature=self.config.teacher_temperature,
                base_delay=self.config.retry_base_delay,
                concurrency=self.config.distill_concurrency,
                rate_limiter=self._rate_limiter,
            )
            self.queue.enqueue(candidates, iteration=0, provenance="bootstrap")
            self.queue.reconcile(0)
            if self.config.verification_mode == "auto":
                self.queue.auto_approve(0)
            else:
                self._wait_for_decisions(0)
            self._sweep_rejected(0)
            labeled = {
                p.instance_id for p in self.store.pairs if p.provenance == "bootstrap"
            }
            if len(labeled) < n:
                self._save_snapshot()
                raise StateError(
                    f"partial bootstrap: {len(labeled)}/{n} pairs labeled; "
                    "re-run bootstrap to complete"
                )
        self._retrain()
        self._save_snapshot()
        return state

    def _write_bootstrap_manifest(self, n: int, seed: int) -> None:
        if self.store.workdir is None:
            return
        payload = {"n": n, "seed": seed, "ids": list(self._bootstrap_ids)}
        (self.store.workdir / "bootstrap.json").write_text(
            canonical_json(payload) + "\n", encoding="utf-8"
        )

    # ------------------------------------------------------------- iterations

    def run_iteration(self) -> LoopState:
        """One pass: score, select, distill, verify, retrain, account."""
        state = self.store.loop_state
        if state.budget_remaining < state.batch_size:
            raise StateError(
                f"budget {state.budget_remaining} below batch size {state.batch_size}"
            )
        self._ensure_learner_synced()
        iteration = state.iteration + 1

        if not any(p.iteration == iteration for p in self.store.pairs):
            scores = self._score_unlabeled(state)
            if len(scores) < state.batch_size:
                raise StateError(
                    f"only {len(scores)} eligible instances for batch of {state.batch_size}"
                )
            selection = self._select(scores, state, iteration)
            for iid in selection.chosen:
                self.store.transition(iid, SELECTED, iteration)
            candidates, _failures = distill_batch(
                self.store,
                selection.chosen,
                self.config.template,
                self.bindings.teacher,
                iteration=iteration,
                temperature=self.config.teacher_temperature,
                base_delay=self.config.retry_base_delay,
                concurrency=self.config.distill_concurrency,
                rate_limiter=self._rate_limiter,
            )
            info = {s.instance_id: s.informativeness for s in scores}
            self.queue.enqueue(
                candidates,
                iteration=iteration,
                provenance=state.strategy,
                informativeness=info,
            )
        self.queue.reconcile(iteration)
        if self.config.verification_mode == "auto":
            self.queue.auto_approve(iteration)
        else:
            self._wait_for_decisions(iteration)
        self._sweep_rejected(iteration)

        try:
            self._retrain()
        except ProviderError:
            self._save_snapshot(checkpoint=True)
            raise
        state.budget_remaining -= state.batch_size
        state.iteration = iteration
        self._emit(iteration)
        return state

    def run_loop(self, max_iterations: int | None = None) -> LoopState:
        """Iterate while the remaining budget covers a full batch."""
        state = self.store.loop_state
        done = 0
        while state.budget_remaining >= state.batch_size:
            if max_iterations is not None and done >= max_iterations:
                break
            self.run_iteration()
            done += 1
        return state

    def _score_unlabeled(self, state: LoopState) -> list[AttributeScore]:
        unlabeled = self.store.instances_in(UNLABELED)
        scores, failures = score_pool(
            unlabeled,
            self.bindings.learner,
            self.bindings.scorer,
            self.config.attribute,
            max_tokens=self.config.max_tokens,
            cache=self._score_cache,
            learner_revision=state.learner_revision,
        )
        for f in failures:
            self.store.record_failure("scoring", f.instance_id, f.error)
        return scores

    def _select(self, scores, state: LoopState, iteration: int):
        seed = stable_u64("select", state.rng_seed, iteration)
        if state.strategy == "random":
            return select_random([s.instance_id for s in scores], state.batch_size, seed)
        if state.strategy == "topn":
            return select_topn(scores, state.batch_size, seed)
        if state.strategy == "cluster":
            return select_cluster(scores, self._cluster_view(), state.batch_size, seed)
        raise ConfigError(f"unknown strategy {state.strategy!r}")

    def _wait_for_decisions(self, iteration: int, timeout: float | None = None) -> None:
        started = time.monotonic()
        while not self.queue.all_decided(iteration):
            if timeout is not None and time.monotonic() - started > timeout:
                raise StateError(
                    f"verification batch for iteration {iteration} still pending"
                )
            time.sleep(self.config.poll_interval)

    def _sweep_rejected(self, iteration: int) -> None:
        for inst in self.store.instances_in(REJECTED):
            self.store.transition(inst.id, UNLABELED, iteration)

    def _retrain(self) -> None:
        """Fine-tune from the base checkpoint on the full labeled set."""
        pairs = [
            (p.input_text, p.target_text)
            for p in self.store.pairs_with(None)
        ]
        revision = with_retries(
            lambda: self.bindings.learner.finetune(
                pairs,
                epochs=self.config.finetune_epochs,
                learning_rate=self.config.finetune_learning_rate,
            ),
            base_delay=self.config.retry_base_delay,
        )
        self.store.loop_state.learner_revision = revision
        self._score_cache.clear()
        self._learner_synced = True

    def _ensure_learner_synced(self) -> None:
        """After a restore, bring a stateful mock learner up to the stored L.

        Mock revisions are content-addressed, so re-finetuning on the same
        pairs reproduces the stored revision; for live providers this re-issues
        the same finetune request, which a replay tape answers verbatim.
        """
        if self._learner_synced:
            return
        if self.store.pairs:
            self._retrain()
        else:
            self._learner_synced = True

    # ----------------------------------------------------------------- output

    def _emit(self, iteration: int) -> None:
        self._save_snapshot(iteration=iteration)
        if self.judge is not None:
            report = self.judge(self.store)
            if report is not None:
                self.latest_report = report
                if self.store.workdir is not None:
                    metrics_dir = self.store.workdir / "metrics"
                    metrics_dir.mkdir(exist_ok=True)
                    (metrics_dir / f"iter_{iteration:04d}.json").write_bytes(
                        canonical_json_bytes(report.to_dict())
                    )

    def _save_snapshot(self, iteration: int | None = None, checkpoint: bool = False) -> None:
        if self.store.workdir is None:
            return
        self.store.save_snapshot()
        if checkpoint:
            self.store.save_snapshot(self.store.workdir / "checkpoint.json")
        if iteration is not None:
            snap_dir = self.store.workdir / "snapshots"
            snap_dir.mkdir(exist_ok=True)
            self.store.save_snapshot(snap_dir / f"iter_{iteration:04d}.json")

    # ------------------------------------------------------------- invariants

    def check_budget_ledger(self, bootstrap_n: int | None = None) -> None:
        """bootstrap + decided-non-refunded == |L|, and budget arithmetic holds."""
        state = self.store.loop_state
        if bootstrap_n is None:
            bootstrap_n = sum(1 for p in self.store.pairs if p.provenance == "bootstrap")
        non_bootstrap = sum(1 for p in self.store.pairs if p.provenance != "bootstrap")
        if bootstrap_n + non_bootstrap != len(self.store.pairs):
            raise StateError("pair accounting mismatch")
        labeled = len(self.store.instances_in(LABELED))
        if labeled != len({p.instance_id for p in self.store.pairs}):
            raise StateError(
                f"{labeled} labeled instances but {len(self.store.pairs)} pairs"
            )
        spent = self.initial_budget - state.budget_remaining
        if spent != state.batch_size * state.iteration:
            raise StateError(
                f"budget spent {spent} != batch_size*iterations "
                f"{state.batch_size * state.iteration}"
            )


# ------------------------------------------------------------------- splits


SPLIT_FILES = {"random": "standard.jsonl", "topn": "topn.jsonl", "cluster": "cluster.jsonl"}


def distill_pairs(
    instances,
    template,
    teacher,
    temperature: float = 0.7,
) -> list[dict]:
    """Directly distill (input, target) rows outside the loop lifecycle.

    Used for fixed test-set construction, which never enters the labeled set.
    """
    rows = []
    for inst in sorted(instances, key=lambda i: i.id):
        prompt = render(template, inst.source_text)
        content = with_retries(
            lambda: teacher.chat(
                [{"role": "user", "content": prompt}], temperature=temperature
            )
        )
        rows.append(
            {
                "id": inst.id,
                "input": inst.source_text,
                "target": content,
                "provenance": "test",
                "iteration": 0,
            }
        )
    return rows


def build_splits(
    config: Config,
    bindings_factory: Callable[[str], ProviderBindings],
    out_dir: str | Path,
    pool_path: str | Path | None = None,
) -> dict:
    """Construct the three training splits plus the fixed, disjoint test set.

    All three strategy runs share one bootstrap (identical pairs) and one
    held-out test set carved from the pool before any selection.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool_path = pool_path or config.pool_path
    if not pool_path:
        raise ConfigError("build_splits requires a pool path")
    # Pin generated ids before any filtering so test/train ids stay comparable.
    records = []
    for i, (lineno, obj) in enumerate(read_pool_records(pool_path)):
        iid = obj.get("id")
        records.append((lineno, {**obj, "id": str(iid) if iid is not None else f"{i:06d}"}))

    base = PoolStore()
    base.ingest_records(records)
    test_size = config.holdout.test_size
    test_ids: tuple[str, ...] = ()
    if test_size:
        test_ids = select_random(
            base.unlabeled_ids(), test_size, stable_u64("holdout", config.seed)
        ).chosen
    test_set = set(test_ids)

    test_rows = distill_pairs(
        [base.get(i) for i in test_ids],
        config.template,
        bindings_factory("test").teacher,
        temperature=config.teacher_temperature,
    )
    test_path = out_dir / "test.jsonl"
    with test_path.open("w", encoding="utf-8") as fh:
        for row in test_rows:
            fh.write(canonical_json(row) + "\n")

    train_store = PoolStore()
    if config.holdout.remove_from_pool:
        train_store.ingest_records(
            [(ln, obj) for ln, obj in records if obj["id"] not in test_set]
        )
    else:
        train_store.ingest_records(records)

    boot_orch = Orchestrator(train_store, bindings_factory("bootstrap"), config)
    boot_orch.bootstrap(config.loop.bootstrap_n, config.seed)
    post_bootstrap = train_store.snapshot_dict()
    bootstrap_ids = sorted(
        p.instance_id for p in train_store.pairs if p.provenance == "bootstrap"
    )

    manifest: dict = {
        "test": {"path": str(test_path), "count": len(test_rows)},
        "splits": {},
        "bootstrap_ids": bootstrap_ids,
    }
    for strategy, filename in SPLIT_FILES.items():
        s_store = PoolStore.restore(post_bootstrap)
        s_store.loop_state.strategy = strategy
        s_config = replace(config)
        s_config.loop = replace(config.loop, strategy=strategy)
        orch = Orchestrator(s_store, bindings_factory(strategy), s_config)
        if strategy == "cluster":
            orch.embed_and_cluster()
        orch.run_loop()
        split_path = out_dir / filename
        count = s_store.export_split({"bootstrap", strategy}, split_path)
        train_ids = [p.instance_id for p in s_store.pairs_with({"bootstrap", strategy})]
        validate_disjoint(test_ids, train_ids)
        boot_here = sorted(
            p.instance_id for p in s_store.pairs if p.provenance == "bootstrap"
        )
        if boot_here != bootstrap_ids:
            raise StateError(f"bootstrap ids drifted in {strategy} split")
        manifest["splits"][strategy] = {"path": str(split_path), "count": count}

    manifest["total_pairs"] = len(test_rows) + sum(
        s["count"] for s in manifest["splits"].values()
    )
    (out_dir / "splits_manifest.json").write_bytes(canonical_json_bytes(manifest))
    return manifest

"""Acceptance suite: every release criterion at its pinned tolerance.

Each test prints one PASS/FAIL line (run with -s to stream them). All runs
use mock providers and auto-approved verification.
"""

import itertools
import json
import math
import random
import time

import numpy as np
from alforge.clustering import kmeans_fit
from alforge.config import Config, LoopConfig
from alforge.metrics import Judgment, error_ratio_variance, mtld
from alforge.orchestrator import Orchestrator, providers_from_config
from alforge.pool import PoolStore
from alforge.scoring import entropy, select_cluster, select_topn, softmax
from alforge.sim import default_experiment, run_experiment
from test_scoring import model_with, scores_from
from conftest import write_jsonl

_cache: dict = {}


def criterion(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f" — {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


def full_experiment():
    if "report" not in _cache:
        started = time.monotonic()
        _cache["report"] = run_experiment(default_experiment())
        _cache["runtime"] = time.monotonic() - started
    return _cache["report"], _cache["runtime"]


class TestAcceptance:
    def test_metric_oracles(self):
        started = time.monotonic()
        checks = [
            abs(entropy([0.25] * 4) - math.log(4)) < 1e-9,
            abs(entropy([0.0, 1.0])) < 1e-9,
            abs(entropy([0.5, 0.25, 0.25]) - 1.039720770839918) < 1e-9,
            abs(softmax([0.0, 0.0])[0] - 0.5) < 1e-9,
            abs(softmax([2.0, 0.0])[0] - 0.8807970779778823) < 1e-9,
            abs(softmax([2.0, 0.0])[1] - 0.11920292202211755) < 1e-9,
            abs(mtld("a b a a b a".split()) - 3.0) < 1e-9,
            abs(mtld([f"t{i}" for i in range(50)]) - 50.0) < 1e-9,
            abs(mtld(["one"]) - 1.0) < 1e-9,
        ]
        judgments = [
            Judgment(f"a{i}", "a", i >= 2) for i in range(10)
        ] + [Judgment(f"b{i}", "b", i >= 4) for i in range(10)]
        _, variance = error_ratio_variance(judgments)
        checks.append(abs(variance - 0.01) < 1e-9)
        elapsed = time.monotonic() - started
        criterion(
            "metric oracles (entropy, softmax, error variance, MTLD)",
            all(checks) and elapsed < 1.0,
            f"{sum(checks)}/{len(checks)} values within 1e-9 in {elapsed:.3f}s",
        )

    def test_selection_oracles(self):
        started = time.monotonic()
        rng = random.Random(1234)
        ok = True
        for _ in range(200):
            size = rng.randint(1, 12)
            values = {
                f"i{j:02d}": rng.choice([rng.random(), 0.3, 0.6]) for j in range(size)
            }
            n = rng.randint(1, size)
            chosen = select_topn(scores_from(values), n).chosen
            best = min(
                itertools.combinations(sorted(values), n),
                key=lambda combo: (-math.fsum(values[i] for i in combo), combo),
            )
            ok = ok and sorted(chosen) == list(best)

        values = {f"i{j}": (j * 31 % 17) / 17 for j in range(10)}
        scores = scores_from(values)
        single = model_with({i: 0 for i in values}, k=1)
        ok = ok and select_cluster(scores, single, 4).chosen == select_topn(scores, 4).chosen

        quota_scores = scores_from(
            {"a1": 0.9, "a2": 0.8, "a3": 0.1, "b1": 0.7, "b2": 0.2}
        )
        quota_model = model_with(
            {"a1": 0, "a2": 0, "a3": 0, "b1": 1, "b2": 1}, k=2
        )
        ok = ok and sorted(select_cluster(quota_scores, quota_model, 4).chosen) == [
            "a1", "a2", "b1", "b2",
        ]
        exhausted = scores_from({"a1": 0.9, "a2": 0.8, "a3": 0.7, "a4": 0.6})
        one_sided = model_with({f"a{j}": 0 for j in range(1, 5)}, k=2)
        ok = ok and len(select_cluster(exhausted, one_sided, 4).chosen) == 4
        elapsed = time.monotonic() - started
        criterion(
            "selection oracles (top-n exhaustive, k=1 reduction, quota fixtures)",
            ok and elapsed < 5.0,
            f"200 pools + fixtures in {elapsed:.3f}s",
        )

    def test_kmeans_quality(self):
        started = time.monotonic()
        ok = True
        worst = 1.0
        for seed in range(50):
            rng = random.Random(1000 + seed)
            n = rng.randint(4, 8)
            k = rng.randint(2, 3)
            points = np.array([[rng.random(), rng.random()] for _ in range(n)])
            model = kmeans_fit(points, k=k, seed=seed)
            best = float("inf")
            for labels in itertools.product(range(k), repeat=n):
                if len(set(labels)) != k:
                    continue
                total = 0.0
                for c in range(k):
                    members = points[[i for i in range(n) if labels[i] == c]]
                    total += float(((members - members.mean(axis=0)) ** 2).sum())
                best = min(best, total)
            ratio = model.inertia / best if best > 1e-15 else 1.0
            worst = max(worst, ratio)
            ok = ok and model.inertia <= best * 1.05 + 1e-12
            history = model.inertia_history
            ok = ok and all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

        pts = [(random.Random(7).random(), random.Random(9).random()) for _ in range(20)]
        rng = random.Random(55)
        pts = [(rng.random(), rng.random()) for _ in range(40)]
        ok = ok and kmeans_fit(pts, 4, seed=3).to_bytes() == kmeans_fit(pts, 4, seed=3).to_bytes()
        elapsed = time.monotonic() - started
        criterion(
            "kmeans within 5% of exhaustive optimum, monotone, byte-deterministic",
            ok and elapsed < 10.0,
            f"worst ratio {worst:.4f} over 50 seeds in {elapsed:.2f}s",
        )

    def test_simulation_reproduces_ordering(self):
        report, runtime = full_experiment()
        runs = report["runs"]
        by = lambda s: {r["seed"]: r for r in runs if r["strategy"] == s}
        cluster, topn, rand = by("cluster"), by("topn"), by("random")
        seeds = sorted(cluster)

        mean = lambda rows, key: sum(r[key] for r in rows.values()) / len(rows)
        m_cluster = mean(cluster, "error_ratio_variance")
        m_topn = mean(topn, "error_ratio_variance")
        m_random = mean(rand, "error_ratio_variance")
        ordering = m_cluster < m_topn < m_random

        strictly_below = sum(
            1
            for s in seeds
            if cluster[s]["error_ratio_variance"] < rand[s]["error_ratio_variance"]
        )
        cluster_coverage = all(cluster[s]["min_group_labeled"] >= 10 for s in seeds)
        random_sparse = sum(1 for s in seeds if rand[s]["min_group_labeled"] < 10)

        five_iterations = all(r["iterations"] == 5 for r in runs)
        ok = (
            ordering
            and strictly_below >= 0.8 * len(seeds)
            and cluster_coverage
            and random_sparse >= 0.8 * len(seeds)
            and five_iterations
            and runtime < 60.0
        )
        criterion(
            "simulation reproduces the qualitative ordering",
            ok,
            f"var {m_cluster:.5f} < {m_topn:.5f} < {m_random:.5f}; "
            f"cluster<random in {strictly_below}/{len(seeds)} seeds; "
            f"cluster min-group >= 10 always; random min-group < 10 in "
            f"{random_sparse}/{len(seeds)}; {runtime:.1f}s",
        )

    def test_transfer_analog(self):
        report, _ = full_experiment()
        runs = report["runs"]
        mean_t = lambda s: sum(
            r["transfer_error_ratio_variance"] for r in runs if r["strategy"] == s
        ) / sum(1 for r in runs if r["strategy"] == s)
        cluster_t, random_t = mean_t("cluster"), mean_t("random")
        criterion(
            "transfer model trained on the cluster split beats the random split",
            cluster_t < random_t,
            f"mean transfer variance {cluster_t:.5f} < {random_t:.5f} over 20 seeds",
        )

    def test_loop_accounting_and_crash_resume(self, tmp_path):
        rows = [{"text": f"sample number {i} for accounting"} for i in range(500)]
        pool_path = write_jsonl(tmp_path / "pool.jsonl", rows)

        def config(workdir, record):
            cfg = Config()
            cfg.loop = LoopConfig(
                budget=100, batch_size=20, clusters=10, strategy="topn", bootstrap_n=100
            )
            cfg.verification_mode = "auto"
            cfg.retry_base_delay = 0.0
            cfg.seed = 17
            cfg.workdir = str(workdir)
            cfg.record = record
            cfg.replay_dir = str(tmp_path / "tape")
            cfg.validate()
            return cfg

        cfg = config(tmp_path / "run_a", record=True)
        store = PoolStore(workdir=tmp_path / "run_a")
        store.ingest(pool_path)
        store.loop_state.rng_seed = 17
        orch = Orchestrator(store, providers_from_config(cfg, "run"), cfg)
        orch.bootstrap(100, seed=17)

        iterations = 0
        ledger_ok = True
        while store.loop_state.budget_remaining >= store.loop_state.batch_size:
            orch.run_iteration()
            iterations += 1
            try:
                orch.check_budget_ledger(bootstrap_n=100)
            except Exception:
                ledger_ok = False
        size_ok = len(store.pairs) == 200 and iterations == 5
        reference = store.snapshot_bytes()

        replay_cfg = config(tmp_path / "run_b", record=False)
        snap = (tmp_path / "run_a" / "snapshots" / "iter_0003.json").read_bytes()
        resumed = PoolStore.restore(snap, workdir=tmp_path / "run_b")
        orch2 = Orchestrator(resumed, providers_from_config(replay_cfg, "run"), replay_cfg)
        orch2.run_loop()
        resume_ok = resumed.snapshot_bytes() == reference

        criterion(
            "loop accounting: 5 iterations, |L| = bootstrap + 100, ledger, crash-resume",
            size_ok and ledger_ok and resume_ok,
            f"iterations={iterations}, |L|={len(store.pairs)}, "
            f"ledger_ok={ledger_ok}, resume_identical={resume_ok}",
        )

    def test_split_construction(self, tmp_path):
        from alforge.orchestrator import build_splits
        from alforge.config import HoldoutConfig
        from test_orchestrator import mock_bindings

        rows = [{"text": f"pool entry {i} with several words"} for i in range(1200)]
        pool_path = write_jsonl(tmp_path / "pool.jsonl", rows)
        cfg = Config()
        cfg.seed = 23
        cfg.pool_path = str(pool_path)
        cfg.loop = LoopConfig(
            budget=100, batch_size=20, clusters=10, strategy="cluster", bootstrap_n=100
        )
        cfg.holdout = HoldoutConfig(test_size=400, remove_from_pool=True)
        cfg.retry_base_delay = 0.0
        cfg.validate()
        out = tmp_path / "splits"
        manifest = build_splits(cfg, lambda label: mock_bindings(), out)

        counts_ok = (
            manifest["test"]["count"] == 400
            and all(manifest["splits"][s]["count"] == 200 for s in ("random", "topn", "cluster"))
            and manifest["total_pairs"] == 1000
        )
        test_ids = {
            json.loads(l)["id"] for l in (out / "test.jsonl").read_text().splitlines()
        }
        boot_sets = []
        disjoint_ok = True
        for name in ("standard.jsonl", "topn.jsonl", "cluster.jsonl"):
            split_rows = [json.loads(l) for l in (out / name).read_text().splitlines()]
            disjoint_ok = disjoint_ok and not ({r["id"] for r in split_rows} & test_ids)
            boot_sets.append(
                sorted(r["id"] for r in split_rows if r["provenance"] == "bootstrap")
            )
        shared_bootstrap = boot_sets[0] == boot_sets[1] == boot_sets[2]
        criterion(
            "split construction: 3x200 train + 400 test = 1000, disjoint, shared bootstrap",
            counts_ok and disjoint_ok and shared_bootstrap,
            f"total={manifest['total_pairs']}, disjoint={disjoint_ok}, "
            f"shared_bootstrap={shared_bootstrap}",
        )

    def test_simulate_determinism(self, tmp_path):
        from dataclasses import replace

        exp = replace(
            default_experiment(),
            strategies=("random", "cluster"),
            seeds=(0, 1, 2),
        )
        exp = replace(exp, spec=replace(exp.spec, total=400), test_total=100)
        run_experiment(exp, tmp_path / "first")
        run_experiment(exp, tmp_path / "second")
        same_report = (tmp_path / "first" / "report.json").read_bytes() == (
            tmp_path / "second" / "report.json"
        ).read_bytes()
        same_csv = (tmp_path / "first" / "per_seed.csv").read_bytes() == (
            tmp_path / "second" / "per_seed.csv"
        ).read_bytes()
        criterion(
            "simulate twice with identical config is byte-identical",
            same_report and same_csv,
            f"report.json identical={same_report}, per_seed.csv identical={same_csv}",
        )

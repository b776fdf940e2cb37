import math

import pytest

from alforge.errors import ConfigError
from alforge.sim import (
    ExperimentConfig,
    GroupSpec,
    MockLearnerState,
    SyntheticPoolSpec,
    apportion,
    default_experiment,
    gen_pool,
    mock_scorer,
    run_experiment,
    spec_from_dict,
    threshold_judgments,
)


def two_group_spec(total=100, seed=3):
    return SyntheticPoolSpec(
        groups=(GroupSpec("alpha", 0.5), GroupSpec("bravo", 0.5)), total=total, seed=seed
    )


class TestApportionment:
    def test_even_split_exact(self):
        assert apportion(100, [0.5, 0.5]) == [50, 50]

    def test_largest_remainder(self):
        # 7 * (0.4, 0.35, 0.25) = (2.8, 2.45, 1.75): floors (2,2,1),
        # two leftovers go to the largest remainders (0.8 then 0.75).
        assert apportion(7, [0.4, 0.35, 0.25]) == [3, 2, 2]

    def test_sums_exactly(self):
        props = (0.30, 0.20, 0.15, 0.10, 0.08, 0.06, 0.05, 0.03, 0.02, 0.01)
        counts = apportion(2000, props)
        assert sum(counts) == 2000
        assert counts == [round(2000 * p) for p in props]


class TestGenPool:
    def test_exact_group_quota(self):
        pool = gen_pool(two_group_spec())
        by_group = {}
        for inst in pool:
            by_group[inst.subgroup] = by_group.get(inst.subgroup, 0) + 1
        assert by_group == {"alpha": 50, "bravo": 50}

    def test_same_seed_identical(self):
        a = gen_pool(two_group_spec())
        b = gen_pool(two_group_spec())
        assert a == b

    def test_different_seed_differs(self):
        assert gen_pool(two_group_spec(seed=1)) != gen_pool(two_group_spec(seed=2))

    def test_embeddings_unit_and_group_aligned(self):
        pool = gen_pool(two_group_spec())
        for inst in pool:
            norm = math.sqrt(sum(x * x for x in inst.embedding))
            assert norm == pytest.approx(1.0, abs=1e-9)
            assert inst.subgroup in inst.source_text
        # Anchors are orthogonal axes: same-group vectors nearly parallel.
        alpha = [i.embedding for i in pool if i.subgroup == "alpha"]
        dot = sum(a * b for a, b in zip(alpha[0], alpha[1]))
        assert dot > 0.99

    def test_invalid_proportions(self):
        with pytest.raises(ConfigError, match="sum"):
            SyntheticPoolSpec(
                groups=(GroupSpec("a", 0.5), GroupSpec("b", 0.4)), total=100, seed=0
            ).validate()

    def test_total_too_small(self):
        with pytest.raises(ConfigError, match="below 10 x"):
            two_group_spec(total=15).validate()


class TestMockLearnerState:
    def test_linear_gain_with_clamp(self):
        state = MockLearnerState(base_error=0.5, gain_per_label=0.1, floor=0.05)
        assert state.adherence("g") == pytest.approx(0.5)
        state.labeled_count_per_group["g"] = 3
        assert state.adherence("g") == pytest.approx(0.8)
        state.labeled_count_per_group["g"] = 50
        assert state.adherence("g") == pytest.approx(0.95)  # floor clamp

    def test_probability_always_in_unit_interval(self):
        state = MockLearnerState(base_error=0.9, gain_per_label=0.5, floor=0.0)
        for count in range(0, 10):
            state.labeled_count_per_group["g"] = count
            assert 0.0 <= state.adherence("g") <= 1.0


class TestMockScorer:
    def make_instance(self, group="alpha"):
        return gen_pool(two_group_spec(total=20))[0]

    def test_even_odds_gives_symmetric_logits(self):
        inst = self.make_instance()
        state = MockLearnerState(base_error=0.5, gain_per_label=0.0, floor=0.0)
        logits = mock_scorer(inst, state, noise_amp=0.0)
        assert logits[0] - logits[1] == pytest.approx(0.0, abs=1e-12)

    def test_inverse_softmax_gap(self):
        inst = self.make_instance()
        p = 1.0 / (1.0 + math.exp(-2.0))  # adherence 0.8808 -> gap exactly 2
        state = MockLearnerState(base_error=1.0 - p, gain_per_label=0.0, floor=0.0)
        logits = mock_scorer(inst, state, noise_amp=0.0)
        assert logits[0] - logits[1] == pytest.approx(2.0, abs=1e-9)

    def test_noise_bounded(self):
        inst = self.make_instance()
        state = MockLearnerState(base_error=0.5, gain_per_label=0.0, floor=0.0)
        for salt in range(50):
            logits = mock_scorer(inst, state, noise_amp=0.02, salt=str(salt))
            p = 1.0 / (1.0 + math.exp(logits[1] - logits[0]))
            assert abs(p - 0.5) <= 0.02 + 1e-9

    def test_unknown_group_errors(self):
        from alforge.errors import StateError
        from alforge.pool import Instance

        with pytest.raises(StateError, match="no group"):
            mock_scorer(
                Instance(id="x", source_text="t"),
                MockLearnerState(),
            )


class TestThresholdJudge:
    def test_ratios_track_error_rates(self):
        pool = gen_pool(two_group_spec(total=200))
        judgments = threshold_judgments(pool, {"alpha": 0.25, "bravo": 0.0})
        from alforge.metrics import error_ratio_variance

        ratios, _ = error_ratio_variance(judgments)
        assert ratios["alpha"] == pytest.approx(0.25, abs=0.01)
        assert ratios["bravo"] == 0.0

    def test_deterministic(self):
        pool = gen_pool(two_group_spec(total=40))
        a = threshold_judgments(pool, {"alpha": 0.3, "bravo": 0.7})
        b = threshold_judgments(pool, {"alpha": 0.3, "bravo": 0.7})
        assert a == b


def small_experiment(**overrides) -> ExperimentConfig:
    from dataclasses import replace

    spec = SyntheticPoolSpec(
        groups=(
            GroupSpec("alpha", 0.55),
            GroupSpec("bravo", 0.30),
            GroupSpec("charlie", 0.15),
        ),
        total=120,
        seed=5,
    )
    base = ExperimentConfig(
        spec=spec,
        strategies=("random", "cluster"),
        seeds=(0, 1),
        budget=20,
        batch_size=10,
        clusters=3,
        test_total=60,
    )
    return replace(base, **overrides)


class TestRunExperiment:
    def test_cardinality_and_iterations(self, tmp_path):
        report = run_experiment(small_experiment(), tmp_path)
        assert len(report["runs"]) == 4
        assert all(r["iterations"] == 2 for r in report["runs"])
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "per_seed.csv").exists()
        assert (tmp_path / "runs" / "cluster-0000" / "snapshot.json").exists()

    def test_byte_identical_reports(self, tmp_path):
        run_experiment(small_experiment(), tmp_path / "a")
        run_experiment(small_experiment(), tmp_path / "b")
        assert (tmp_path / "a" / "report.json").read_bytes() == (
            tmp_path / "b" / "report.json"
        ).read_bytes()
        assert (tmp_path / "a" / "per_seed.csv").read_bytes() == (
            tmp_path / "b" / "per_seed.csv"
        ).read_bytes()

    def test_rare_groups_reached_by_cluster_only(self, tmp_path):
        # Two 1%-proportion groups: quota selection must label them,
        # proportional random sampling mostly cannot.
        spec = SyntheticPoolSpec(
            groups=(
                GroupSpec("alpha", 0.66),
                GroupSpec("bravo", 0.30),
                GroupSpec("charlie", 0.02),
                GroupSpec("delta", 0.02),
            ),
            total=500,
            seed=2,
        )
        config = ExperimentConfig(
            spec=spec,
            strategies=("random", "cluster"),
            seeds=(0, 1, 2),
            budget=24,
            batch_size=12,
            clusters=4,
            test_total=100,
        )
        report = run_experiment(config)
        for run in report["runs"]:
            rare = min(
                run["labeled_per_group"]["charlie"], run["labeled_per_group"]["delta"]
            )
            if run["strategy"] == "cluster":
                assert rare >= config.budget // config.clusters
        random_rare = [
            min(r["labeled_per_group"]["charlie"], r["labeled_per_group"]["delta"])
            for r in report["runs"]
            if r["strategy"] == "random"
        ]
        assert min(random_rare) < config.budget // config.clusters

    def test_csv_matches_runs(self, tmp_path):
        import csv

        report = run_experiment(small_experiment(), tmp_path)
        with (tmp_path / "per_seed.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(report["runs"])
        for row, run in zip(rows, report["runs"]):
            assert row["strategy"] == run["strategy"]
            assert int(row["seed"]) == run["seed"]
            assert float(row["error_ratio_variance"]) == pytest.approx(
                run["error_ratio_variance"]
            )


class TestSpecFromDict:
    def test_defaults(self):
        exp = spec_from_dict({})
        assert exp == default_experiment()

    def test_overrides(self):
        exp = spec_from_dict(
            {
                "groups": [
                    {"name": "a", "proportion": 0.7},
                    {"name": "b", "proportion": 0.3, "difficulty": 0.5},
                ],
                "total": 500,
                "seeds": 3,
                "budget": 40,
                "strategies": ["cluster"],
            }
        )
        assert exp.spec.total == 500
        assert exp.seeds == (0, 1, 2)
        assert exp.budget == 40
        assert exp.strategies == ("cluster",)
        assert exp.spec.groups[1].difficulty == 0.5

    def test_bad_groups_rejected(self):
        with pytest.raises(ConfigError):
            spec_from_dict({"groups": [{"name": "a", "proportion": 0.4}]})

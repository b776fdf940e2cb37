import itertools
import random

import numpy as np
import pytest

from alforge.clustering import ClusterModel, assign, kmeans_fit
from alforge.embedding import embed_batch
from alforge.errors import ProviderError, StateError
from alforge.providers import FlakyProvider, MockEmbedder


def brute_force_optimum(points: np.ndarray, k: int) -> float:
    """Global minimum inertia over every surjective assignment of points."""
    n = len(points)
    best = float("inf")
    for labels in itertools.product(range(k), repeat=n):
        if len(set(labels)) != k:
            continue
        total = 0.0
        for c in range(k):
            members = points[[i for i in range(n) if labels[i] == c]]
            centroid = members.mean(axis=0)
            total += float(((members - centroid) ** 2).sum())
        if total < best:
            best = total
    return best


def partition_of(model: ClusterModel) -> set[frozenset]:
    groups: dict[int, set] = {}
    for iid, c in model.assignments.items():
        groups.setdefault(c, set()).add(iid)
    return {frozenset(g) for g in groups.values()}


class TestKmeansFit:
    def test_two_blob_hand_case(self):
        points = [(0.0, 0.0), (0.0, 1.0), (10.0, 10.0), (10.0, 11.0)]
        model = kmeans_fit(points, k=2, seed=3, ids=list("abcd"))
        assert partition_of(model) == {frozenset("ab"), frozenset("cd")}
        # Each blob: two points at distance 0.5 from the centroid -> 0.25 * 4.
        assert model.inertia == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_k_equals_n(self):
        points = [(float(i), float(i * i)) for i in range(5)]
        model = kmeans_fit(points, k=5, seed=0)
        assert model.inertia == pytest.approx(0.0, abs=1e-12)
        assert len(partition_of(model)) == 5

    def test_determinism_byte_exact(self):
        rng = random.Random(11)
        points = [(rng.random(), rng.random(), rng.random()) for _ in range(40)]
        a = kmeans_fit(points, k=4, seed=9)
        b = kmeans_fit(points, k=4, seed=9)
        assert a.to_bytes() == b.to_bytes()

    def test_k_exceeds_distinct_vectors(self):
        with pytest.raises(StateError):
            kmeans_fit([(1.0, 1.0), (1.0, 1.0)], k=2, seed=0)

    def test_non_finite_errors(self):
        with pytest.raises(StateError):
            kmeans_fit([(float("nan"), 0.0), (1.0, 1.0)], k=1, seed=0)

    def test_no_empty_clusters(self):
        rng = random.Random(5)
        for trial in range(10):
            points = [(rng.random(), rng.random()) for _ in range(12)]
            model = kmeans_fit(points, k=3, seed=trial)
            assert len(partition_of(model)) == 3

    def test_inertia_recomputable(self):
        rng = random.Random(2)
        points = np.array([[rng.random(), rng.random()] for _ in range(30)])
        model = kmeans_fit(points, k=3, seed=1)
        total = 0.0
        for i, iid in enumerate(sorted(model.assignments)):
            c = model.assignments[iid]
            total += float(((points[int(iid)] - model.centroids[c]) ** 2).sum())
        assert total == pytest.approx(model.inertia, rel=1e-9)

    def test_inertia_history_non_increasing(self):
        rng = random.Random(8)
        points = [(rng.random(), rng.random()) for _ in range(50)]
        model = kmeans_fit(points, k=4, seed=2)
        history = model.inertia_history
        assert history, "history collected"
        for earlier, later in zip(history, history[1:]):
            assert later <= earlier + 1e-9

    def test_near_optimal_on_toy_inputs(self):
        # Within 5% of the exhaustive-partition optimum across 50 seeds.
        for seed in range(50):
            rng = random.Random(1000 + seed)
            n = rng.randint(4, 8)
            k = rng.randint(2, 3)
            points = np.array([[rng.random(), rng.random()] for _ in range(n)])
            model = kmeans_fit(points, k=k, seed=seed)
            optimum = brute_force_optimum(points, k)
            assert model.inertia <= optimum * 1.05 + 1e-12, f"seed {seed}"

    def test_permutation_invariance(self):
        rng = random.Random(4)
        points = [(rng.random(), rng.random()) for _ in range(24)]
        ids = [f"p{i}" for i in range(24)]
        base = kmeans_fit(points, k=3, seed=6, ids=ids)
        order = list(range(24))
        rng.shuffle(order)
        permuted = kmeans_fit(
            [points[i] for i in order], k=3, seed=6, ids=[ids[i] for i in order]
        )
        assert partition_of(base) == partition_of(permuted)

    def test_model_round_trip(self):
        points = [(0.0, 0.0), (0.0, 1.0), (5.0, 5.0)]
        model = kmeans_fit(points, k=2, seed=0)
        again = ClusterModel.from_dict(model.to_dict())
        assert again.to_bytes() == model.to_bytes()


class TestAssign:
    def make_model(self):
        centroids = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]])
        return ClusterModel(
            k=5, centroids=centroids, assignments={}, inertia=0.0, seed=0, iterations_run=1
        )

    def test_exact_centroid(self):
        model = self.make_model()
        assert assign([1.0, 1.0], model) == 3

    def test_tie_breaks_to_lowest_index(self):
        model = self.make_model()
        # (0.5, 0.0) is equidistant from centroids 0 and 1.
        assert assign([0.5, 0.0], model) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(StateError):
            assign([1.0, 2.0, 3.0], self.make_model())

    def test_matches_linear_scan_oracle(self):
        model = self.make_model()
        rng = random.Random(3)
        for _ in range(200):
            v = np.array([rng.uniform(-1, 2), rng.uniform(-1, 2)])
            expected = min(
                range(5),
                key=lambda c: (float(((model.centroids[c] - v) ** 2).sum()), c),
            )
            assert assign(v, model) == expected


class TestEmbedBatch:
    def test_deterministic_for_identical_texts(self):
        provider = MockEmbedder(dim=8, noise=0.02)
        a = embed_batch(["same text", "same text"], provider)
        assert a[0] == a[1]
        b = embed_batch(["same text"], provider)
        assert b[0] == a[0]

    def test_unit_norm(self):
        provider = MockEmbedder(dim=8, noise=0.05)
        for v in embed_batch(["one", "two", "three"], provider):
            assert sum(x * x for x in v) == pytest.approx(1.0, abs=1e-12)

    def test_vectors_cluster_by_subgroup(self):
        groups = ["alpha", "bravo", "charlie"]
        provider = MockEmbedder(groups=groups, dim=8, noise=0.02)
        texts = [f"sample {i} about {groups[i % 3]}" for i in range(30)]
        vectors = embed_batch(texts, provider)
        model = kmeans_fit(vectors, k=3, seed=0, ids=[str(i) for i in range(30)])
        clusters_by_group = {}
        for i in range(30):
            clusters_by_group.setdefault(groups[i % 3], set()).add(
                model.assignments[str(i)]
            )
        for group, clusters in clusters_by_group.items():
            assert len(clusters) == 1, f"{group} split across clusters"
        assert len({next(iter(c)) for c in clusters_by_group.values()}) == 3

    def test_empty_batch(self):
        with pytest.raises(ProviderError, match="empty batch"):
            embed_batch([], MockEmbedder())

    def test_retry_then_success(self):
        provider = FlakyProvider(MockEmbedder(dim=4), fail_first=2)
        vectors = embed_batch(["hello"], provider, base_delay=0.0)
        assert len(vectors) == 1

    def test_retry_exhaustion(self):
        provider = FlakyProvider(MockEmbedder(dim=4), fail_first=10)
        with pytest.raises(ProviderError, match="after 3 attempts"):
            embed_batch(["hello"], provider, base_delay=0.0)

    def test_dimension_mismatch_rejected(self):
        class Ragged:
            def embed(self, texts):
                return [[1.0, 0.0], [1.0, 0.0, 0.0]]

        with pytest.raises(ProviderError, match="dimension mismatch"):
            embed_batch(["a", "b"], Ragged(), base_delay=0.0)

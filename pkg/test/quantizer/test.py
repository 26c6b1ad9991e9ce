import unittest

import numpy as np

from svcq.codebook import Codebook
from svcq.errors import (
    DimensionMismatch,
    NonFiniteData,
    NonFiniteInput,
    TooFewPoints,
)
from svcq.quantizer import (
    TrainingStats,
    assign,
    assign_batch,
    inertia,
    kmeanspp_init,
    lloyd_train,
    train_codebook,
)
from svcq.tier import Tier


def _brute_force(centroids, query):
    distances = ((centroids.astype(np.float64) - query) ** 2).sum(axis=1)
    return int(np.argmin(distances))


class TestKMeansProperties(unittest.TestCase):
    def test_random_instances(self):
        rng = np.random.default_rng(1234)
        for instance in range(20):
            num_points = int(rng.integers(50, 2001))
            dim = int(rng.integers(1, 33))
            k = int(rng.integers(1, 17))
            data = rng.normal(size=(num_points, dim)) * rng.uniform(0.5, 5.0)

            codebook, stats = train_codebook(data, k, seed=instance, max_iters=50)

            history = stats.inertia_history
            for previous, current in zip(history, history[1:]):
                self.assertLessEqual(current, previous * (1 + 1e-9) + 1e-12)
            self.assertLessEqual(stats.final_inertia, stats.init_inertia * (1 + 1e-9))
            self.assertEqual(codebook.k, k)
            self.assertEqual(codebook.dim, dim)

            queries = rng.normal(size=(100, dim)) * 3.0
            expected = [_brute_force(codebook.centroids, query) for query in queries]
            self.assertEqual([assign(codebook, query) for query in queries], expected)
            self.assertEqual(assign_batch(codebook, queries).tolist(), expected)

    def test_recovers_separated_clusters(self):
        rng = np.random.default_rng(7)
        centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        data = np.concatenate(
            [center + rng.normal(scale=0.5, size=(300, 2)) for center in centers]
        )
        codebook, stats = train_codebook(data, 3, seed=0)
        self.assertTrue(stats.converged)
        recovered = codebook.centroids[np.lexsort(codebook.centroids.T[::-1])]
        expected = centers[np.lexsort(centers.T[::-1])]
        self.assertLess(np.abs(recovered - expected).max(), 0.1 * 10.0)

    def test_same_seed_same_codebook(self):
        data = np.random.default_rng(3).normal(size=(500, 8))
        first, _ = train_codebook(data, 8, seed=11)
        second, _ = train_codebook(data, 8, seed=11)
        self.assertEqual(first, second)
        self.assertEqual(first.training_meta.seed, 11)

    def test_single_centroid_is_the_mean(self):
        data = np.random.default_rng(5).normal(size=(200, 3))
        codebook, stats = train_codebook(data, 1)
        np.testing.assert_allclose(codebook.centroids[0], data.mean(axis=0), rtol=1e-5, atol=1e-6)
        self.assertTrue(stats.converged)

    def test_as_many_points_as_centroids(self):
        data = np.arange(12, dtype=np.float64).reshape(4, 3)
        codebook, stats = train_codebook(data, 4)
        self.assertEqual(stats.final_inertia, 0.0)
        self.assertEqual(sorted(assign_batch(codebook, data).tolist()), [0, 1, 2, 3])

    def test_identical_points(self):
        data = np.ones((10, 2))
        codebook, stats = train_codebook(data, 3, seed=2)
        self.assertEqual(stats.final_inertia, 0.0)
        self.assertEqual(inertia(codebook, data), 0.0)

    def test_empty_cluster_is_reseeded(self):
        data = np.array([[0.0], [0.1], [10.0], [10.1]])
        init = np.array([[0.05], [100.0]])
        codebook, stats = lloyd_train(data, init, tier=Tier.Phone)
        self.assertGreaterEqual(stats.empty_cluster_reassignments, 1)
        self.assertEqual(sorted(assign_batch(codebook, data).tolist()), [0, 0, 1, 1])

    def test_iteration_limit(self):
        data = np.random.default_rng(8).normal(size=(400, 4))
        _, stats = train_codebook(data, 16, max_iters=2, tol=0.0)
        self.assertEqual(stats.iterations_run, 2)
        self.assertEqual(len(stats.inertia_history), 2)
        self.assertFalse(stats.converged)

    def test_too_few_points(self):
        with self.assertRaises(TooFewPoints) as context:
            train_codebook(np.zeros((3, 2)), 4, tier=Tier.Word)
        self.assertEqual(context.exception.tier, Tier.Word)
        self.assertIn("word", str(context.exception))

    def test_non_finite_data(self):
        data = np.zeros((5, 2))
        data[2, 1] = np.nan
        with self.assertRaises(NonFiniteData):
            train_codebook(data, 2)

    def test_converges_onto_two_points(self):
        data = np.array([[0.0], [10.0]])
        codebook, stats = lloyd_train(data, np.array([[1.0], [9.0]]))
        np.testing.assert_array_equal(codebook.centroids[:, 0], [0.0, 10.0])
        self.assertEqual(stats.final_inertia, 0.0)
        self.assertEqual(stats.iterations_run, 2)
        self.assertTrue(stats.converged)
        self.assertEqual(stats.inertia_history, (2.0, 0.0))

    def test_init_at_the_data_stops_after_one_iteration(self):
        data = np.array([[0.0, 1.0], [4.0, 4.0], [-3.0, 2.0]])
        codebook, stats = lloyd_train(data, data.copy())
        self.assertEqual(stats.iterations_run, 1)
        self.assertTrue(stats.converged)
        self.assertEqual(stats.final_inertia, 0.0)
        self.assertEqual(codebook.training_meta.iterations_run, 1)

    def test_kmeanspp_with_k_equal_to_n_takes_every_row(self):
        data = np.array([[0.0], [1.0], [5.0], [7.5], [20.0]])
        for seed in range(5):
            init = kmeanspp_init(data, 5, seed=seed)
            self.assertEqual(sorted(init[:, 0].tolist()), [0.0, 1.0, 5.0, 7.5, 20.0])

    def test_kmeanspp_picks_data_rows(self):
        data = np.random.default_rng(9).normal(size=(50, 3))
        init = kmeanspp_init(data, 5, seed=4)
        for row in init:
            self.assertTrue(np.any(np.all(data == row, axis=1)))
        self.assertEqual(np.unique(init, axis=0).shape[0], 5)

    def test_stats_reject_increasing_history(self):
        with self.assertRaises(ValueError):
            TrainingStats((1.0, 2.0), 2, 0, False, 2.0)


class TestAssign(unittest.TestCase):
    def setUp(self):
        self.codebook = Codebook(Tier.Frame, np.array([[0.0], [2.0], [5.0]]))

    def test_ties_go_to_the_lowest_id(self):
        self.assertEqual(assign(self.codebook, np.array([1.0])), 0)
        self.assertEqual(assign_batch(self.codebook, np.array([[1.0], [3.5]])).tolist(), [0, 1])

    def test_empty_batch(self):
        self.assertEqual(assign_batch(self.codebook, np.empty((0, 1))).shape, (0,))

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            assign(self.codebook, np.zeros(2))
        with self.assertRaises(DimensionMismatch):
            assign_batch(self.codebook, np.zeros((3, 2)))

    def test_non_finite_query(self):
        with self.assertRaises(NonFiniteInput):
            assign(self.codebook, np.array([np.inf]))


if __name__ == "__main__":
    unittest.main()

import unittest

import numpy as np

from src.domain.errors import SamplingError
from src.domain.sampling import BcasSampler, RandomSampler, build_sampler, sample_batch


class TestRandomSampler(unittest.TestCase):
    def test_epoch_visits_every_image_once(self):
        sampler = RandomSampler(10, 4)
        batches = sampler.epoch(np.random.default_rng(0))
        self.assertEqual([len(b) for b in batches], [4, 4, 2])
        self.assertEqual(len(sampler), 3)
        self.assertEqual(sorted(np.concatenate(batches).tolist()), list(range(10)))

    def test_same_rng_same_order(self):
        sampler = RandomSampler(7, 3)
        first = sampler.epoch(np.random.default_rng(5))
        second = sampler.epoch(np.random.default_rng(5))
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_invalid_arguments(self):
        with self.assertRaises(SamplingError):
            RandomSampler(0, 2)
        with self.assertRaises(ValueError):
            RandomSampler(3, 0)


class TestBcasSampler(unittest.TestCase):
    def setUp(self):
        # categoria 0 em quase todas as imagens, 2 em apenas uma, 3 em nenhuma
        self.labels = np.array([
            [1, 0, 0, 0],
            [1, 1, 0, 0],
            [1, 0, 0, 0],
            [1, 0, 1, 0],
            [1, 1, 0, 0],
            [0, 1, 0, 0],
        ])

    def test_batch_contains_drawn_category(self):
        sampler = BcasSampler(self.labels, 3)
        rng = np.random.default_rng(1)
        for _ in range(50):
            category, indices = sampler.draw(rng)
            self.assertEqual(len(indices), 3)
            self.assertTrue(all(self.labels[i, category] == 1 for i in indices))

    def test_categories_without_images_are_never_drawn(self):
        sampler = BcasSampler(self.labels, 2)
        self.assertEqual(sampler.categories, [0, 1, 2])

    def test_category_draw_is_uniform(self):
        sampler = BcasSampler(self.labels, 2)
        rng = np.random.default_rng(2)
        counts = np.zeros(4)
        trials = 6000
        for _ in range(trials):
            counts[sampler.draw(rng)[0]] += 1
        np.testing.assert_allclose(counts[:3] / trials, np.full(3, 1 / 3), atol=0.03)
        self.assertEqual(counts[3], 0)

    def test_small_pool_is_sampled_with_replacement(self):
        sampler = BcasSampler(self.labels, 4)
        rng = np.random.default_rng(3)
        for _ in range(20):
            category, indices = sampler.draw(rng)
            if category == 2:
                self.assertEqual(indices.tolist(), [3, 3, 3, 3])

    def test_epoch_length_matches_random_sampler(self):
        sampler = BcasSampler(self.labels, 4)
        self.assertEqual(len(sampler.epoch(np.random.default_rng(0))), len(RandomSampler(6, 4)))

    def test_no_labelled_image(self):
        with self.assertRaises(SamplingError):
            BcasSampler(np.zeros((3, 2)), 2)
        with self.assertRaises(SamplingError):
            BcasSampler(np.zeros((0, 2)), 2)


class TestBuildSampler(unittest.TestCase):
    def test_kinds(self):
        labels = np.eye(3)
        self.assertIsInstance(build_sampler("random", labels, 2), RandomSampler)
        self.assertIsInstance(build_sampler("bcas", labels, 2), BcasSampler)
        with self.assertRaises(ValueError):
            build_sampler("stratified", labels, 2)

    def test_sample_batch(self):
        self.assertEqual(sample_batch(["a", "b", "c"], np.array([2, 0])), ["c", "a"])


if __name__ == '__main__':
    unittest.main()

import unittest

import numpy as np

from svcq.alignment import build_frame_span_map
from svcq.codebook import Codebook, SvcModel
from svcq.codec import decode_fused, encode_utterance
from svcq.errors import CodeOutOfRange, DimensionMismatch, InvalidValue, ModelMismatch
from svcq.features import FeatureMatrix
from svcq.pooling import fuse_streams, pool_segments, post_pool_codes
from svcq.segmentation import UNCOVERED, Segment, Segmentation
from svcq.streams import DsuStream
from svcq.tier import ALL_TIERS, Tier


def _random_segments(rng, tier, duration, max_segments=6):
    """Sorted, non-overlapping segments with random gaps."""
    count = int(rng.integers(0, max_segments + 1))
    if count == 0:
        return ()
    cuts = np.sort(rng.uniform(0.0, duration, size=2 * count))
    return tuple(
        Segment(tier, f"{tier}{index}", cuts[2 * index], cuts[2 * index + 1])
        for index in range(count)
        if cuts[2 * index + 1] > cuts[2 * index]
    )


def _random_model(rng, dim, sizes=(6, 4, 4, 3)):
    return SvcModel(
        {
            tier: Codebook(tier, rng.normal(size=(k, dim)))
            for tier, k in zip(ALL_TIERS, sizes)
        },
        frame_hop=0.02,
    )


class TestPooling(unittest.TestCase):
    def setUp(self):
        self.values = np.arange(20, dtype=np.float32).reshape(10, 2)
        self.features = FeatureMatrix(self.values, 0.02)
        # frames 0-2 phone 0, frames 3-4 uncovered, frame 5-9 phone 2; phone 1 too short
        self.segmentation = Segmentation(
            0.2,
            (
                Segment(Tier.Phone, "a", 0.0, 0.06),
                Segment(Tier.Phone, "b", 0.1, 0.105),
                Segment(Tier.Phone, "c", 0.105, 0.2),
            ),
            (Segment(Tier.Word, "w", 0.0, 0.2),),
        )
        self.span_map = build_frame_span_map(self.segmentation, 0.02, 10)

    def test_segment_means(self):
        pooled = pool_segments(self.features, self.span_map, Tier.Phone)
        self.assertEqual(pooled.segment_indices.tolist(), [0, 2])
        self.assertEqual(pooled.num_empty, 1)
        np.testing.assert_allclose(pooled.vectors[0], self.values[0:3].mean(axis=0))
        np.testing.assert_allclose(pooled.vectors[1], self.values[5:10].mean(axis=0))
        self.assertEqual(len(pooled), 2)

    def test_utterance_mean(self):
        pooled = pool_segments(self.features, self.span_map, Tier.Utterance)
        np.testing.assert_allclose(pooled.vectors, [self.values.mean(axis=0)])

    def test_frame_tier_is_rejected(self):
        with self.assertRaises(InvalidValue):
            pool_segments(self.features, self.span_map, Tier.Frame)

    def test_frame_count_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            pool_segments(FeatureMatrix(self.values[:9], 0.02), self.span_map, Tier.Phone)

    def test_post_pooling_averages_centroids(self):
        codebook = Codebook(Tier.Frame, np.array([[0.0, 0.0], [10.0, 20.0]]))
        codes = DsuStream(Tier.Frame, [0, 1, 1, 0, 0, 1, 1, 1, 1, 0])
        pooled = post_pool_codes(codes, codebook, self.span_map, Tier.Phone)
        np.testing.assert_allclose(pooled.vectors[0], [20.0 / 3, 40.0 / 3])
        np.testing.assert_allclose(pooled.vectors[1], [8.0, 16.0])

    def test_code_out_of_range(self):
        codebook = Codebook(Tier.Frame, np.zeros((2, 2)))
        codes = DsuStream(Tier.Frame, [0, 1, 2, 0, 0, 1, 1, 1, 1, 0])
        with self.assertRaises(CodeOutOfRange):
            post_pool_codes(codes, codebook, self.span_map, Tier.Phone)


class TestFusion(unittest.TestCase):
    def test_fusion_invariants(self):
        rng = np.random.default_rng(21)
        dim = 3
        model = _random_model(rng, dim)
        for index in range(50):
            num_frames = int(rng.integers(1, 80))
            duration = num_frames * 0.02
            segmentation = Segmentation(
                duration,
                _random_segments(rng, Tier.Phone, duration),
                _random_segments(rng, Tier.Word, duration),
            )
            features = FeatureMatrix(rng.normal(size=(num_frames, dim)), 0.02)
            encoded = encode_utterance(model, features, segmentation, f"u{index}")
            fused = decode_fused(model, encoded)

            self.assertEqual(fused.num_frames, num_frames)
            self.assertEqual(fused.dim, dim)
            self.assertTrue(np.all(np.isfinite(fused.values)))

            participating = [
                model.codebook(Tier.Frame).centroids[encoded.streams[Tier.Frame].codes]
            ]
            for tier in (Tier.Phone, Tier.Word, Tier.Utterance):
                positions = encoded.frame_span_map.stream_positions(tier)
                rows = np.full((num_frames, dim), np.nan)
                covered = positions != UNCOVERED
                codes = encoded.streams[tier].codes
                rows[covered] = model.codebook(tier).centroids[codes[positions[covered]]]
                participating.append(rows)
            stacked = np.stack(participating)
            lower = np.nanmin(stacked, axis=0)
            upper = np.nanmax(stacked, axis=0)
            self.assertTrue(np.all(fused.values >= lower - 1e-5))
            self.assertTrue(np.all(fused.values <= upper + 1e-5))

    def test_all_silence_uses_frame_and_utterance(self):
        rng = np.random.default_rng(4)
        model = _random_model(rng, 2)
        features = FeatureMatrix(rng.normal(size=(25, 2)), 0.02)
        encoded = encode_utterance(model, features, Segmentation(0.5), "silent")
        self.assertEqual(len(encoded.streams[Tier.Phone]), 0)
        self.assertEqual(len(encoded.streams[Tier.Word]), 0)

        fused = fuse_streams(encoded, model)
        frame_rows = model.codebook(Tier.Frame).centroids[encoded.streams[Tier.Frame].codes]
        utterance_row = model.codebook(Tier.Utterance).centroids[
            encoded.streams[Tier.Utterance].codes[0]
        ]
        expected = (frame_rows.astype(np.float64) + utterance_row) / 2.0
        np.testing.assert_allclose(fused.values, expected, rtol=1e-6, atol=1e-6)

    def test_frame_only_mask(self):
        rng = np.random.default_rng(5)
        model = _random_model(rng, 2)
        features = FeatureMatrix(rng.normal(size=(30, 2)), 0.02)
        encoded = encode_utterance(model, features, Segmentation(0.6), "u")
        fused = fuse_streams(encoded, model, tiers=(Tier.Frame,))
        np.testing.assert_array_equal(
            fused.values,
            model.codebook(Tier.Frame).centroids[encoded.streams[Tier.Frame].codes],
        )

    def test_dim_mismatch(self):
        rng = np.random.default_rng(6)
        model = _random_model(rng, 2)
        other = _random_model(rng, 3)
        features = FeatureMatrix(rng.normal(size=(30, 2)), 0.02)
        encoded = encode_utterance(model, features, Segmentation(0.6), "u")
        with self.assertRaises(ModelMismatch):
            fuse_streams(encoded, other)


if __name__ == "__main__":
    unittest.main()

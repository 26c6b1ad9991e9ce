import logging
import math
import tempfile
import unittest
from pathlib import Path as _Path

import numpy as np

from svcq.alignment import build_frame_span_map
from svcq.codebook import Codebook, SvcModel
from svcq.codec import (
    KMeansParams,
    TIER_SEED_OFFSETS,
    corpus_bitrate,
    encode_corpus,
    encode_utterance,
    load_corpus,
    train_svc,
    utterance_bitrate,
)
from svcq.errors import (
    CorpusError,
    DimensionMismatch,
    DimMismatchAcrossCorpus,
    EmptyInput,
    EmptySplit,
    ModelMismatch,
    TooFewPoints,
)
from svcq.features import FeatureMatrix
from svcq.logging_tools import TqdmHandler
from svcq.manifest import load_manifest
from svcq.probe import ProbeHyperParams, Task, evaluate, train_probe
from svcq.probe_inputs import build_probe_dataset
from svcq.segmentation import Segment, Segmentation
from svcq.streams import DsuStream, EncodedUtterance
from svcq.tier import ALL_TIERS, Tier

from ..synthetic import alignment_dict, engineered_corpus, random_corpus, write_corpus


def _quiet():
    logger = logging.getLogger("svcq")
    logger.setLevel(logging.INFO)
    ch = TqdmHandler()
    ch.setLevel(logging.ERROR)
    logger.handlers = []
    logger.addHandler(ch)


def _bitrate_model(k):
    return SvcModel(
        {tier: Codebook(tier, np.arange(k, dtype=np.float64)[:, None]) for tier in ALL_TIERS},
        frame_hop=0.02,
    )


def _one_second_utterance(frame_codes=None):
    """50 frames over 1.0 s with 5 phones, 2 words and the utterance."""
    segmentation = Segmentation(
        1.0,
        tuple(Segment(Tier.Phone, f"p{i}", 0.2 * i, 0.2 * (i + 1)) for i in range(5)),
        (Segment(Tier.Word, "a", 0.0, 0.5), Segment(Tier.Word, "b", 0.5, 1.0)),
    )
    frame_codes = np.zeros(50, dtype=np.int64) if frame_codes is None else frame_codes
    return EncodedUtterance(
        "fixture",
        {
            Tier.Frame: DsuStream(Tier.Frame, frame_codes),
            Tier.Phone: DsuStream(Tier.Phone, np.zeros(5, dtype=np.int64)),
            Tier.Word: DsuStream(Tier.Word, np.zeros(2, dtype=np.int64)),
            Tier.Utterance: DsuStream(Tier.Utterance, [0]),
        },
        1.0,
        0.02,
        build_frame_span_map(segmentation, 0.02, 50),
    )


class TestBitrate(unittest.TestCase):
    def test_frame_baselines(self):
        encoded = _one_second_utterance()
        report = utterance_bitrate(encoded, _bitrate_model(500), frames_only=True)
        self.assertAlmostEqual(report.bits_per_second, 448.29, delta=0.01)
        self.assertEqual(report.stream_units, {Tier.Frame: 50})
        report = utterance_bitrate(encoded, _bitrate_model(2000), frames_only=True)
        self.assertAlmostEqual(report.bits_per_second, 548.29, delta=0.01)

    def test_all_streams(self):
        encoded = _one_second_utterance()
        self.assertEqual(
            encoded.stream_lengths(),
            {Tier.Frame: 50, Tier.Phone: 5, Tier.Word: 2, Tier.Utterance: 1},
        )
        report = utterance_bitrate(encoded, _bitrate_model(500))
        self.assertAlmostEqual(report.bits_per_second, 520.02, delta=0.01)
        self.assertAlmostEqual(report.total_bits, 58 * math.log2(500), places=9)

    def test_frame_rate_formula(self):
        encoded = _one_second_utterance()
        for k in (2, 3, 16, 100, 4096):
            report = utterance_bitrate(encoded, _bitrate_model(k), frames_only=True)
            expected = 50 * math.log2(k)
            self.assertLessEqual(abs(report.bits_per_second - expected), 1e-9 * expected)
            self.assertGreaterEqual(
                utterance_bitrate(encoded, _bitrate_model(k)).bits_per_second,
                report.bits_per_second,
            )

    def test_invariant_under_relabeling(self):
        model = _bitrate_model(500)
        first = utterance_bitrate(_one_second_utterance(), model)
        relabeled = np.random.default_rng(0).integers(0, 500, size=50)
        second = utterance_bitrate(_one_second_utterance(relabeled), model)
        self.assertEqual(first.bits_per_second, second.bits_per_second)

    def test_report_dict_round_trip(self):
        report = utterance_bitrate(_one_second_utterance(), _bitrate_model(500))
        self.assertEqual(type(report).from_dict(report.to_dict()), report)

    def test_corpus_average(self):
        model = _bitrate_model(500)
        reports = [
            utterance_bitrate(_one_second_utterance(), model, frames_only=True),
            utterance_bitrate(_one_second_utterance(), model),
        ]
        average = corpus_bitrate(reports)
        self.assertAlmostEqual(average.mean_bps, (448.2892 + 520.0155) / 2, delta=0.001)
        self.assertAlmostEqual(average.totals_bps, average.mean_bps)
        self.assertEqual(average.num_utterances, 2)
        self.assertEqual(average.total_seconds, 2.0)
        with self.assertRaises(EmptyInput):
            corpus_bitrate([])


class TestTraining(unittest.TestCase):
    K = {Tier.Frame: 6, Tier.Phone: 5, Tier.Word: 4, Tier.Utterance: 3}

    def setUp(self):
        _quiet()
        self._directory = tempfile.TemporaryDirectory()
        self.directory = _Path(self._directory.name)

    def tearDown(self):
        self._directory.cleanup()

    def test_train_and_encode(self):
        manifest = load_manifest(random_corpus(self.directory, num_utterances=8, dim=6))
        model = train_svc(manifest, self.K, seed=3)
        self.assertEqual(model.vocabulary_sizes(), self.K)
        self.assertEqual(model.dim, 6)
        self.assertEqual(model.frame_hop, 0.02)
        for tier in ALL_TIERS:
            self.assertEqual(model.codebook(tier).training_meta.seed, 3 + TIER_SEED_OFFSETS[tier])
            stats = model.training_stats[tier]
            self.assertLessEqual(stats.final_inertia, stats.init_inertia * (1 + 1e-9))

        encoded = encode_corpus(model, manifest.entries)
        self.assertEqual([e.utterance_id for e in encoded], [e.id for e in manifest.entries])
        for utterance in encoded:
            # 3 words of 2 phones after a silence that is dropped
            self.assertEqual(
                utterance.stream_lengths(),
                {Tier.Frame: 50, Tier.Phone: 6, Tier.Word: 3, Tier.Utterance: 1},
            )
            for tier in ALL_TIERS:
                self.assertLess(utterance.streams[tier].codes.max(), self.K[tier])

    def test_training_is_deterministic(self):
        manifest = load_manifest(random_corpus(self.directory))
        self.assertEqual(train_svc(manifest, self.K, seed=1), train_svc(manifest, self.K, seed=1))

    def test_parallel_loading_keeps_manifest_order(self):
        manifest = load_manifest(random_corpus(self.directory))
        serial = load_corpus(manifest.entries, jobs=1)
        parallel = load_corpus(manifest.entries, jobs=2)
        self.assertEqual([u.utterance_id for u in parallel], [u.utterance_id for u in serial])
        for first, second in zip(serial, parallel):
            self.assertEqual(first.features, second.features)

    def test_standardized_training(self):
        manifest = load_manifest(random_corpus(self.directory))
        model = train_svc(manifest, self.K, kmeans_params=KMeansParams(standardize=True))
        self.assertIsNotNone(model.standardizer)
        self.assertEqual(len(encode_corpus(model, manifest.entries)), 8)

    def test_too_few_utterances(self):
        manifest = load_manifest(random_corpus(self.directory, num_utterances=8))
        with self.assertRaises(TooFewPoints) as context:
            train_svc(manifest, {**self.K, Tier.Utterance: 9})
        self.assertEqual(context.exception.tier, Tier.Utterance)
        self.assertIn("utterance", str(context.exception))

    def test_dims_must_agree(self):
        rng = np.random.default_rng(0)
        utterances = [
            ("a", rng.normal(size=(50, 4)), alignment_dict(), "train", {}),
            ("b", rng.normal(size=(50, 5)), alignment_dict(), "train", {}),
        ]
        manifest = load_manifest(write_corpus(self.directory, utterances))
        with self.assertRaises(DimMismatchAcrossCorpus):
            train_svc(manifest, {tier: 1 for tier in ALL_TIERS})

    def test_empty_train_split(self):
        rng = np.random.default_rng(0)
        utterances = [("a", rng.normal(size=(50, 4)), alignment_dict(), "test", {})]
        manifest = load_manifest(write_corpus(self.directory, utterances))
        with self.assertRaises(EmptySplit):
            train_svc(manifest, {tier: 1 for tier in ALL_TIERS})

    def test_bad_entries_are_collected(self):
        rng = np.random.default_rng(0)
        short = alignment_dict(num_frames=40)
        utterances = [
            ("good", rng.normal(size=(50, 4)), alignment_dict(), "train", {}),
            ("short", rng.normal(size=(50, 4)), short, "train", {}),
        ]
        manifest = load_manifest(write_corpus(self.directory, utterances))
        with self.assertRaises(CorpusError) as context:
            train_svc(manifest, {tier: 1 for tier in ALL_TIERS})
        self.assertEqual(list(context.exception.error_dict), ["short"])
        self.assertIn("AlignmentMismatch", context.exception.error_dict["short"])


class TestEncoding(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(8)
        self.model = SvcModel(
            {tier: Codebook(tier, rng.normal(size=(4, 3))) for tier in ALL_TIERS},
            frame_hop=0.02,
        )
        self.segmentation = Segmentation.from_dict(alignment_dict())
        self.features = FeatureMatrix(rng.normal(size=(50, 3)), 0.02)

    def test_dimension_mismatch(self):
        features = FeatureMatrix(np.zeros((50, 2)), 0.02)
        with self.assertRaises(DimensionMismatch):
            encode_utterance(self.model, features, self.segmentation)

    def test_frame_hop_mismatch(self):
        features = FeatureMatrix(np.zeros((100, 3)), 0.01)
        with self.assertRaises(ModelMismatch):
            encode_utterance(self.model, features, self.segmentation)

    def test_pre_and_post_share_the_frame_stream(self):
        pre = encode_utterance(self.model, self.features, self.segmentation, "u", "pre")
        post = encode_utterance(self.model, self.features, self.segmentation, "u", "post")
        self.assertEqual(pre.streams[Tier.Frame], post.streams[Tier.Frame])
        self.assertEqual(pre.stream_lengths(), post.stream_lengths())
        self.assertEqual(pre.dim, 3)

    def test_encoding_is_deterministic(self):
        first = encode_utterance(self.model, self.features, self.segmentation, "u")
        second = encode_utterance(self.model, self.features, self.segmentation, "u")
        self.assertEqual(first, second)


class TestEngineeredCorpus(unittest.TestCase):
    """Class signal that survives segment pooling but not frame quantization."""

    HYPER = ProbeHyperParams(learning_rate=0.1, epochs=200, batch_size=64, seed=0, patience=20)

    @classmethod
    def setUpClass(cls):
        _quiet()
        cls._directory = tempfile.TemporaryDirectory()
        cls.manifest = load_manifest(engineered_corpus(_Path(cls._directory.name)))

    @classmethod
    def tearDownClass(cls):
        cls._directory.cleanup()

    def _accuracy(self, kind, model):
        datasets = [
            build_probe_dataset(kind, self.manifest.split(split), "emotion", model, split)
            for split in ("train", "valid", "test")
        ]
        probe, _ = train_probe(datasets[0], datasets[1], Task.Multiclass, self.HYPER, num_classes=4)
        return evaluate(probe, datasets[2]).accuracy

    def test_pre_pooling_beats_post_pooling(self):
        k = {tier: 8 for tier in ALL_TIERS}
        pre = train_svc(self.manifest, k, seed=0, pooling="pre")
        post = train_svc(self.manifest, k, seed=0, pooling="post")
        pre_accuracy = self._accuracy("pre-pooled", pre)
        post_accuracy = self._accuracy("post-pooled", post)
        self.assertGreater(pre_accuracy, post_accuracy)
        self.assertGreaterEqual(pre_accuracy, 0.75)

    def test_fused_streams_match_or_beat_frame_codes(self):
        k = {Tier.Frame: 500, Tier.Phone: 8, Tier.Word: 8, Tier.Utterance: 8}
        model = train_svc(self.manifest, k, seed=0)
        self.assertGreaterEqual(self._accuracy("fused", model), self._accuracy("frames", model))


if __name__ == "__main__":
    unittest.main()

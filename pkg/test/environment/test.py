import logging
import tempfile
import unittest
from pathlib import Path as _Path

from svcq.environment import Environment
from svcq.errors import InvalidValue
from svcq.logging_tools import TqdmHandler
from svcq.tier import Tier


class TestEnvironment(unittest.TestCase):
    def setUp(self):
        logger = logging.getLogger("svcq")
        logger.setLevel(logging.INFO)
        ch = TqdmHandler()
        ch.setLevel(logging.ERROR)
        logger.handlers = []
        logger.addHandler(ch)
        self._directory = tempfile.TemporaryDirectory()
        self.config = _Path(self._directory.name) / "svcq.toml"
        self.config.write_text(
            "[svcq]\n"
            "seed = 11\n"
            "k_frame = 64\n"
            "k_word = 32\n"
            'silence_labels = ["SIL", "<eps>"]\n'
            "unknown_setting = 1\n"
        )

    def tearDown(self):
        self._directory.cleanup()

    def test_defaults(self):
        environment = Environment({"jobs": 1}, environ={})
        self.assertEqual(environment.seed, 0)
        self.assertEqual(set(environment.k_per_tier().values()), {500})
        self.assertEqual(environment.sources["seed"], "default")
        self.assertFalse(environment.standardize)
        self.assertIn("sil", environment.silence_labels)

    def test_precedence(self):
        environ = {"SVCQ_K_FRAME": "128", "SVCQ_SEED": "5"}
        environment = Environment(
            {"config": str(self.config), "seed": 7, "jobs": 2}, environ=environ
        )
        self.assertEqual(environment.seed, 7)
        self.assertEqual(environment.sources["seed"], "command line")
        self.assertEqual(environment.k_frame, 128)
        self.assertEqual(environment.sources["k_frame"], "SVCQ_K_FRAME")
        self.assertEqual(environment.k_word, 32)
        self.assertEqual(environment.sources["k_word"], str(self.config))
        self.assertEqual(environment.silence_labels, frozenset({"sil", "<eps>"}))
        self.assertEqual(environment.k_per_tier()[Tier.Utterance], 500)
        self.assertEqual(environment.jobs, 2)

    def test_config_from_environment_variable(self):
        environment = Environment({"jobs": 1}, environ={"SVCQ_CONFIG": str(self.config)})
        self.assertEqual(environment.seed, 11)
        self.assertEqual(environment.config_file, self.config)

    def test_typed_values(self):
        environ = {"SVCQ_STANDARDIZE": "yes", "SVCQ_TOL": "1e-6", "SVCQ_SILENCE_LABELS": "a, B"}
        environment = Environment({"jobs": 1}, environ=environ)
        self.assertTrue(environment.kmeans_params().standardize)
        self.assertEqual(environment.kmeans_params().tol, 1e-6)
        self.assertEqual(environment.alignment_options().silence_labels, frozenset({"a", "b"}))

    def test_probe_hyper_params(self):
        environment = Environment({"jobs": 1, "epochs": 3}, environ={"SVCQ_LEARNING_RATE": "0.5"})
        hyper = environment.probe_hyper_params(class_weights=(1.0, 2.0))
        self.assertEqual((hyper.epochs, hyper.learning_rate), (3, 0.5))
        self.assertEqual(hyper.class_weights, (1.0, 2.0))

    def test_invalid_values(self):
        with self.assertRaises(InvalidValue):
            Environment({"jobs": 1}, environ={"SVCQ_SEED": "many"})
        with self.assertRaises(InvalidValue):
            Environment({"jobs": 1}, environ={"SVCQ_STANDARDIZE": "maybe"})
        with self.assertRaises(InvalidValue):
            Environment({"jobs": 0}, environ={})

    def test_missing_config_file(self):
        with self.assertRaises(FileNotFoundError):
            Environment({"config": str(self.config.with_name("absent.toml"))}, environ={})


if __name__ == "__main__":
    unittest.main()

import os
import tempfile
import unittest
from unittest.mock import patch

from pydantic import ValidationError

from src.domain.config import ModelConfig, TrainConfig
from src.infrastructure.config import Config


class TestTrainConfig(unittest.TestCase):
    def test_defaults(self):
        config = TrainConfig()
        self.assertEqual(config.proposal_source, "merged")
        self.assertIsInstance(config.model_settings(), ModelConfig)

    def test_domains(self):
        with self.assertRaises(ValidationError):
            TrainConfig(temperature=0.0)
        with self.assertRaises(ValidationError):
            TrainConfig(sampler="balanced")
        with self.assertRaises(ValidationError):
            ModelConfig(image_size=64, stride=5)
        with self.assertRaises(ValidationError):
            ModelConfig(dropout=True)


class TestConfigLoading(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text):
        path = os.path.join(self.tmp.name, "train.cfg")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
        return path

    def test_file_values_are_coerced(self):
        path = self.write("# treino\nepochs = 3\nlearning_rate=0.05\ndafe_on=false\ndata=a.jsonl, b.jsonl\n\nproposal_source=segmenter\n")
        config = Config.load_train_config(path)
        self.assertEqual(config.epochs, 3)
        self.assertEqual(config.learning_rate, 0.05)
        self.assertFalse(config.dafe_on)
        self.assertEqual(config.data, ["a.jsonl", "b.jsonl"])
        self.assertEqual(config.proposal_source, "segmenter")

    def test_flags_override_file(self):
        path = self.write("epochs=3\nbatch_size=8\n")
        config = Config.load_train_config(path, {"epochs": 5, "batch_size": None, "data": []})
        self.assertEqual(config.epochs, 5)
        self.assertEqual(config.batch_size, 8)

    def test_unknown_key(self):
        with self.assertRaises(ValueError) as cm:
            Config.load_train_config(self.write("epoch=3\n"))
        self.assertIn("epoch", str(cm.exception))
        with self.assertRaises(ValueError):
            Config.load_train_config(None, {"lr": 0.1})

    def test_bad_lines(self):
        with self.assertRaises(ValueError):
            Config.parse_config_file(self.write("epochs 3\n"))
        with self.assertRaises(ValueError):
            Config.parse_config_file(self.write("epochs=3\nepochs=4\n"))

    def test_invalid_value_names_the_key(self):
        with self.assertRaises(ValueError) as cm:
            Config.load_train_config(self.write("momentum=1.5\n"))
        self.assertIn("momentum", str(cm.exception))

    def test_seed_from_environment(self):
        with patch.dict(os.environ, {"WSOVOD_SEED": "123"}):
            self.assertEqual(Config.default_seed(), 123)
            self.assertEqual(Config.load_train_config().seed, 123)
            self.assertEqual(Config.load_train_config(None, {"seed": 7}).seed, 7)

    def test_missing_file(self):
        with self.assertRaises(OSError):
            Config.load_train_config(os.path.join(self.tmp.name, "nope.cfg"))


if __name__ == '__main__':
    unittest.main()

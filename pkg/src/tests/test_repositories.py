import csv
import json
import os
import tempfile
import unittest

import numpy as np

from src.domain.entities import Box, Checkpoint, LossLogRow, MetricReport, OptimizerState
from src.domain.errors import CheckpointMismatchError, DatasetFormatError, DatasetVersionError
from src.domain.synthdata import OBJECT_CENTRIC, SCENE_CENTRIC, default_vocabulary, generate_records
from src.infrastructure.repositories.csv_report_repository import (
    LOSS_LOG_HEADER,
    CsvReportRepository,
    metric_rows,
)
from src.infrastructure.repositories.json_checkpoint_repository import JsonCheckpointRepository
from src.infrastructure.repositories.jsonl_dataset_repository import JsonlDatasetRepository, images_dir, vocabulary_path
from src.infrastructure.services.oracle_segmenter_service import OracleSegmenterService


class TempDirTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)


class TestJsonlDatasetRepository(TempDirTestCase):
    def setUp(self):
        super().setUp()
        self.repository = JsonlDatasetRepository()
        self.vocabulary = default_vocabulary(4, 1)
        self.records = list(generate_records(SCENE_CENTRIC, self.vocabulary, 3, 2, dataset_id=1))

    def test_write_and_read_inline(self):
        path = self.path("data.jsonl")
        self.repository.write(path, self.records, self.vocabulary)

        with open(path, encoding="utf-8") as handle:
            self.assertEqual(len(handle.readlines()), 3)
        self.assertTrue(os.path.exists(vocabulary_path(path)))
        records, vocabulary = self.repository.read(path)
        self.assertEqual(vocabulary, self.vocabulary)
        for original, loaded in zip(self.records, records):
            self.assertEqual(loaded.image_id, original.image_id)
            self.assertEqual(loaded.dataset_id, 1)
            np.testing.assert_array_equal(loaded.labels, original.labels)
            np.testing.assert_array_equal(loaded.image, original.image)
            self.assertEqual(loaded.ground_truth, original.ground_truth)

    def test_binary_images(self):
        path = self.path("bin.jsonl")
        self.repository.write(path, self.records, self.vocabulary, inline_images=False)

        self.assertEqual(sorted(os.listdir(images_dir(path))), ["000000.bin", "000001.bin", "000002.bin"])
        self.assertEqual(os.path.getsize(os.path.join(images_dir(path), "000000.bin")), 64 * 64 * 3 * 4)
        records, _ = self.repository.read(path)
        np.testing.assert_allclose(records[2].image, self.records[2].image, atol=1e-6)

    def test_malformed_line_names_the_line(self):
        path = self.path("bad.jsonl")
        self.repository.write(path, self.records, self.vocabulary)
        with open(path, "a", encoding="utf-8") as handle:
            handle.write("{not json\n")
        with self.assertRaises(DatasetFormatError) as cm:
            self.repository.read(path)
        self.assertEqual(cm.exception.line_number, 4)

    def test_label_out_of_range(self):
        path = self.path("labels.jsonl")
        line = {"version": 1, "dataset_id": 0, "image_id": 0, "image": [[[0.0, 0.0, 0.0]]], "labels": [3], "num_categories": 2}
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps(line) + "\n")
        with self.assertRaises(DatasetFormatError) as cm:
            self.repository.read_records(path)
        self.assertEqual(cm.exception.line_number, 1)

    def test_unsupported_version(self):
        path = self.path("old.jsonl")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps({"version": 99}) + "\n")
        with self.assertRaises(DatasetVersionError):
            self.repository.read_records(path)

    def test_vocabulary_mismatch(self):
        path = self.path("data.jsonl")
        self.repository.write(path, self.records, self.vocabulary)
        self.repository.write_vocabulary(vocabulary_path(path), default_vocabulary(2))
        with self.assertRaises(DatasetFormatError) as cm:
            self.repository.read(path)
        self.assertEqual(cm.exception.line_number, 1)

    def test_category_outside_vocabulary_names_its_line(self):
        path = self.path("data.jsonl")
        self.repository.write(path, self.records, self.vocabulary)
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        raw = json.loads(lines[1])
        raw["gt"].append({"box": [0.0, 0.0, 4.0, 4.0], "cat": 7, "jitter": [0.0, 0.0, 0.0]})
        lines[1] = json.dumps(raw)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + "\n")

        self.assertEqual(len(self.repository.read_records(path)), 3)
        with self.assertRaises(DatasetFormatError) as cm:
            self.repository.read(path)
        self.assertEqual(cm.exception.line_number, 2)
        self.assertIn("7", str(cm.exception))

    def test_missing_file(self):
        with self.assertRaises(OSError):
            self.repository.read(self.path("missing.jsonl"))


class TestJsonCheckpointRepository(TempDirTestCase):
    def setUp(self):
        super().setUp()
        self.repository = JsonCheckpointRepository()
        self.checkpoint = Checkpoint(
            tensors={"extractor.W": np.arange(6.0).reshape(2, 3), "extractor.b": np.array([0.1, -0.2, 0.3])},
            config={"stride": 4},
            vocabulary=["red", "blue"],
            optimizer=OptimizerState(epoch=2, step=7, velocity={"extractor.b": np.array([1.0, 2.0, 3.0])}),
        )

    def test_save_and_load(self):
        path = self.path("model.ckpt.json")
        self.repository.save(path, self.checkpoint)
        loaded = self.repository.load(path)

        np.testing.assert_array_equal(loaded.tensors["extractor.W"], self.checkpoint.tensors["extractor.W"])
        np.testing.assert_array_equal(loaded.tensors["extractor.b"], self.checkpoint.tensors["extractor.b"])
        self.assertEqual(loaded.config, {"stride": 4})
        self.assertEqual(loaded.vocabulary, ["red", "blue"])
        self.assertEqual((loaded.optimizer.epoch, loaded.optimizer.step), (2, 7))
        np.testing.assert_array_equal(loaded.optimizer.velocity["extractor.b"], [1.0, 2.0, 3.0])
        # sem arquivos temporários esquecidos
        self.assertEqual(os.listdir(self.tmp.name), ["model.ckpt.json"])

    def test_values_count_must_match_shape(self):
        path = self.path("bad.ckpt.json")
        self.repository.save(path, self.checkpoint)
        with open(path, encoding="utf-8") as handle:
            document = json.load(handle)
        document["tensors"]["extractor.W"]["values"].pop()
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(document, handle)
        with self.assertRaises(CheckpointMismatchError) as cm:
            self.repository.load(path)
        self.assertEqual(cm.exception.tensor_name, "extractor.W")

    def test_not_a_checkpoint(self):
        path = self.path("junk.json")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("[1, 2")
        with self.assertRaises(CheckpointMismatchError):
            self.repository.load(path)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump({"version": 1, "tensors": {"w": {"shape": [1]}}}, handle)
        with self.assertRaises(CheckpointMismatchError):
            self.repository.load(path)


class TestCsvReportRepository(TempDirTestCase):
    def setUp(self):
        super().setUp()
        self.repository = CsvReportRepository()

    def read_csv(self, path):
        with open(path, encoding="utf-8", newline="") as handle:
            return list(csv.reader(handle))

    def test_metrics_files(self):
        report = MetricReport(
            per_category_ap={"red": 0.5},
            mean_ap=0.5,
            corloc=0.75,
            split_ap={"base": 0.5},
            average_recall={10: 0.25},
            recall_at_50={10: 0.5},
        )
        paths = self.repository.write_metrics(self.path("out/metrics"), report)

        self.assertEqual(paths, [self.path("out/metrics.csv"), self.path("out/metrics.json")])
        rows = self.read_csv(paths[0])
        self.assertEqual(rows[0], ["category", "metric", "value"])
        self.assertEqual(rows[1], ["red", "AP50", "0.5"])
        self.assertEqual(len(rows) - 1, len(metric_rows(report)))
        with open(paths[1], encoding="utf-8") as handle:
            document = json.load(handle)
        self.assertEqual(document["CorLoc"], 0.75)
        self.assertEqual(document["average_recall"], {"10": 0.25})

    def test_loss_log_append_keeps_single_header(self):
        path = self.path("loss.csv")
        row = LossLogRow(epoch=0, step=1, pg=0.1, om=0.2, ir=0.3, total=0.6, learning_rate=0.01, grad_norms={"rpn": 2.0})
        self.repository.write_loss_log(path, [row])
        self.repository.write_loss_log(path, [row], append=True)

        rows = self.read_csv(path)
        self.assertEqual(rows[0], list(LOSS_LOG_HEADER))
        self.assertEqual(len(rows), 3)
        self.assertEqual(rows[1][:7], ["0", "1", "0.1", "0.2", "0.3", "0.6", "0.01"])
        self.assertEqual(rows[1][LOSS_LOG_HEADER.index("gn_rpn")], "2.0")
        self.assertEqual(rows[1][LOSS_LOG_HEADER.index("gn_dafe")], "0.0")

    def test_empty_loss_log_has_header(self):
        path = self.path("empty.csv")
        self.repository.write_loss_log(path, [], append=True)
        self.assertEqual(self.read_csv(path), [list(LOSS_LOG_HEADER)])


class TestOracleSegmenterService(unittest.TestCase):
    def setUp(self):
        self.record = next(generate_records(OBJECT_CENTRIC, default_vocabulary(3), 1, 4))

    def test_deterministic_proposals_near_ground_truth(self):
        service = OracleSegmenterService(seed=5)
        proposals = service.grid_proposals(self.record)
        self.assertEqual(proposals, OracleSegmenterService(seed=5).grid_proposals(self.record))
        self.assertGreaterEqual(len(proposals), 1)
        self.assertTrue(all(p.source == "segmenter" for p in proposals))

    def test_refine_without_noise_snaps_to_object(self):
        service = OracleSegmenterService(refine_jitter=0.0)
        target = self.record.ground_truth[0].box
        query = Box(target.x0 + 1, target.y0, target.x1, target.y1 - 1)
        self.assertEqual(service.refine_box(self.record, query), target)

    def test_invalid_grid(self):
        with self.assertRaises(ValueError):
            OracleSegmenterService(grid=0)


if __name__ == '__main__':
    unittest.main()

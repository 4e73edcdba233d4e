import unittest
from unittest.mock import Mock

from src.application.use_cases.generate_dataset import GenerateDatasetUseCase


class TestGenerateDatasetUseCase(unittest.TestCase):
    def setUp(self):
        self.mock_dataset_repository = Mock()
        self.use_case = GenerateDatasetUseCase(self.mock_dataset_repository)

    def test_execute_writes_records_and_vocabulary(self):
        summary = self.use_case.execute("out.jsonl", images=5, categories=4, novel=1, seed=3)

        # O repositório recebe todos os registros de uma vez, com o vocabulário completo
        self.mock_dataset_repository.write.assert_called_once()
        path, records, vocabulary = self.mock_dataset_repository.write.call_args.args
        self.assertEqual(path, "out.jsonl")
        self.assertEqual([r.image_id for r in records], list(range(5)))
        self.assertEqual(len(vocabulary), 5)
        self.assertEqual(vocabulary.novel_indices, [4])
        self.assertEqual(summary.images, 5)
        self.assertEqual(summary.objects, 5)
        self.assertEqual(summary.num_categories, 5)
        self.assertEqual(summary.label_density, 1.0)

    def test_binary_images_flag_is_forwarded(self):
        self.use_case.execute("out.jsonl", images=1, inline_images=False)
        self.assertFalse(self.mock_dataset_repository.write.call_args.kwargs["inline_images"])

    def test_same_seed_same_dataset(self):
        self.use_case.execute("a.jsonl", profile="scene_centric", images=3, seed=9)
        self.use_case.execute("b.jsonl", profile="scene_centric", images=3, seed=9)
        first, second = (call.args[1] for call in self.mock_dataset_repository.write.call_args_list)
        for a, b in zip(first, second):
            self.assertEqual(a.ground_truth, b.ground_truth)
            self.assertTrue((a.image == b.image).all())

    def test_federated_labels_never_exceed_full_labels(self):
        self.use_case.execute("full.jsonl", profile="scene_centric", images=8, seed=1)
        self.use_case.execute("fed.jsonl", profile="scene_centric", images=8, seed=1, federated=0.3)
        full, federated = (call.args[1] for call in self.mock_dataset_repository.write.call_args_list)
        for a, b in zip(full, federated):
            self.assertTrue((b.labels <= a.labels).all())
            self.assertGreaterEqual(int(b.labels.sum()), 1)

    def test_novel_objects_only_in_eval_split(self):
        self.use_case.execute("train.jsonl", profile="scene_centric", images=30, categories=4, novel=2, seed=2)
        self.use_case.execute("test.jsonl", profile="scene_centric", images=30, categories=4, novel=2, seed=2, eval_split=True)
        train, test = (call.args[1] for call in self.mock_dataset_repository.write.call_args_list)

        self.assertTrue(all(obj.category < 4 for record in train for obj in record.ground_truth))
        self.assertTrue(all(record.labels[4:].sum() == 0 for record in train))
        self.assertTrue(any(obj.category >= 4 for record in test for obj in record.ground_truth))

    def test_execute_with_invalid_arguments(self):
        with self.assertRaises(ValueError):
            self.use_case.execute("out.jsonl", profile="indoor")
        with self.assertRaises(ValueError):
            self.use_case.execute("out.jsonl", images=-1)
        with self.assertRaises(ValueError):
            self.use_case.execute("out.jsonl", federated=0.0)
        self.mock_dataset_repository.write.assert_not_called()


if __name__ == '__main__':
    unittest.main()

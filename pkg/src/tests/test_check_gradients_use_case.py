import unittest

from src.application.use_cases.check_gradients import LOSSES, CheckGradientsUseCase


class TestCheckGradientsUseCase(unittest.TestCase):
    def setUp(self):
        self.use_case = CheckGradientsUseCase()

    def test_all_losses_pass(self):
        for seed in range(5):
            with self.subTest(seed=seed):
                reports = self.use_case.execute(seed=seed)
                self.assertEqual(list(reports), list(LOSSES))
                for name, report in reports.items():
                    self.assertTrue(report.passed, f"seed {seed}, {name}: {report.failures}")

    def test_corrupted_tensor_is_reported(self):
        reports = self.use_case.execute(seed=0, corrupt="mlp.fc2.b", losses=["L_OM"])
        report = reports["L_OM"]
        self.assertFalse(report.passed)
        self.assertEqual([check.name for check in report.failures], ["mlp.fc2.b"])

    def test_unknown_names(self):
        with self.assertRaises(ValueError):
            self.use_case.execute(corrupt="mlp.fc9.W")
        with self.assertRaises(ValueError):
            self.use_case.execute(losses=["L_XX"])


if __name__ == '__main__':
    unittest.main()

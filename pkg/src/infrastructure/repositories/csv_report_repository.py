import csv
import json
import logging
import os
from typing import Dict, List, Sequence

from src.application.interfaces import IReportWriter
from src.domain.entities import LossLogRow, MetricReport
from src.domain.model import MODULES

logger = logging.getLogger(__name__)

# Implementação concreta da escrita de relatórios. Tudo aqui é legível por máquina:
# métricas em CSV (category,metric,value) e JSON, log de perdas e tabelas em CSV.

LOSS_LOG_HEADER = ("epoch", "step", "L_PG", "L_OM", "L_IR", "total", "lr") + tuple(f"gn_{name}" for name in MODULES)
METRICS_HEADER = ("category", "metric", "value")
ALL_CATEGORIES = "__all__"


def metric_rows(report: MetricReport) -> List[Dict[str, object]]:
    """Achata o relatório em linhas (category, metric, value), em ordem fixa."""
    rows: List[Dict[str, object]] = [
        {"category": name, "metric": "AP50", "value": value}
        for name, value in report.per_category_ap.items()
    ]
    rows.append({"category": ALL_CATEGORIES, "metric": "mAP", "value": report.mean_ap})
    rows.append({"category": ALL_CATEGORIES, "metric": "CorLoc", "value": report.corloc})
    rows.append({"category": ALL_CATEGORIES, "metric": "AP50:95", "value": report.ap_range})
    for split, value in report.split_ap.items():
        rows.append({"category": ALL_CATEGORIES, "metric": f"AP_{split}", "value": value})
    for limit, value in report.average_recall.items():
        rows.append({"category": ALL_CATEGORIES, "metric": f"AR@{limit}", "value": value})
    for limit, value in report.recall_at_50.items():
        rows.append({"category": ALL_CATEGORIES, "metric": f"R50@{limit}", "value": value})
    return rows


def report_document(report: MetricReport) -> Dict[str, object]:
    return {
        "per_category_ap": dict(report.per_category_ap),
        "mAP": report.mean_ap,
        "CorLoc": report.corloc,
        "AP50:95": report.ap_range,
        "split_ap": dict(report.split_ap),
        "average_recall": {str(k): v for k, v in report.average_recall.items()},
        "recall_at_50": {str(k): v for k, v in report.recall_at_50.items()},
    }


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


class CsvReportRepository(IReportWriter):
    """Implementação da escrita de relatórios em CSV e JSON."""

    def write_metrics(self, path_prefix: str, report: MetricReport) -> List[str]:
        """
        Grava `<prefixo>.csv` e `<prefixo>.json`.

        Args:
            path_prefix (str): Prefixo dos dois arquivos.
            report (MetricReport): Relatório a gravar.

        Returns:
            List[str]: Caminhos gravados.

        Raises:
            OSError: Se algum arquivo não puder ser gravado.
        """
        csv_path, json_path = f"{path_prefix}.csv", f"{path_prefix}.json"
        self.write_table(csv_path, METRICS_HEADER, metric_rows(report))
        _ensure_parent(json_path)
        with open(json_path, "w", encoding="utf-8") as handle:
            json.dump(report_document(report), handle, indent=2)
            handle.write("\n")
        logger.info("Relatório de métricas gravado em '%s' e '%s'.", csv_path, json_path)
        return [csv_path, json_path]

    def write_loss_log(self, path: str, rows: Sequence[LossLogRow], append: bool = False) -> None:
        """Grava (ou acrescenta) linhas do log de perdas; o cabeçalho só é escrito em arquivo novo."""
        _ensure_parent(path)
        new_file = not append or not os.path.exists(path) or os.path.getsize(path) == 0
        with open(path, "a" if append else "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            if new_file:
                writer.writerow(LOSS_LOG_HEADER)
            for row in rows:
                writer.writerow(
                    [row.epoch, row.step, repr(row.pg), repr(row.om), repr(row.ir), repr(row.total), repr(row.learning_rate)]
                    + [repr(float(row.grad_norms.get(name, 0.0))) for name in MODULES]
                )

    def write_table(self, path: str, header: Sequence[str], rows: Sequence[Dict[str, object]]) -> None:
        _ensure_parent(path)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(header))
            writer.writeheader()
            for row in rows:
                writer.writerow({key: row.get(key, "") for key in header})

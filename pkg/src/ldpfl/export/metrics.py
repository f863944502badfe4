"""Round metrics: one JSON object per line, plus CSV and markdown views of them."""

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from jinja2 import Template

from ldpfl.base.errors import InvalidInputError, ParseError
from ldpfl.export.base import Writer

logger = logging.getLogger("ldpfl")

SUMMARY_TEMPLATE = Path(__file__).parent / "templates" / "summary.md.j2"
REQUIRED_KEYS = ("round", "selected", "clients", "global_loss", "global_accuracy")


@dataclass
class MetricsWriter(Writer):
    """
    Appends round records to ``<target_dir>/<filename>``.

    Parameters
    ----------
    filename: str
        Name of the JSONL file. Truncated when the writer is created.
    """

    filename: str = "metrics.jsonl"

    def __post_init__(self):
        super().__post_init__()
        self.path.write_text("")

    @property
    def path(self) -> Path:
        return self.target_dir / self.filename

    def write(self, record) -> None:
        """Append a ``RoundRecord`` or a plain dict."""
        if hasattr(record, "to_dict"):
            record = record.to_dict()
        with open(self.path, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def read_metrics(path: str | Path) -> list[dict]:
    records = []
    with open(path) as f:
        for line, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", str(path), line) from e
            if not isinstance(record, dict):
                raise ParseError("expected a JSON object", str(path), line)
            missing = [key for key in REQUIRED_KEYS if key not in record]
            if missing:
                raise ParseError(f"missing keys {missing}", str(path), line)
            records.append(record)
    return records


def write_convergence_csv(records: Sequence[dict], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "global_accuracy", "global_loss"])
        for record in records:
            writer.writerow([record["round"], record["global_accuracy"], record["global_loss"]])
    return path


def render_summary(runs: dict[str, Sequence[dict]], template: str | Path | None = None) -> str:
    """Markdown table with one column per run."""
    if not runs:
        raise InvalidInputError("no runs to summarise")
    rows = []
    for name, records in runs.items():
        if not records:
            raise InvalidInputError(f"run {name!r} has no rounds")
        rows.append(
            {
                "name": name,
                "rounds": len(records),
                "final_accuracy": records[-1]["global_accuracy"],
                "best_accuracy": max(record["global_accuracy"] for record in records),
                "final_loss": records[-1]["global_loss"],
            }
        )
    source = Path(template or SUMMARY_TEMPLATE).read_text()
    return Template(source).render(runs=rows)

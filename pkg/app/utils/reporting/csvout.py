import csv
import math
from typing import Any, Dict, List

from .base import BaseWriter


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ("nan" if math.isnan(value) else ("inf" if value > 0 else "-inf"))
    return value


class CsvWriter(BaseWriter):
    """
    Writes a list of row dicts as CSV: header row, '.' decimal point, LF line endings.

    The header is the union of the row keys in first-seen order; missing cells are empty.
    """

    kind = "csv"

    def write(self, path: str, data: List[Dict[str, Any]]):
        header: List[str] = []
        for row in data:
            header.extend(key for key in row if key not in header)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=header, lineterminator="\n")
            writer.writeheader()
            for row in data:
                writer.writerow({key: _cell(row.get(key)) for key in header})

import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

from .base import ResultCollector
from .csvout import CsvWriter
from .jsonout import JsonWriter, to_jsonable
from .report import build_manifest, format_duration

MANIFEST = "manifest.json"


class ResultManager:
    """
    Single collector for every table and document a command produces.

    Results are only collected while the command runs; write_all() writes
    them, then the manifest listing them, from one place.
    """

    def __init__(self):
        self.collector = ResultCollector()
        self.writers = {writer.kind: writer for writer in (CsvWriter(), JsonWriter())}
        self.start_time: Optional[datetime] = None
        self.end_time: Optional[datetime] = None

    def set_start_time(self):
        """Set the start time of the command."""
        self.start_time = datetime.now()

    def add_table(self, name: str, rows: List[Dict[str, Any]]):
        """Queue a CSV table (name without extension)."""
        self.collector.add(f"{name}.csv", "csv", rows)

    def add_document(self, name: str, data: Any):
        """Queue a JSON document (name without extension)."""
        self.collector.add(f"{name}.json", "json", data)

    def write_all(
        self,
        out_dir: str,
        command: str,
        argv: List[str],
        experiment: Optional[Dict[str, Any]],
        seed: Optional[int],
        extra: Optional[Dict[str, Any]] = None,
    ) -> List[str]:
        """
        Write every collected result and the run manifest.

        Parameters:
            out_dir (str): Output directory (created if missing)
            command (str): Subcommand name
            argv (List[str]): Command-line arguments
            experiment (dict): Serialized experiment configuration
            seed (int): Experiment seed
            extra (dict): Additional manifest entries

        Returns:
            List[str]: Paths written, manifest last
        """
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for item in self.collector.get_all():
            path = os.path.join(out_dir, item.name)
            self.writers[item.kind].write(path, item.data)
            written.append(path)
            logging.debug(f"Wrote {path}", extra={"indent": 2})

        self.end_time = datetime.now()
        start = self.start_time or self.end_time
        manifest = build_manifest(
            command=command,
            argv=argv,
            experiment=experiment,
            seed=seed,
            start_time=start,
            end_time=self.end_time,
            files=[item.name for item in self.collector.get_all()],
            extra=to_jsonable(extra) if extra else None,
        )
        manifest_path = os.path.join(out_dir, MANIFEST)
        self.writers["json"].write(manifest_path, manifest)
        written.append(manifest_path)
        logging.info(f"Wrote {len(written)} file(s) to {out_dir} in {format_duration((self.end_time - start).total_seconds())}")
        return written

    def reset(self):
        """Forget collected results and times."""
        self.collector.clear()
        self.start_time = None
        self.end_time = None


# Global result manager instance
result_manager = ResultManager()

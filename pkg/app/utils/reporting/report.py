"""
Run-manifest assembly shared by every command.
"""
from datetime import datetime
from typing import Any, Dict, List, Optional

from app.utils.common import config_hash, package_versions


def format_duration(seconds: float) -> str:
    """Render a duration as '1h 02m 03s', '2m 03s' or '3.21s'."""
    if seconds < 60:
        return f"{seconds:.2f}s"
    minutes, secs = divmod(int(round(seconds)), 60)
    hours, minutes = divmod(minutes, 60)
    if hours:
        return f"{hours}h {minutes:02d}m {secs:02d}s"
    return f"{minutes}m {secs:02d}s"


def build_manifest(
    command: str,
    argv: List[str],
    experiment: Optional[Dict[str, Any]],
    seed: Optional[int],
    start_time: datetime,
    end_time: datetime,
    files: List[str],
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Describe a run completely enough to reproduce each of its output files.

    Parameters:
        command (str): Subcommand name
        argv (List[str]): Command-line arguments
        experiment (dict): Serialized experiment configuration after overrides
        seed (int): Experiment seed
        start_time, end_time (datetime): Wall-clock bounds of the run
        files (List[str]): Output files written next to the manifest
        extra (dict): Command-specific entries (e.g. the source directory of palm-report)

    Returns:
        dict: Manifest document
    """
    duration = (end_time - start_time).total_seconds()
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": experiment,
        "config_sha256": config_hash(experiment) if experiment is not None else None,
        "seed": seed,
        "versions": package_versions(),
        "start_time": start_time.isoformat(timespec="seconds"),
        "end_time": end_time.isoformat(timespec="seconds"),
        "duration_seconds": duration,
        "duration": format_duration(duration),
        "files": sorted(files),
    }
    if extra:
        manifest.update(extra)
    return manifest

from __future__ import annotations

__all__ = ["RunLogger", "get_logger", "read_records"]

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from w2geo.config import W2Config

logger = logging.getLogger(__name__)

RUN_LOG_NAME = "w2geo_runs.jsonl"


class RunLogger:
    """Appends one JSONL record per command or experiment run."""

    def __init__(self, log_file: Path) -> None:
        self._log_file = Path(log_file)

    @property
    def path(self) -> Path:
        return self._log_file

    def log(
        self,
        event: str,
        *,
        name: str = "",
        passed: bool | None = None,
        seed: int | None = None,
        detail: str = "",
        **extra,
    ) -> None:
        """Append a single JSONL record."""
        record: dict = {
            "timestamp": datetime.now(tz=timezone.utc).isoformat(),
            "event": event,
            "name": name,
        }
        if passed is not None:
            record["passed"] = passed
        if seed is not None:
            record["seed"] = seed
        if detail:
            record["detail"] = detail
        record.update(extra)

        self._log_file.parent.mkdir(parents=True, exist_ok=True)
        with self._log_file.open("a") as f:
            f.write(json.dumps(record, default=str) + "\n")


def read_records(log_file: Path) -> list[dict]:
    """All records of a run log; malformed lines are skipped."""
    log_file = Path(log_file)
    records: list[dict] = []
    if not log_file.exists():
        return records
    for line in log_file.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                logger.debug("Skipping malformed run-log line: %r", line[:80])
    return records


def get_logger(config: W2Config) -> RunLogger | None:
    """Return a RunLogger for the given config.

    Uses ``config.log_file`` if set; otherwise ``<report_dir>/w2geo_runs.jsonl``
    when ``config.report_dir`` is set, else ``None``.
    """
    if config.log_file is not None:
        return RunLogger(config.log_file)
    if config.report_dir is not None:
        return RunLogger(config.report_dir / RUN_LOG_NAME)
    return None

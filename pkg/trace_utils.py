import glob
import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional

import pandas as pd

from trace_model import Trace, parse_trace

logger = logging.getLogger(__name__)

QC_FOLDER = "QCTraces"
LOG_DIR = os.environ.get("RACEQC_LOG_DIR", "logs")

# Search order when no input is named
TRACE_PATTERNS = ["*.csv", "*.trace", "*.txt"]


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def get_qc_trace_path(qc_folder: str = QC_FOLDER) -> str:
    """
    Finds the first trace file in the QC traces folder.

    Returns:
        str: Path to the trace file

    Raises:
        FileNotFoundError: If the folder doesn't exist
        ValueError: If the folder holds no trace file
    """
    if not os.path.isdir(qc_folder):
        raise FileNotFoundError(f"{qc_folder} folder not found. Pass --input or create the '{qc_folder}' directory.")

    for pattern in TRACE_PATTERNS:
        matches = sorted(glob.glob(os.path.join(qc_folder, pattern)))
        if matches:
            logger.info("Found QC trace: %s", matches[0])
            return matches[0]

    available_files = os.listdir(qc_folder)
    if available_files:
        raise ValueError(f"No trace files in '{qc_folder}' (have: {available_files}). Supported: .csv, .trace, .txt")
    raise ValueError(f"'{qc_folder}' folder is empty. Please add a trace file for analysis.")


def read_trace_file(path: Optional[str]) -> tuple[Trace, str]:
    """Parse `path`, or the QC folder's first trace when no path is given."""
    path = path or get_qc_trace_path()
    if not os.path.exists(path):
        raise FileNotFoundError(f"Trace file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        trace = parse_trace(fh)
    logger.info("%s: %d events, %d threads", path, trace.n, trace.thread_count)
    return trace, path


def write_output(text: str, out: Optional[str] = None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(text, encoding="utf-8")
    logger.info("wrote %s", out)


def write_csv_log(table: pd.DataFrame, log_dir: str = LOG_DIR, prefix: str = "race_qc") -> Path:
    """Write `table` to <log_dir>/<prefix>_<YYYYmmdd_HHMMSS>.csv."""
    Path(log_dir).mkdir(parents=True, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    csv_path = Path(log_dir) / f"{prefix}_{stamp}.csv"
    table.to_csv(csv_path, index=True)
    return csv_path

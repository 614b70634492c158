"""CSV output with round-trip float formatting, and run manifests."""

from __future__ import annotations

import csv
import io
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        # repr gives the shortest string that parses back to the same double
        return repr(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """Collects what one CLI invocation produced."""

    def __init__(self, argv, seed, config=None, config_hash=""):
        self.data = {
            "tool_version": __version__,
            "python": sys.version.split()[0],
            "argv": list(argv),
            "command_line": " ".join(argv),
            "seed": seed,
            "config": config,
            "config_hash": config_hash,
            "started": _now(),
            "finished": None,
            "outputs": [],
        }

    def add(self, path):
        self.data["outputs"].append(Path(path).name)

    def write(self, out_dir) -> Path:
        self.data["finished"] = _now()
        path = Path(out_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())

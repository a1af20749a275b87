"""Report assembly and atomic JSON/CSV output."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import __version__
from .._exact import fraction_text
from ..ensemble import EmpiricalVerdict

SCHEMA_VERSION = 1


def _plain(value):
    if isinstance(value, EmpiricalVerdict):
        return value.to_dict()
    if isinstance(value, Fraction):
        return fraction_text(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, int) and not isinstance(value, bool) and value.bit_length() > 53:
        return fraction_text(value)
    return value


def verdict_passes(verdict: dict) -> bool:
    """Not-applicable verdicts neither pass nor fail the run."""
    return verdict.get("premise") == "not-applicable" or bool(verdict.get("pass"))


def build_report(kind: str, config_echo: dict, master_seed: int | None, *,
                 verdicts: Sequence[EmpiricalVerdict | dict] = (), bounds: dict | None = None,
                 extra: dict | None = None) -> dict:
    plain = [_plain(v) for v in verdicts]
    report = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "kind": kind,
        "master_seed": master_seed,
        "config": _plain(config_echo),
        "verdicts": plain,
        "bounds": _plain(bounds or {}),
        "pass": all(verdict_passes(v) for v in plain),
    }
    if extra:
        report.update(_plain(extra))
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: dict, path: str | Path) -> None:
    _atomic_write(Path(path), dumps(report))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_plain(x) for x in row])
    _atomic_write(Path(path), buffer.getvalue())

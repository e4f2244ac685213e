"""Scan and fit-report serialization.

Scan CSV schema: header row, then per row the setting followed by one column
per coincidence channel in fixed order and the four singles counts.  Floats
are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from typing import Any

from .analysis import FitResult
from .detection import ChannelCounts
from .experiment import ScanResult
from .interference import CHANNELS, DETECTORS

_HEADER = ["setting", *CHANNELS, *[f"singles_{d}" for d in DETECTORS]]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def scan_to_csv(scan: ScanResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADER)
        for setting, row in zip(scan.settings, scan.rows):
            writer.writerow(
                [_fmt(setting)]
                + [str(int(row.channels[ch])) for ch in CHANNELS]
                + [str(int(row.singles[d])) for d in DETECTORS]
            )


def scan_from_csv(path) -> ScanResult:
    """Re-parse a written scan file.  Apparatus metadata is not stored in the
    CSV; the returned result carries settings and rows only."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _HEADER:
            raise ValueError(f"{path}: unexpected CSV header {header}")
        settings: list[float] = []
        rows: list[ChannelCounts] = []
        for record in reader:
            if not record:
                continue
            if len(record) != len(_HEADER):
                raise ValueError(f"{path}: row has {len(record)} fields, "
                                 f"expected {len(_HEADER)}")
            settings.append(float(record[0]))
            channels = {ch: int(record[1 + i]) for i, ch in enumerate(CHANNELS)}
            singles = {d: int(record[1 + len(CHANNELS) + i]) for i, d in enumerate(DETECTORS)}
            rows.append(ChannelCounts(channels=channels, singles=singles))
    return ScanResult(variable="setting", units="", settings=tuple(settings),
                      rows=tuple(rows), apparatus=None, seed=0)


def scan_to_dict(scan: ScanResult) -> dict[str, Any]:
    return {
        "variable": scan.variable,
        "units": scan.units,
        "seed": scan.seed,
        "settings": [float(s) for s in scan.settings],
        "rows": [
            {"channels": dict(r.channels), "singles": dict(r.singles)} for r in scan.rows
        ],
        "apparatus": scan.apparatus.snapshot() if scan.apparatus else None,
    }


def scan_to_json(scan: ScanResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(scan_to_dict(scan), fh, indent=2, sort_keys=True)
        fh.write("\n")


def fit_to_dict(fit: FitResult) -> dict[str, Any]:
    return {
        "model": fit.model,
        "params": {k: float(v) for k, v in fit.params.items()},
        "uncertainties": {k: float(v) for k, v in fit.uncertainties.items()},
        "residual_sum_squares": float(fit.residual_sum_squares),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "message": fit.message,
    }


def write_json(data: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    import numpy as np

    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")

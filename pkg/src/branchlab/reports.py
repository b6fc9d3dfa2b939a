"""CSV/JSON artifact emission shared by the experiment runners."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, (tuple, list)):
        return " ".join(str(v) for v in value)
    return value


def write_csv(path: Path | str, rows: Sequence[dict], fieldnames: Sequence[str] | None = None) -> None:
    """RFC-4180 CSV, '.' decimal separator, UTF-8."""
    path = Path(path)
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    if fieldnames is None:
        fieldnames = list(rows[0].keys())
        for row in rows[1:]:
            for key in row:
                if key not in fieldnames:
                    fieldnames.append(key)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})


@dataclass
class RunClock:
    started: float = field(default_factory=time.monotonic)

    def elapsed(self) -> float:
        return time.monotonic() - self.started


def write_manifest(
    path: Path | str,
    *,
    experiment: str,
    config: dict,
    seed: int,
    outputs: Sequence[str],
    wall_seconds: float,
    extra: dict | None = None,
) -> None:
    from . import __version__

    doc = {
        "experiment": experiment,
        "config": config,
        "seed": seed,
        "software": {"package": "branchlab", "version": __version__},
        "outputs": list(outputs),
        "wall_seconds": wall_seconds,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, default=str), encoding="utf-8")

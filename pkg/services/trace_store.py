# services/trace_store.py
import json
import os
from typing import Any, Dict

import numpy as np


class TraceWriter:
    """Schreibt jede gespielte Runde als JSONL-Zeile, gut zum Debuggen & Replays.

    Arme werden 1-indiziert geschrieben, wie in den Familien-Dateien. Eine vorhandene
    Datei wird überschrieben, ein zweiter Lauf hängt also nichts an.
    """

    def __init__(self, path: str, algo: str, alpha: float, trial: int):
        self.path = path
        self.header = {"algo": algo, "alpha": float(alpha), "trial": int(trial)}
        self._fh = None

    def __enter__(self) -> "TraceWriter":
        folder = os.path.dirname(self.path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        return self

    def __exit__(self, *exc) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __call__(self, record: Any) -> None:
        line: Dict[str, Any] = dict(self.header)
        line.update(_record_fields(record))
        if self._fh is None:
            raise RuntimeError("TraceWriter used outside its with-block")
        self._fh.write(json.dumps(line) + "\n")


def _plain(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _record_fields(record: Any) -> Dict[str, Any]:
    # KLTrace / UCBTrace sind NamedTuples
    fields = {k: _plain(v) for k, v in record._asdict().items()}
    for key in ("arm", "ucb_arm"):
        if key in fields:
            fields[key] = int(fields[key]) + 1
    return fields

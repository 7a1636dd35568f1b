import re
from typing import Iterable, List, Optional

_WS_RE = re.compile(r"\s+")
_SPLIT_RE = re.compile(r"[,;\s]+")


def safe_str(x: Optional[object]) -> str:
    """None-sicher in String wandeln."""
    return "" if x is None else str(x)


def normalize_ws(s: Optional[str]) -> str:
    """Whitespace normalisieren (Zeilenumbrüche/Mehrfach-Spaces)."""
    return _WS_RE.sub(" ", safe_str(s)).strip()


def parse_float_list(s: Optional[str]) -> List[float]:
    """
    "0,0.25, 0.5;1" -> [0.0, 0.25, 0.5, 1.0]
    Leere Einträge werden ignoriert; ungültige Zahlen werfen ValueError.
    """
    parts = [p for p in _SPLIT_RE.split(normalize_ws(s)) if p]
    return [float(p) for p in parts]


def format_arm(arm: Iterable[int]) -> str:
    """0-basierte Basisarme -> "{1,3}" (1-basiert, wie in Dateien)."""
    return "{" + ",".join(str(e + 1) for e in arm) + "}"


def shorten(s: Optional[str], max_len: int = 120, ellipsis: str = "…") -> str:
    """
    Auf max_len kürzen – versucht an Wortgrenze zu schneiden.
    """
    s = normalize_ws(s)
    if len(s) <= max_len:
        return s
    cut = s.rfind(" ", 0, max_len - len(ellipsis))
    if cut == -1:
        cut = max_len - len(ellipsis)
    return s[:cut].rstrip() + ellipsis

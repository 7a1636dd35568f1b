# services/family_store.py
"""
JSON I/O for families and instances.

    {"d": 4, "arms": [[1, 2], [3, 4]], "mu": [0.9, 0.8, 0.2, 0.1], "noise": "bernoulli"}

Arms are 1-indexed on disk and 0-indexed in memory. "mu" and "noise" are
optional for load_family.
"""
from __future__ import annotations

import json
import logging
import os
from typing import Any, Dict, Optional

from services.instance import BanditInstance, SuperArmFamily, make_family_from_arms, make_instance
from utils.errors import FamilyError

log = logging.getLogger(__name__)


def _read(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise FamilyError(f"family file not found: {path}")
    except json.JSONDecodeError as e:
        raise FamilyError(f"family file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise FamilyError(f"family file {path} must hold a JSON object")
    return data


def family_from_dict(data: Dict[str, Any]) -> SuperArmFamily:
    try:
        d = int(data["d"])
        arms = [[int(e) - 1 for e in arm] for arm in data["arms"]]
    except (KeyError, TypeError, ValueError) as e:
        raise FamilyError(f"family needs 'd' and 'arms': {e}")
    return make_family_from_arms(d, arms)


def family_to_dict(family: SuperArmFamily) -> Dict[str, Any]:
    return {"d": family.d, "arms": [[e + 1 for e in arm] for arm in family.arms]}


def instance_to_dict(inst: BanditInstance) -> Dict[str, Any]:
    out = family_to_dict(inst.family)
    out["mu"] = [float(x) for x in inst.mu]
    out["noise"] = inst.noise
    return out


def load_family(path: str) -> SuperArmFamily:
    family = family_from_dict(_read(path))
    log.debug("loaded family from %s: d=%d, %d arms", path, family.d, len(family))
    return family


def load_instance(path: str, noise: Optional[str] = None) -> BanditInstance:
    data = _read(path)
    if "mu" not in data:
        raise FamilyError(f"{path} has no 'mu'; use load_family for bare families")
    family = family_from_dict(data)
    return make_instance(family, data["mu"], noise or data.get("noise", "bernoulli"))


def save_instance(inst: BanditInstance, path: str) -> None:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(instance_to_dict(inst), f, indent=2)

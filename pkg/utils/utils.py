from __future__ import annotations
import os
from fractions import Fraction
from typing import Dict, List


def ensure_dirs(out_root: str, *subdirs: str) -> Dict[str, str]:
    os.makedirs(out_root, exist_ok=True)
    paths = {"out_root": out_root}
    for name in subdirs:
        paths[name] = os.path.join(out_root, name)
        os.makedirs(paths[name], exist_ok=True)
    return paths


def parse_number_list(text: str) -> List[float]:
    """Parse ``"1/20,1/40,0.0125"`` into floats; fractions are allowed."""
    try:
        return [float(Fraction(part.strip())) for part in text.split(",") if part.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot parse number list '{text}': {exc}") from exc

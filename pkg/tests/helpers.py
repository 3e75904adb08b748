"""Shared test helpers."""

import os
from pathlib import Path

from aoa_lstm.classifier import LABELS
from aoa_lstm.data import Sample

FIXTURES = Path(__file__).parent / "fixtures"

# Official SemEval-2014 Task 4 files, looked up by glob in $AOA_SEMEVAL_DIR.
SEMEVAL_FILES = {
    "Laptop-Train": ("*aptop*rain*.xml",),
    "Laptop-Test": ("*aptop*est*.xml",),
    "Restaurant-Train": ("*estaurant*rain*.xml",),
    "Restaurant-Test": ("*estaurant*est*.xml",),
}


def semeval_file(name):
    root = os.environ.get("AOA_SEMEVAL_DIR")
    if not root:
        return None
    for pattern in SEMEVAL_FILES[name]:
        hits = sorted(Path(root).glob(pattern))
        if hits:
            return hits[0]
    return None


def make_counts_samples(pos, neu, neg):
    """Samples whose only meaningful content is their label."""
    out = []
    for label, k in zip(LABELS, (pos, neu, neg)):
        out.extend(Sample(("x",), (0, 1), label, "x") for _ in range(k))
    return out


# criterion number -> (title, status, detail); printed by the terminal summary hook
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def record(number, title, status, detail=""):
    ACCEPTANCE[number] = (title, status, detail)
    print(f"[{status}] criterion {number}: {title}  {detail}".rstrip())

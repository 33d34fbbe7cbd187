"""Regenerate the bundled synthetic partition fixtures.

Community sizes are fixed below; ROIs are dealt to communities via a seeded
permutation so that members of one community are not contiguous.
"""

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "neuropathnet" / "data"

FIXTURES = {
    "yeo7": [6, 8, 5, 7, 4, 6, 6],
    "yeo17": [4, 5, 3, 4, 4, 5, 3, 4, 4, 5, 3, 4, 4, 5, 3, 4, 4],
    "schaefer100_10": [9, 12, 8, 11, 10, 10, 9, 11, 10, 10],
}


def build(name, sizes, seed):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    perm = np.random.default_rng(seed).permutation(labels.size)
    assignment = np.empty_like(labels)
    assignment[perm] = labels
    return {
        "name": name,
        "num_rois": int(labels.size),
        "num_communities": len(sizes),
        "assignment": [[roi, int(c)] for roi, c in enumerate(assignment)],
    }


if __name__ == "__main__":
    for seed, (name, sizes) in enumerate(FIXTURES.items()):
        doc = build(name, sizes, seed)
        (OUT / f"{name}.json").write_text(json.dumps(doc) + "\n", encoding="utf-8")
        print(name, doc["num_rois"], doc["num_communities"])

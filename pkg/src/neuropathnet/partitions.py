"""Static functional partition schemes and community-pair indexing."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from math import comb
from pathlib import Path

import numpy as np

from .errors import ContractError, SchemaError

BUNDLED = {
    "yeo7": "yeo7.json",
    "yeo17": "yeo17.json",
    "schaefer100_10": "schaefer100_10.json",
}


@dataclass(frozen=True)
class PartitionScheme:
    """ROI-to-community map.

    ``assignment[roi]`` is the 0-based community of ``roi``. Construction
    validates that every community in ``[0, n_communities)`` is nonempty.
    """

    name: str
    num_rois: int
    n_communities: int
    assignment: tuple[int, ...] = field(repr=False)

    def __post_init__(self):
        if self.n_communities < 2:
            raise SchemaError(f"scheme {self.name!r}: need at least 2 communities, got {self.n_communities}")
        if len(self.assignment) != self.num_rois:
            raise SchemaError(f"scheme {self.name!r}: {len(self.assignment)} assignments for {self.num_rois} ROIs")
        for roi, c in enumerate(self.assignment):
            if not 0 <= c < self.n_communities:
                raise SchemaError(f"scheme {self.name!r}: ROI {roi} maps to community {c}, outside [0, {self.n_communities})")
        sizes = np.bincount(self.assignment, minlength=self.n_communities)
        empty = np.flatnonzero(sizes == 0)
        if empty.size:
            raise SchemaError(
                f"scheme {self.name!r}: community {int(empty[0])} of declared N={self.n_communities} is empty"
            )

    @property
    def n_paths(self) -> int:
        return comb(self.n_communities, 2)

    def assignment_array(self) -> np.ndarray:
        return np.asarray(self.assignment, dtype=np.int64)

    def members(self, community: int) -> np.ndarray:
        return np.flatnonzero(self.assignment_array() == community)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_rois": self.num_rois,
            "num_communities": self.n_communities,
            "assignment": [[roi, c] for roi, c in enumerate(self.assignment)],
        }


def community_sizes(scheme: PartitionScheme) -> np.ndarray:
    return np.bincount(scheme.assignment, minlength=scheme.n_communities)


def scheme_from_dict(doc: dict) -> PartitionScheme:
    """Build a scheme from the parsed file layout (see ``docs/formats.md``)."""
    try:
        name = str(doc["name"])
        num_rois = int(doc["num_rois"])
        n = int(doc["num_communities"])
        rows = doc["assignment"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"partition file missing or invalid field: {exc}") from None
    slots: list[int | None] = [None] * num_rois
    for entry in rows:
        try:
            roi, c = (int(v) for v in entry)
        except (TypeError, ValueError):
            raise SchemaError(f"assignment entry {entry!r} is not a [roi, community] pair") from None
        if not 0 <= roi < num_rois:
            raise SchemaError(f"ROI index {roi} outside [0, {num_rois})")
        if slots[roi] is not None:
            raise SchemaError(f"duplicate entry for ROI {roi}")
        if not 0 <= c < n:
            raise SchemaError(f"ROI {roi} maps to community {c}, outside [0, {n})")
        slots[roi] = c
    missing = [i for i, c in enumerate(slots) if c is None]
    if missing:
        raise SchemaError(f"ROI {missing[0]} has no community assignment")
    return PartitionScheme(name, num_rois, n, tuple(slots))


def load_scheme(path) -> PartitionScheme:
    """Load a JSON partition file, or one of the bundled fixture names."""
    key = str(path)
    if key in BUNDLED:
        text = resources.files("neuropathnet").joinpath("data", BUNDLED[key]).read_text("utf-8")
    else:
        p = Path(path)
        if not p.is_file():
            raise SchemaError(f"partition file not found: {p}")
        text = p.read_text("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{key}: not valid JSON ({exc})") from None
    return scheme_from_dict(doc)


def save_scheme(scheme: PartitionScheme, path):
    Path(path).write_text(json.dumps(scheme.to_dict(), indent=1) + "\n", encoding="utf-8")


def path_index(i: int, j: int, n: int) -> int:
    """Row-major index of the unordered pair ``i < j`` among ``comb(n, 2)`` pairs."""
    if not 0 <= i < j < n:
        raise ContractError(f"path_index needs 0 <= i < j < N, got i={i}, j={j}, N={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def path_pair(index: int, n: int) -> tuple[int, int]:
    """Inverse of :func:`path_index`."""
    if not 0 <= index < comb(n, 2):
        raise ContractError(f"path index {index} outside [0, {comb(n, 2)})")
    i = 0
    row = n - 1
    while index >= row:
        index -= row
        i += 1
        row -= 1
    return i, i + 1 + index


def all_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]

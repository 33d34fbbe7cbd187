"""Synthetic ROI time series with class-specific community coupling.

Each community owns one unit-variance latent factor. At every sample the
factor vector is drawn as ``M(t) @ eps`` with ``M M^T = R(t)``, where
``R(t)`` has unit diagonal and off-diagonal entries ``g_ij(t)``, so the
expected correlation between factors ``i`` and ``j`` is ``g_ij(t)``. ROI
``p`` in community ``c`` records ``factor_c + noise_std * eta_p``, which
puts the expected cross-community ROI correlation at
``g_ij / (1 + noise_std**2)``.

Profiles are piecewise constant over segments of ``segment_length``
samples, evaluated at segment midpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dfc import RoiTimeSeries
from .errors import ConfigError
from .partitions import PartitionScheme, all_pairs, load_scheme

PROFILE_KINDS = ("constant", "step", "sine", "ramp")


@dataclass(frozen=True)
class Profile:
    """Target coupling time course ``g(u)`` on normalised time ``u`` in [0, 1)."""

    kind: str = "constant"
    value: float = 0.0
    before: float = 0.0
    after: float = 0.0
    switch: float = 0.5
    amplitude: float = 0.0
    offset: float = 0.0
    cycles: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "constant":
            return np.full_like(u, self.value)
        if self.kind == "step":
            return np.where(u < self.switch, self.before, self.after)
        if self.kind == "ramp":
            return self.before + (self.after - self.before) * u
        return self.offset + self.amplitude * np.sin(2 * math.pi * self.cycles * u + self.phase)

    def bound(self) -> float:
        if self.kind == "constant":
            return abs(self.value)
        if self.kind in ("step", "ramp"):
            return max(abs(self.before), abs(self.after))
        return abs(self.offset) + abs(self.amplitude)

    @classmethod
    def from_dict(cls, doc: dict) -> "Profile":
        doc = {k: v for k, v in doc.items() if k != "pair"}
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad profile {doc!r}: {exc}") from None


@dataclass(frozen=True)
class ClassProfile:
    default: Profile = field(default_factory=Profile)
    pairs: dict[tuple[int, int], Profile] = field(default_factory=dict)

    def profile(self, i: int, j: int) -> Profile:
        return self.pairs.get((i, j), self.default)


@dataclass(frozen=True)
class SynthConfig:
    scheme: PartitionScheme
    classes: tuple[ClassProfile, ...]
    subjects_per_class: tuple[int, ...]
    scan_length: int = 300
    noise_std: float = 1.0
    segment_length: int = 15
    seed: int = 0

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ConfigError("need coupling profiles for at least two classes")
        if len(self.subjects_per_class) != len(self.classes):
            raise ConfigError("subjects_per_class must give one count per class")
        if any(n < 1 for n in self.subjects_per_class):
            raise ConfigError("every class needs at least one subject")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.scan_length < 2 or self.segment_length < 1:
            raise ConfigError("scan_length must be >= 2 and segment_length >= 1")
        n = self.scheme.n_communities
        for c, cp in enumerate(self.classes):
            for (i, j), prof in cp.pairs.items():
                if not 0 <= i < j < n:
                    raise ConfigError(f"class {c}: pair ({i}, {j}) is not a valid i < j pair for N={n}")
            for i, j in all_pairs(n):
                if cp.profile(i, j).bound() > 1.0:
                    raise ConfigError(f"class {c}: coupling for pair ({i}, {j}) exceeds 1 in magnitude")


def coupling_matrices(cp: ClassProfile, n: int, scan_length: int, segment_length: int) -> np.ndarray:
    """``(segments, N, N)`` target correlation matrices."""
    n_seg = math.ceil(scan_length / segment_length)
    mid = (np.arange(n_seg) * segment_length + segment_length / 2.0) / scan_length
    out = np.repeat(np.eye(n)[None], n_seg, axis=0)
    for i, j in all_pairs(n):
        g = cp.profile(i, j)(mid)
        out[:, i, j] = g
        out[:, j, i] = g
    return out


def _mixing(r: np.ndarray, where: str) -> np.ndarray:
    vals, vecs = np.linalg.eigh(r)
    if vals.min() < -1e-10:
        raise ConfigError(f"{where}: coupling matrix is not positive semidefinite (min eigenvalue {vals.min():.3g})")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _subject_seed(seed: int, label: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, label, k])


def generate(cfg: SynthConfig) -> list[RoiTimeSeries]:
    """Deterministic labelled cohort: ``subjects_per_class[c]`` subjects of class ``c``."""
    scheme = cfg.scheme
    n = scheme.n_communities
    comm = scheme.assignment_array()
    subjects = []
    mixers = []
    for c, cp in enumerate(cfg.classes):
        mats = coupling_matrices(cp, n, cfg.scan_length, cfg.segment_length)
        mixers.append([_mixing(m, f"class {c}, segment {s}") for s, m in enumerate(mats)])
    counter = 0
    for c, count in enumerate(cfg.subjects_per_class):
        for k in range(count):
            rng = np.random.default_rng(_subject_seed(cfg.seed, c, k))
            eps = rng.standard_normal((cfg.scan_length, n))
            factors = np.empty((cfg.scan_length, n))
            for s, m in enumerate(mixers[c]):
                lo, hi = s * cfg.segment_length, min((s + 1) * cfg.segment_length, cfg.scan_length)
                factors[lo:hi] = eps[lo:hi] @ m.T
            noise = rng.standard_normal((scheme.num_rois, cfg.scan_length))
            values = factors.T[comm] + cfg.noise_std * noise
            subjects.append(RoiTimeSeries(f"sub-{counter:04d}", values, c))
            counter += 1
    return subjects


def step_contrast(scheme: PartitionScheme, gap: float = 1.0, subjects_per_class: int = 100,
                  scan_length: int = 300, noise_std: float = 1.0, seed: int = 0,
                  pairs: Sequence[tuple[int, int]] = ((0, 1), (2, 3)), baseline: float = 0.1) -> SynthConfig:
    """Two classes whose listed pairs carry opposite-sign step profiles of height ``gap / 2``.

    ``gap = 0`` makes the classes indistinguishable.
    """
    half = gap / 2.0
    c0 = ClassProfile(Profile("constant", value=baseline),
                      {p: Profile("step", before=half, after=-half) for p in pairs})
    c1 = ClassProfile(Profile("constant", value=baseline),
                      {p: Profile("step", before=-half, after=half) for p in pairs})
    return SynthConfig(scheme, (c0, c1), (subjects_per_class, subjects_per_class),
                       scan_length, noise_std, 15, seed)


def config_from_dict(doc: dict) -> SynthConfig:
    """Parse the ``synth`` section of a run config (see ``docs/formats.md``)."""
    try:
        scheme = doc["scheme"]
        scheme = scheme if isinstance(scheme, PartitionScheme) else load_scheme(scheme)
        classes = []
        for entry in doc["classes"]:
            default = Profile.from_dict(entry.get("default", {"kind": "constant", "value": 0.0}))
            pairs = {}
            for p in entry.get("pairs", []):
                i, j = (int(v) for v in p["pair"])
                pairs[(i, j)] = Profile.from_dict(p)
            classes.append(ClassProfile(default, pairs))
        per = doc.get("subjects_per_class", 10)
        per = tuple(int(v) for v in per) if isinstance(per, (list, tuple)) else (int(per),) * len(classes)
        return SynthConfig(
            scheme=scheme,
            classes=tuple(classes),
            subjects_per_class=per,
            scan_length=int(doc.get("scan_length", 300)),
            noise_std=float(doc.get("noise_std", 1.0)),
            segment_length=int(doc.get("segment_length", 15)),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid synth config: {exc!r}") from None


def mixed_contrast(scheme: PartitionScheme, gap: float = 1.0, subjects_per_class: int = 100,
                   scan_length: int = 300, noise_std: float = 1.0, seed: int = 0,
                   step_pair: tuple[int, int] = (0, 1), steady_pair: tuple[int, int] = (2, 3),
                   baseline: float = 0.1) -> SynthConfig:
    """Two classes differing on one pair by an opposite-sign step and on another by a steady offset.

    Both contrasts have height ``gap / 2`` per class; ``gap = 0`` gives identical classes.
    """
    half = gap / 2.0
    classes = tuple(
        ClassProfile(Profile("constant", value=baseline), {
            step_pair: Profile("step", before=sign * half, after=-sign * half),
            steady_pair: Profile("constant", value=sign * half),
        })
        for sign in (1.0, -1.0)
    )
    return SynthConfig(scheme, classes, (subjects_per_class, subjects_per_class),
                       scan_length, noise_std, 15, seed)

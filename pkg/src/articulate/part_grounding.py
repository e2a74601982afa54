"""Actionable-part grounding: max-pooled part features matched by KNN.

Real image features are out of reach here; `synthetic_store` produces
class-conditioned Gaussian vectors so the retrieval math can be exercised.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .action_program import JointKind


class GAPartClass(enum.Enum):
    HINGE_DOOR = "hinge_door"
    SLIDER_DRAWER = "slider_drawer"
    SLIDER_BUTTON = "slider_button"
    HINGE_HANDLE = "hinge_handle"
    LINE_FIXED_HANDLE = "line_fixed_handle"
    ROUND_FIXED_HANDLE = "round_fixed_handle"
    HINGE_LID = "hinge_lid"
    SLIDER_LID = "slider_lid"
    HINGE_KNOB = "hinge_knob"

    @property
    def hyphenated(self) -> str:
        return self.value.replace("_", "-")

    @property
    def joint_kind(self) -> JointKind | None:
        """None for fixed handles, which move with their parent's joint."""
        return _JOINT_OF.get(self)

    @property
    def is_handle(self) -> bool:
        return self in HANDLE_CLASSES

    @classmethod
    def parse(cls, token: str) -> GAPartClass:
        key = token.strip().lower().replace("-", "_").replace(" ", "_")
        try:
            return cls(key)
        except ValueError:
            pass
        for member in cls:
            if member.name.lower() == key or member.name.replace("_", "").lower() == key.replace("_", ""):
                return member
        raise ValueError(f"unknown GAPart class {token!r}")


_JOINT_OF = {
    GAPartClass.HINGE_DOOR: JointKind.REVOLUTE,
    GAPartClass.HINGE_HANDLE: JointKind.REVOLUTE,
    GAPartClass.HINGE_LID: JointKind.REVOLUTE,
    GAPartClass.HINGE_KNOB: JointKind.REVOLUTE,
    GAPartClass.SLIDER_DRAWER: JointKind.PRISMATIC,
    GAPartClass.SLIDER_BUTTON: JointKind.PRISMATIC,
    GAPartClass.SLIDER_LID: JointKind.PRISMATIC,
}

HANDLE_CLASSES = frozenset({GAPartClass.LINE_FIXED_HANDLE, GAPartClass.ROUND_FIXED_HANDLE, GAPartClass.HINGE_HANDLE})


class EmptyMask(ValueError):
    pass


class EmptyStore(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureMap:
    values: np.ndarray  # (H, W, D)
    mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.mask, dtype=bool)
        if v.ndim != 3 or m.shape != v.shape[:2]:
            raise DimensionMismatch(f"mask {m.shape} does not match map {v.shape}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def max_pool(fmap: FeatureMap) -> np.ndarray:
    if not fmap.mask.any():
        raise EmptyMask("mask selects no cells")
    return fmap.values[fmap.mask].max(axis=0)


class FeatureStore:
    """Immutable set of (vector, label) reference entries."""

    def __init__(self, vectors, labels: Sequence[GAPartClass]):
        vecs = np.asarray(vectors, dtype=float)
        if vecs.ndim != 2:
            raise DimensionMismatch("store vectors must be a 2-D array")
        if len(vecs) != len(labels):
            raise ValueError("one label per vector required")
        norms = np.linalg.norm(vecs, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero vectors have no direction")
        self._vectors = vecs
        self._unit = vecs / norms[:, None]
        self._labels = tuple(labels)
        self._vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self._labels)

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @property
    def labels(self) -> tuple[GAPartClass, ...]:
        return self._labels

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    @classmethod
    def load_jsonl(cls, path: str | Path) -> FeatureStore:
        vecs, labels = [], []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            doc = json.loads(line)
            try:
                labels.append(GAPartClass.parse(doc["label"]))
                vecs.append([float(x) for x in doc["vector"]])
            except (KeyError, ValueError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: bad entry: {e}") from None
        if not vecs:
            raise EmptyStore(f"{path}: no entries")
        if len({len(v) for v in vecs}) != 1:
            raise DimensionMismatch(f"{path}: vectors have differing dimensions")
        return cls(vecs, labels)

    def dump_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for v, lab in zip(self._vectors, self._labels):
                fh.write(json.dumps({"label": lab.value, "vector": [float(x) for x in v]}) + "\n")

    def cosine_distances(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=float).reshape(-1)
        if q.shape[0] != self.dim:
            raise DimensionMismatch(f"query has dimension {q.shape[0]}, store has {self.dim}")
        n = np.linalg.norm(q)
        if n == 0:
            raise ValueError("zero query vector")
        # row-wise sums keep each distance independent of the entry's position
        return 1.0 - (self._unit * (q / n)).sum(axis=1)


_ORDER = {c: i for i, c in enumerate(GAPartClass)}


def knn_ground(store: FeatureStore, query, k: int = 5) -> tuple[GAPartClass, dict[GAPartClass, int]]:
    """Majority label among the k nearest entries by cosine distance.

    A split vote goes to whichever tied label has the nearest member.
    """
    if store is None or len(store) == 0:
        raise EmptyStore("feature store is empty")
    if not 1 <= k <= len(store):
        raise ValueError(f"k must be in [1, {len(store)}], got {k}")
    d = store.cosine_distances(query)
    # equal distances fall back to class order so store permutation never matters
    order = sorted(range(len(store)), key=lambda i: (d[i], _ORDER[store.labels[i]]))[:k]
    ranked = [store.labels[i] for i in order]
    votes = Counter(ranked)
    top = max(votes.values())
    tied = {lab for lab, c in votes.items() if c == top}
    label = next(lab for lab in ranked if lab in tied)
    return label, dict(votes)


def class_means(dim: int, seed: int = 0) -> dict[GAPartClass, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {c: rng.normal(size=dim) for c in GAPartClass}


def synthetic_feature(cls: GAPartClass, means: dict, sigma: float, rng: np.random.Generator) -> np.ndarray:
    mu = means[cls]
    return mu + rng.normal(scale=sigma * np.linalg.norm(mu) / np.sqrt(len(mu)), size=len(mu))


def synthetic_store(
    dim: int = 32,
    per_class: int = 10,
    sigma: float = 0.3,
    seed: int = 0,
    classes: Iterable[GAPartClass] = tuple(GAPartClass),
) -> tuple[FeatureStore, dict[GAPartClass, np.ndarray]]:
    """Reference store of Gaussian features around one random mean per class.

    `sigma` is relative to the per-component scale of the class mean.
    """
    means = class_means(dim, seed)
    rng = np.random.default_rng(seed + 1)
    vecs, labels = [], []
    for c in classes:
        for _ in range(per_class):
            vecs.append(synthetic_feature(c, means, sigma, rng))
            labels.append(c)
    return FeatureStore(vecs, labels), means

"""Small rigid-body math layer: quaternions, poses, oriented boxes, point clouds.

Vectors and point clouds are plain float64 numpy arrays of shape (3,) and
(n, 3). Rotations are stored as unit quaternions (w, x, y, z); matrices are
computed on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_EPS_AXIS = 1e-12


def vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector: {a}")
    return a


def as_cloud(points) -> np.ndarray:
    a = np.asarray(points, dtype=float)
    if a.size == 0:
        return np.zeros((0, 3))
    a = a.reshape(-1, 3)
    if not np.all(np.isfinite(a)):
        raise ValueError("point cloud contains non-finite values")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Rotation:
    """Unit quaternion rotation. Construction normalizes the input."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        q = np.array([self.w, self.x, self.y, self.z], dtype=float)
        n = float(np.linalg.norm(q))
        if not math.isfinite(n) or n < 1e-300:
            raise ValueError("quaternion must be finite and non-zero")
        q = q / n
        for name, val in zip("wxyz", q):
            object.__setattr__(self, name, float(val))

    @classmethod
    def identity(cls) -> Rotation:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> Rotation:
        u = vec3(axis)
        n = np.linalg.norm(u)
        if n < _EPS_AXIS:
            return cls.identity()
        u = u / n
        s = math.sin(angle / 2.0)
        return cls(math.cos(angle / 2.0), *(u * s))

    @classmethod
    def about_x(cls, degrees: float) -> Rotation:
        return cls.from_axis_angle((1, 0, 0), math.radians(degrees))

    @classmethod
    def about_y(cls, degrees: float) -> Rotation:
        return cls.from_axis_angle((0, 1, 0), math.radians(degrees))

    @classmethod
    def about_z(cls, degrees: float) -> Rotation:
        return cls.from_axis_angle((0, 0, 1), math.radians(degrees))

    @classmethod
    def from_matrix(cls, m) -> Rotation:
        # Shepperd's method: branch on the largest diagonal term for stability.
        m = np.asarray(m, dtype=float).reshape(3, 3)
        if not np.allclose(m.T @ m, np.eye(3), atol=1e-6) or np.linalg.det(m) <= 0:
            raise ValueError("matrix is not a proper rotation")
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > max(m[0, 0], m[1, 1], m[2, 2]):
            s = 2.0 * math.sqrt(1.0 + tr)
            return cls(0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        if m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            return cls((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        if m[1, 1] >= m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            return cls((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        return cls((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)

    @classmethod
    def from_basis(cls, x_axis, y_axis, z_axis) -> Rotation:
        return cls.from_matrix(np.column_stack([vec3(x_axis), vec3(y_axis), vec3(z_axis)]))

    @property
    def wxyz(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def canonical(self) -> Rotation:
        """Same rotation with w >= 0 (resolves the double cover)."""
        if self.w < 0:
            return Rotation(-self.w, -self.x, -self.y, -self.z)
        return self

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def inverse(self) -> Rotation:
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: Rotation) -> Rotation:
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def apply(self, v) -> np.ndarray:
        """Rotate a vector (3,) or a stack of vectors (n, 3)."""
        v = np.asarray(v, dtype=float)
        return v @ self.as_matrix().T

    def __repr__(self) -> str:
        return f"Rotation(w={self.w:.6g}, x={self.x:.6g}, y={self.y:.6g}, z={self.z:.6g})"


def rotation_angle_axis(r: Rotation) -> tuple[float, np.ndarray]:
    """Return (angle in [0, pi], unit axis). Near-identity reports axis (0, 0, 1)."""
    q = r.canonical()
    v = np.array([q.x, q.y, q.z])
    s = float(np.linalg.norm(v))
    angle = 2.0 * math.atan2(s, q.w)
    if angle < 1e-12:
        return 0.0, np.array([0.0, 0.0, 1.0])
    return angle, v / s


def geodesic_distance(a: Rotation, b: Rotation) -> float:
    """Angle in radians of the relative rotation a^-1 b."""
    return rotation_angle_axis(a.inverse() * b)[0]


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", _frozen(vec3(self.translation)))

    @classmethod
    def identity(cls) -> Pose:
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> Pose:
        m = np.asarray(m, dtype=float)
        return cls(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def apply(self, v) -> np.ndarray:
        return self.rotation.apply(v) + self.translation

    def __matmul__(self, other: Pose) -> Pose:
        return pose_compose(self, other)

    def inverse(self) -> Pose:
        return pose_inverse(self)

    def __repr__(self) -> str:
        return f"Pose({self.rotation!r}, t={np.round(self.translation, 6).tolist()})"


def pose_apply(p: Pose, v) -> np.ndarray:
    return p.rotation.apply(vec3(v)) + p.translation


def pose_compose(a: Pose, b: Pose) -> Pose:
    """a ∘ b: apply b first, then a."""
    return Pose(a.rotation * b.rotation, a.rotation.apply(b.translation) + a.translation)


def pose_inverse(p: Pose) -> Pose:
    inv = p.rotation.inverse()
    return Pose(inv, -inv.apply(p.translation))


def rotation_about_line(point, axis, angle: float) -> Pose:
    """Rigid motion rotating by `angle` about the line through `point` along `axis`."""
    r = Rotation.from_axis_angle(axis, angle)
    c = vec3(point)
    return Pose(r, c - r.apply(c))


@dataclass(frozen=True, eq=False)
class OrientedBox:
    center: np.ndarray
    half_extents: np.ndarray
    rotation: Rotation = Rotation()

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(vec3(self.center)))
        h = _frozen(vec3(self.half_extents))
        if np.any(h <= 0):
            raise ValueError(f"half extents must be positive, got {h.tolist()}")
        object.__setattr__(self, "half_extents", h)

    @property
    def pose(self) -> Pose:
        return Pose(self.rotation, self.center)

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return self.pose.apply(signs * self.half_extents)

    def extent_along(self, direction) -> float:
        """Full width of the box measured along a world direction."""
        d = vec3(direction)
        d = d / np.linalg.norm(d)
        local = self.rotation.inverse().apply(d)
        return float(2.0 * np.sum(np.abs(local) * self.half_extents))

    def transformed(self, p: Pose) -> OrientedBox:
        q = pose_compose(p, self.pose)
        return OrientedBox(q.translation, self.half_extents, q.rotation)


def _face_areas(h: np.ndarray) -> np.ndarray:
    # face order: +x, -x, +y, -y, +z, -z
    ax, ay, az = 4 * h[1] * h[2], 4 * h[0] * h[2], 4 * h[0] * h[1]
    return np.array([ax, ax, ay, ay, az, az])


def sample_box_local(half_extents, n: int, seed: int) -> np.ndarray:
    """Area-uniform samples on the box surface, in the box frame."""
    if n < 1:
        raise ValueError("n must be >= 1")
    h = vec3(half_extents)
    rng = np.random.default_rng(seed)
    areas = _face_areas(h)
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    pts = np.empty((n, 3))
    for f in range(6):
        idx = np.flatnonzero(faces == f)
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        others = [a for a in range(3) if a != axis]
        pts[idx, axis] = sign * h[axis]
        pts[idx, others[0]] = uv[idx, 0] * h[others[0]]
        pts[idx, others[1]] = uv[idx, 1] * h[others[1]]
    return pts


def sample_box_surface(b: OrientedBox, n: int, seed: int) -> np.ndarray:
    return b.pose.apply(sample_box_local(b.half_extents, n, seed))


# -- serialization -----------------------------------------------------------

def vec_to_json(v) -> list[float]:
    return [float(c) for c in np.asarray(v, dtype=float).reshape(3)]


def rotation_to_json(r: Rotation) -> list[float]:
    return [float(c) for c in r.canonical().wxyz]


def rotation_from_json(doc: Sequence[float]) -> Rotation:
    if len(doc) != 4:
        raise ValueError("rotation must be [w, x, y, z]")
    return Rotation(*map(float, doc))


def pose_to_json(p: Pose) -> dict:
    return {"rotation": rotation_to_json(p.rotation), "translation": vec_to_json(p.translation)}


def pose_from_json(doc: dict) -> Pose:
    return Pose(rotation_from_json(doc["rotation"]), vec3(doc["translation"]))


def box_to_json(b: OrientedBox) -> dict:
    return {
        "center": vec_to_json(b.center),
        "half_extents": vec_to_json(b.half_extents),
        "rotation": rotation_to_json(b.rotation),
    }


def box_from_json(doc: dict) -> OrientedBox:
    rot = rotation_from_json(doc["rotation"]) if "rotation" in doc else Rotation.identity()
    return OrientedBox(vec3(doc["center"]), vec3(doc["half_extents"]), rot)


def read_xyz(path: str | Path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'x y z', got {line!r}")
        rows.append([float(p) for p in parts])
    return as_cloud(rows)


def write_xyz(path: str | Path, points: Iterable) -> None:
    pts = as_cloud(points)
    Path(path).write_text("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist()))

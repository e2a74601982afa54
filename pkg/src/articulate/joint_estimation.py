"""Joint inference from two observations of a moving part.

The rigid motion between index-corresponded clouds is estimated with a
scale-free Umeyama fit wrapped in RANSAC; the motion is then read as a
revolute (screw without pitch), prismatic or stationary joint.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Pose, Rotation, as_cloud, geodesic_distance, rotation_angle_axis, vec3

# Classification thresholds. The angle threshold sits just under 1 degree so
# any rotation of at least a degree is reported as revolute.
MIN_ANGLE = 0.015  # rad
MIN_TRANSLATION = 0.005  # m


class DegenerateInput(ValueError):
    pass


class NoConsensus(RuntimeError):
    pass


class KindMismatch(ValueError):
    pass


class EstimateKind(enum.Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"
    STATIONARY = "stationary"


@dataclass(frozen=True, eq=False)
class RigidTransformEstimate:
    rotation: Rotation
    translation: np.ndarray
    inlier_mask: np.ndarray
    rmse: float

    @property
    def pose(self) -> Pose:
        return Pose(self.rotation, self.translation)

    @property
    def inlier_count(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


@dataclass(frozen=True, eq=False)
class JointEstimate:
    kind: EstimateKind
    axis_dir: np.ndarray | None = None
    axis_point: np.ndarray | None = None
    displacement: float = 0.0

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "axis_dir": None if self.axis_dir is None else [float(c) for c in self.axis_dir],
            "axis_point": None if self.axis_point is None else [float(c) for c in self.axis_point],
            "displacement": float(self.displacement),
        }


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 256
    inlier_threshold: float = 0.005
    min_sample: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")
        if self.min_sample < 3:
            raise ValueError("min_sample must be >= 3")


def _check_pair(x0, xt) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_cloud(x0), as_cloud(xt)
    if a.shape != b.shape:
        raise DegenerateInput(f"clouds differ in size: {len(a)} vs {len(b)}")
    if len(a) < 3:
        raise DegenerateInput(f"need at least 3 corresponding points, got {len(a)}")
    return a, b


def _is_collinear(centered: np.ndarray) -> bool:
    s = np.linalg.svd(centered, compute_uv=False)
    return s[0] == 0 or s[1] <= 1e-9 * s[0]


def _kabsch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu0, mut = src.mean(axis=0), dst.mean(axis=0)
    h = (dst - mut).T @ (src - mu0) / len(src)
    u, _, vt = np.linalg.svd(h)
    d = np.ones(3)
    d[2] = np.sign(np.linalg.det(u @ vt)) or 1.0
    r = (u * d) @ vt
    return r, mut - r @ mu0


def _kabsch_batch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # src, dst: (m, k, 3)
    mu0 = src.mean(axis=1, keepdims=True)
    mut = dst.mean(axis=1, keepdims=True)
    h = np.einsum("mki,mkj->mij", dst - mut, src - mu0) / src.shape[1]
    u, _, vt = np.linalg.svd(h)
    det = np.sign(np.linalg.det(u @ vt))
    det[det == 0] = 1.0
    u = u.copy()
    u[:, :, 2] *= det[:, None]
    r = u @ vt
    t = mut[:, 0, :] - np.einsum("mij,mj->mi", r, mu0[:, 0, :])
    return r, t


def _residuals(r: np.ndarray, t: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.linalg.norm(src @ r.T + t - dst, axis=1)


def umeyama_align(x0, xt) -> RigidTransformEstimate:
    """Least-squares rigid transform (unit scale) taking x0 onto xt."""
    a, b = _check_pair(x0, xt)
    if _is_collinear(a - a.mean(axis=0)):
        raise DegenerateInput("source points are collinear or coincident")
    r, t = _kabsch(a, b)
    res = _residuals(r, t, a, b)
    return RigidTransformEstimate(
        Rotation.from_matrix(r), t, np.ones(len(a), dtype=bool), float(np.sqrt(np.mean(res ** 2)))
    )


def ransac_align(x0, xt, p: RansacParams = RansacParams()) -> RigidTransformEstimate:
    """Umeyama inside RANSAC; deterministic for a fixed `p.seed`.

    Hypotheses come from `p.min_sample`-point samples; the one with the most
    inliers wins (ties go to lower inlier RMSE) and is refit on its inliers.
    """
    a, b = _check_pair(x0, xt)
    if _is_collinear(a - a.mean(axis=0)):
        raise DegenerateInput("source points are collinear or coincident")
    n = len(a)
    k = min(p.min_sample, n)
    rng = np.random.default_rng(p.seed)
    # k distinct indices per row: the positions of the k smallest uniform keys
    idx = np.argpartition(rng.random((p.iterations, n)), k - 1, axis=1)[:, :k]
    src, dst = a[idx], b[idx]

    centered = src - src.mean(axis=1, keepdims=True)
    s = np.linalg.svd(centered, compute_uv=False)
    usable = s[:, 1] > 1e-9 * np.maximum(s[:, 0], 1e-300)
    if not np.any(usable):
        raise NoConsensus("every minimal sample was degenerate")

    rs, ts = _kabsch_batch(src[usable], dst[usable])
    # one GEMM for all hypotheses: (n,3) @ (3, 3m) -> (n, m, 3)
    m = len(rs)
    moved = (a @ rs.transpose(2, 1, 0).reshape(3, 3 * m, order="F")).reshape(n, m, 3)
    diff = moved + ts[None] - b[:, None, :]
    res2 = np.einsum("nmi,nmi->mn", diff, diff)
    inl = res2 < p.inlier_threshold ** 2
    counts = inl.sum(axis=1)
    sq = np.where(inl, res2, 0.0).sum(axis=1)
    rmse = np.sqrt(sq / np.maximum(counts, 1))
    # lexicographic: most inliers, then lowest rmse, then earliest hypothesis
    best = int(np.lexsort((np.arange(len(counts)), rmse, -counts))[0])
    mask = inl[best]
    if mask.sum() < 3:
        raise NoConsensus(f"best hypothesis has only {int(mask.sum())} inliers")
    if _is_collinear(a[mask] - a[mask].mean(axis=0)):
        raise NoConsensus("consensus set is degenerate")
    r, t = _kabsch(a[mask], b[mask])
    rr = _residuals(r, t, a[mask], b[mask])
    return RigidTransformEstimate(Rotation.from_matrix(r), t, mask.copy(), float(np.sqrt(np.mean(rr ** 2))))


def _pivot(r: np.ndarray, t: np.ndarray, reference: np.ndarray) -> np.ndarray:
    # (I - R) c = t has rank 2 with the rotation axis as null space; take the
    # solution nearest the reference point.
    a = np.eye(3) - r
    u, s, vt = np.linalg.svd(a)
    rhs = t - a @ reference
    # two non-zero singular values by construction
    return reference + vt[:2].T @ ((u[:, :2].T @ rhs) / s[:2])


def infer_joint(
    est: RigidTransformEstimate | Pose,
    reference,
    axis_hint=None,
    min_angle: float = MIN_ANGLE,
    min_translation: float = MIN_TRANSLATION,
) -> JointEstimate:
    """Read a rigid motion as a joint.

    `axis_hint`, when given, fixes the orientation of the reported axis: the
    axis is flipped to point along the hint and the displacement sign follows,
    so positive displacement means motion in the hinted direction.
    """
    rot, t = (est.rotation, vec3(est.translation))
    ref = vec3(reference)
    angle, axis = rotation_angle_axis(rot)
    if angle >= min_angle:
        c = _pivot(rot.as_matrix(), t, ref)
        disp = angle
        if axis_hint is not None and np.dot(axis, vec3(axis_hint)) < 0:
            axis, disp = -axis, -disp
        return JointEstimate(EstimateKind.REVOLUTE, axis, c, disp)
    norm = float(np.linalg.norm(t))
    if norm >= min_translation:
        axis = t / norm
        disp = norm
        if axis_hint is not None and np.dot(axis, vec3(axis_hint)) < 0:
            axis, disp = -axis, -disp
        return JointEstimate(EstimateKind.PRISMATIC, axis, None, disp)
    return JointEstimate(EstimateKind.STATIONARY)


def interactive_perception(x0, xt, p: RansacParams = RansacParams(), reference=None, **kwargs) -> JointEstimate:
    """Robust alignment of the initial and current part clouds, then joint inference.

    `reference` defaults to the centroid of the initial cloud.
    """
    a = as_cloud(x0)
    if reference is None:
        reference = a.mean(axis=0) if len(a) else np.zeros(3)
    return infer_joint(ransac_align(a, xt, p), reference, **kwargs)


# -- error metrics ---------------------------------------------------------------

@dataclass
class PoseErrorReport:
    """Errors of one estimate: rotation/translation errors for poses; axis
    angle, axis-line distance and displacement errors for joints."""

    rotation_deg: float | None = None
    translation_m: float | None = None
    axis_deg: float | None = None
    axis_distance_m: float | None = None
    displacement: float | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def line_distance(p1, u1, p2, u2) -> float:
    p1, u1, p2, u2 = map(vec3, (p1, u1, p2, u2))
    u1, u2 = u1 / np.linalg.norm(u1), u2 / np.linalg.norm(u2)
    w = p2 - p1
    cross = np.cross(u1, u2)
    sn = np.linalg.norm(cross)
    if sn < 1e-9:
        return float(np.linalg.norm(np.cross(w, u1)))
    return float(abs(np.dot(w, cross)) / sn)


def axis_angle_error(u1, u2) -> float:
    """Angle between two lines in degrees, ignoring direction sign."""
    u1, u2 = vec3(u1), vec3(u2)
    c = abs(np.dot(u1, u2)) / (np.linalg.norm(u1) * np.linalg.norm(u2))
    s = np.linalg.norm(np.cross(u1, u2)) / (np.linalg.norm(u1) * np.linalg.norm(u2))
    return math.degrees(math.atan2(s, c))


def pose_errors(est, truth) -> PoseErrorReport:
    if isinstance(est, (Pose, RigidTransformEstimate)) and isinstance(truth, (Pose, RigidTransformEstimate)):
        return PoseErrorReport(
            rotation_deg=math.degrees(geodesic_distance(est.rotation, truth.rotation)),
            translation_m=float(np.linalg.norm(vec3(est.translation) - vec3(truth.translation))),
        )
    if isinstance(est, JointEstimate) and isinstance(truth, JointEstimate):
        if est.kind is not truth.kind:
            raise KindMismatch(f"{est.kind.value} vs {truth.kind.value}")
        if est.kind is EstimateKind.STATIONARY:
            return PoseErrorReport(displacement=abs(est.displacement - truth.displacement))
        rep = PoseErrorReport(
            axis_deg=axis_angle_error(est.axis_dir, truth.axis_dir),
            displacement=abs(_oriented_disp(est, truth) - truth.displacement),
        )
        if est.kind is EstimateKind.REVOLUTE:
            rep.axis_distance_m = line_distance(est.axis_point, est.axis_dir, truth.axis_point, truth.axis_dir)
        return rep
    raise TypeError(f"cannot compare {type(est).__name__} with {type(truth).__name__}")


def _oriented_disp(est: JointEstimate, truth: JointEstimate) -> float:
    # displacement expressed about the truth's axis orientation
    return est.displacement if np.dot(est.axis_dir, truth.axis_dir) >= 0 else -est.displacement


def accuracy(reports: Sequence[PoseErrorReport], max_deg: float, max_dist: float) -> float:
    """Fraction of reports within both bounds (inclusive)."""
    if not reports:
        return float("nan")
    ok = sum(
        1 for r in reports
        if r.rotation_deg is not None and r.translation_m is not None
        and r.rotation_deg <= max_deg and r.translation_m <= max_dist
    )
    return ok / len(reports)


def a5(reports: Sequence[PoseErrorReport]) -> float:
    return accuracy(reports, 5.0, 0.05)


def a10(reports: Sequence[PoseErrorReport]) -> float:
    return accuracy(reports, 10.0, 0.10)

"""Loss terms for the drape optimization: distance loss (Chamfer +
correspondence residuals), structural loss (angle distortion + local-area
KL divergence + skinny-face penalty) and the alternation schedule.

All differentiable paths run through torch on the deformed vertex tensor;
the source-side quantities are fixed constants captured once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.spatial import cKDTree

from .geometry import SurfaceMesh, corner_angles, local_area_distribution, triangle_areas

EDGE_FLOOR = 1e-9
KL_FLOOR = 1e-12


@dataclass
class LossConfig:
    chamfer_samples: int = 5000
    quality_threshold: float = 0.1
    lambda_before: float = 1.0
    lambda_after: float = 0.2
    lambda_switch_iter: int = 1000
    angle: bool = True
    area_kl: bool = True
    quality: bool = True
    chamfer: bool = True
    correspondence: bool = True

    def __post_init__(self):
        if self.chamfer_samples < 1:
            raise ValueError("chamfer_samples must be >= 1")
        if self.lambda_before <= 0 or self.lambda_after <= 0:
            raise ValueError("lambda must be positive")

    def lam(self, t):
        return self.lambda_before if t < self.lambda_switch_iter else self.lambda_after


@dataclass
class LossReport:
    iteration: int
    kind: str
    terms: dict
    total: float


def select_step_loss(t, cfg: LossConfig):
    """Alternation: even iterations backpropagate the distance loss, odd
    iterations the structural loss weighted by lambda(t)."""
    if t % 2 == 0:
        return "distance", 1.0
    return "structural", cfg.lam(t)


# ---------------------------------------------------------------------------
# plain point-set Chamfer (also used by the metrics module)


def chamfer(a, b):
    """Symmetric Chamfer: mean squared nearest-neighbor distance a->b plus
    mean squared b->a. Mean reduction keeps the value sample-count invariant."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer needs two non-empty point sets")
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float((da ** 2).mean() + (db ** 2).mean())


# ---------------------------------------------------------------------------
# source-side constants


class SourceStructure:
    """Fixed per-corner angles and per-vertex area distributions of the
    source mesh, flattened for vectorized loss evaluation."""

    def __init__(self, mesh: SurfaceMesh):
        self.triangles = torch.as_tensor(mesh.triangles)
        self.vertex_count = mesh.vertex_count
        self.ref_angles = torch.as_tensor(corner_angles(mesh))
        dist = local_area_distribution(mesh)
        inc_v, inc_t, p = [], [], []
        for vi, (ids, probs) in enumerate(zip(dist.face_ids, dist.probabilities)):
            inc_v.extend([vi] * len(ids))
            inc_t.extend(ids.tolist())
            p.extend(probs.tolist())
        self.inc_vertex = torch.as_tensor(np.asarray(inc_v, dtype=np.int64))
        self.inc_triangle = torch.as_tensor(np.asarray(inc_t, dtype=np.int64))
        self.p = torch.as_tensor(np.asarray(p, dtype=np.float64))
        self.log_p = torch.log(torch.clamp(self.p, min=KL_FLOOR))


def _tri_corners(vertices, triangles):
    return vertices[triangles]          # (M, 3, 3)


def _torch_angles(vertices, triangles):
    """Differentiable corner angles with an edge-length floor so degenerate
    corners stay finite."""
    p = _tri_corners(vertices, triangles)
    angles = []
    for c in range(3):
        a = p[:, (c + 1) % 3] - p[:, c]
        b = p[:, (c + 2) % 3] - p[:, c]
        cross = torch.linalg.cross(a, b)
        sin = torch.clamp(torch.linalg.norm(cross, dim=1), min=EDGE_FLOOR ** 2)
        cos = (a * b).sum(dim=1)
        angles.append(torch.atan2(sin, cos))
    return torch.stack(angles, dim=1)


def _torch_areas(vertices, triangles):
    p = _tri_corners(vertices, triangles)
    cross = torch.linalg.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return 0.5 * torch.linalg.norm(cross, dim=1)


def angle_term(src: SourceStructure, vertices):
    """Mean over vertices of summed squared corner-angle changes on the
    1-ring. Every corner of a face belongs to the rings of all three of its
    vertices, so each face's corners are counted three times."""
    cur = _torch_angles(vertices, src.triangles)
    sq = (cur - src.ref_angles) ** 2
    return 3.0 * sq.sum() / src.vertex_count


def area_kl_term(src: SourceStructure, vertices):
    """Mean per-vertex KL divergence between the fixed source local-area
    distribution and the current one (floored at 1e-12)."""
    areas = _torch_areas(vertices, src.triangles)
    sums = torch.zeros(src.vertex_count, dtype=areas.dtype)
    sums = sums.index_add(0, src.inc_vertex, areas[src.inc_triangle])
    q = areas[src.inc_triangle] / torch.clamp(sums[src.inc_vertex], min=KL_FLOOR)
    log_q = torch.log(torch.clamp(q, min=KL_FLOOR))
    kl = (src.p * (src.log_p - log_q)).sum()
    return kl / src.vertex_count


def quality_penalty(src_or_triangles, vertices, threshold=0.1):
    """Sum of (1 - Q_f) over view triangles whose quality falls below the
    threshold. Membership is decided on detached values; the gradient only
    flows through the penalized faces."""
    triangles = getattr(src_or_triangles, "triangles", src_or_triangles)
    triangles = torch.as_tensor(np.asarray(triangles))
    p = _tri_corners(vertices, triangles)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 1]
    e3 = p[:, 0] - p[:, 2]
    denom = (e1 * e1).sum(1) + (e2 * e2).sum(1) + (e3 * e3).sum(1)
    area = 0.5 * torch.linalg.norm(torch.linalg.cross(e1, -e3), dim=1)
    q = 4.0 * np.sqrt(3.0) * area / torch.clamp(denom, min=KL_FLOOR)
    mask = q.detach() < threshold
    if not torch.any(mask):
        return torch.zeros((), dtype=vertices.dtype)
    return (1.0 - q[mask]).sum()


def structural_loss(src: SourceStructure, vertices, cfg: LossConfig):
    """angle + area-KL + quality, honoring the per-term ablation toggles.
    Returns (total, components dict)."""
    zero = torch.zeros((), dtype=vertices.dtype)
    comps = {}
    total = zero
    if cfg.angle:
        comps["angle"] = angle_term(src, vertices)
        total = total + comps["angle"]
    if cfg.area_kl:
        comps["area_kl"] = area_kl_term(src, vertices)
        total = total + comps["area_kl"]
    if cfg.quality:
        comps["quality"] = quality_penalty(src, vertices, cfg.quality_threshold)
        total = total + comps["quality"]
    return total, comps


# ---------------------------------------------------------------------------
# distance loss


def chamfer_loss(vertices, triangles, tri_ids, bary, target_points):
    """Differentiable symmetric Chamfer between surface samples of the
    deformed mesh (fixed triangle ids + barycentric coordinates) and a fixed
    target point set. Nearest-neighbor pairing is frozen from detached
    positions; distances are recomputed differentiably."""
    corners = vertices[torch.as_tensor(np.asarray(triangles))[torch.as_tensor(tri_ids)]]
    bary_t = torch.as_tensor(bary)
    samples = (bary_t[:, :, None] * corners).sum(dim=1)
    tgt = np.asarray(target_points, dtype=np.float64)
    det = samples.detach().numpy()
    _, idx_ab = cKDTree(tgt).query(det)
    _, idx_ba = cKDTree(det).query(tgt)
    tgt_t = torch.as_tensor(tgt)
    d_ab = ((samples - tgt_t[idx_ab]) ** 2).sum(dim=1).mean()
    d_ba = ((tgt_t - samples[idx_ba]) ** 2).sum(dim=1).mean()
    return d_ab + d_ba


def correspondence_loss(vertices, source_ids, target_points):
    if len(source_ids) == 0:
        return torch.zeros((), dtype=vertices.dtype)
    ids = torch.as_tensor(np.asarray(source_ids, dtype=np.int64))
    tgt = torch.as_tensor(np.asarray(target_points, dtype=np.float64))
    return ((vertices[ids] - tgt) ** 2).sum()


def distance_loss(vertices, triangles, tri_ids, bary, target_points,
                  corr_ids, corr_targets, cfg: LossConfig):
    """Chamfer(sampled deformed surface, target points) plus the summed
    squared correspondence residuals."""
    comps = {}
    total = torch.zeros((), dtype=vertices.dtype)
    if cfg.chamfer:
        comps["chamfer"] = chamfer_loss(vertices, triangles, tri_ids, bary,
                                        target_points)
        total = total + comps["chamfer"]
    if cfg.correspondence:
        comps["correspondence"] = correspondence_loss(vertices, corr_ids,
                                                      corr_targets)
        total = total + comps["correspondence"]
    return total, comps

"""Initial deformation stage: correspondence handling, global affine fit,
biharmonic handle deformation and as-rigid-as-possible refinement.

The composition (affine -> biharmonic -> ARAP on rigid handles) produces the
starting point for the neural offset optimization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .geometry import GeometryError, SurfaceMesh, triangle_areas

COT_CLAMP = 1e4


class DeformError(ValueError):
    pass


@dataclass
class CorrespondenceSet:
    """User-marked (source vertex, target point) pairs, soft or rigid."""

    source_ids: np.ndarray
    target_points: np.ndarray
    kinds: list

    def __post_init__(self):
        self.source_ids = np.asarray(self.source_ids, dtype=np.int64).reshape(-1)
        self.target_points = np.asarray(self.target_points, dtype=np.float64).reshape(-1, 3)
        self.kinds = list(self.kinds)
        if len(self.source_ids) != len(set(self.source_ids.tolist())):
            raise DeformError("duplicate source vertex in correspondence set")
        for k in self.kinds:
            if k not in ("soft", "rigid"):
                raise DeformError(f"unknown correspondence kind {k!r}")

    def __len__(self):
        return len(self.source_ids)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 3)), [])

    def rigid_subset(self):
        mask = np.array([k == "rigid" for k in self.kinds], dtype=bool)
        return CorrespondenceSet(self.source_ids[mask], self.target_points[mask],
                                 [k for k in self.kinds if k == "rigid"])

    def snapped(self, target):
        """Targets replaced by their nearest point on the target shape."""
        pts = np.array([target.nearest_point(p)[0] for p in self.target_points]
                       ).reshape(-1, 3)
        return CorrespondenceSet(self.source_ids, pts, self.kinds)

    def transformed(self, tf):
        return CorrespondenceSet(self.source_ids, tf.apply(self.target_points),
                                 self.kinds)


def load_correspondences(path) -> CorrespondenceSet:
    """Reads either whitespace records `src tx ty tz [rigid]` or a JSON list
    of {source_vertex, target_point, kind} objects."""
    with open(path) as fh:
        text = fh.read()
    ids, pts, kinds = [], [], []
    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        doc = json.loads(text)
        if isinstance(doc, dict):
            doc = doc["pairs"]
        for rec in doc:
            ids.append(int(rec["source_vertex"]))
            pts.append([float(x) for x in rec["target_point"]])
            kinds.append(rec.get("kind", "soft"))
    else:
        for ln, line in enumerate(text.splitlines(), 1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if len(tok) not in (4, 5):
                raise DeformError(f"{path}:{ln}: expected `src tx ty tz [rigid]`")
            ids.append(int(tok[0]))
            pts.append([float(t) for t in tok[1:4]])
            kinds.append(tok[4] if len(tok) == 5 else "soft")
    return CorrespondenceSet(np.asarray(ids, dtype=np.int64),
                             np.asarray(pts, dtype=np.float64).reshape(-1, 3), kinds)


# ---------------------------------------------------------------------------
# global affine


def apply_affine(affine, points):
    """affine is 3x4 (linear | translation)."""
    return points @ affine[:, :3].T + affine[:, 3]


def estimate_global_affine(corr: CorrespondenceSet, source_vertices) -> np.ndarray:
    """Least-squares u ~ A v + t with graceful model-order degradation:
    full affine needs 4+ non-coplanar pairs, similarity 3+ non-collinear,
    otherwise a centroid translation (identity at k=0)."""
    k = len(corr)
    ident = np.hstack([np.eye(3), np.zeros((3, 1))])
    if k == 0:
        return ident
    v = np.asarray(source_vertices, dtype=np.float64)[corr.source_ids]
    u = corr.target_points
    vc, uc = v.mean(axis=0), u.mean(axis=0)
    sv = np.linalg.svd(v - vc, compute_uv=False) if k >= 3 else np.zeros(3)
    scale_ref = max(sv[0], 1.0) if k >= 3 else 1.0
    rank = int((sv > 1e-9 * scale_ref).sum())
    if k >= 4 and rank == 3:
        # full affine: rows of [A | t] from one lstsq per output coordinate
        design = np.hstack([v, np.ones((k, 1))])
        sol, *_ = np.linalg.lstsq(design, u, rcond=None)
        return sol.T
    if k >= 3 and rank >= 2:
        # similarity (Umeyama): rotation + uniform scale + translation
        cov = (u - uc).T @ (v - vc) / k
        U, D, Vt = np.linalg.svd(cov)
        S = np.eye(3)
        if np.linalg.det(U) * np.linalg.det(Vt) < 0:
            S[2, 2] = -1.0
        var_v = ((v - vc) ** 2).sum() / k
        c = np.trace(np.diag(D) @ S) / var_v
        R = U @ S @ Vt
        t = uc - c * R @ vc
        return np.hstack([c * R, t[:, None]])
    t = uc - vc
    return np.hstack([np.eye(3), t[:, None]])


# ---------------------------------------------------------------------------
# cotangent Laplacian and biharmonic solve


def cotangent_laplacian(mesh: SurfaceMesh) -> sp.csr_matrix:
    """Symmetric cotangent Laplacian with positive off-diagonal weights
    w_ij = (cot a_ij + cot b_ij)/2 and zero row sums. Cotangents are clamped
    to |cot| <= 1e4 for near-degenerate faces."""
    v, tris = mesh.vertices, mesh.triangles
    areas = triangle_areas(v, tris)
    bad = np.nonzero(areas <= 0.0)[0]
    if len(bad):
        raise DeformError(f"degenerate face in Laplacian (view triangle {bad[0]})")
    rows, cols, vals = [], [], []
    for c in range(3):
        i = tris[:, (c + 1) % 3]
        j = tris[:, (c + 2) % 3]
        o = tris[:, c]
        a = v[i] - v[o]
        b = v[j] - v[o]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        cot = np.clip(dot / np.maximum(cross, 1e-300), -COT_CLAMP, COT_CLAMP)
        w = 0.5 * cot
        rows.extend([i, j])
        cols.extend([j, i])
        vals.extend([w, w])
    n = mesh.vertex_count
    W = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    L = W - sp.diags(np.asarray(W.sum(axis=1)).ravel())
    return L.tocsr()


def _check_handle_coverage(adjacency, n, handle_ids, what):
    n_comp, labels = csgraph.connected_components(adjacency, directed=False)
    covered = set(labels[handle_ids])
    for comp in range(n_comp):
        if comp not in covered:
            member = int(np.nonzero(labels == comp)[0][0])
            raise DeformError(
                f"{what}: connected component containing vertex {member} "
                "has no handle; system is singular")


def _solve_constrained(K, n, fixed_ids, fixed_vals):
    """Solve K d = 0 with d[fixed] prescribed, by elimination."""
    free = np.setdiff1d(np.arange(n), fixed_ids)
    d = np.zeros((n, 3))
    d[fixed_ids] = fixed_vals
    if len(free):
        Kff = K[np.ix_(free, free)] if sp.issparse(K) is False else K[free][:, free]
        Kfc = K[free][:, fixed_ids]
        rhs = -Kfc @ fixed_vals
        solve = spla.factorized(sp.csc_matrix(Kff))
        for c in range(3):
            d[free, c] = solve(rhs[:, c])
    return d


def biharmonic_deform(mesh: SurfaceMesh, handles: CorrespondenceSet,
                      affine=None) -> SurfaceMesh:
    """Biharmonic displacement interpolation: solve L^2 d = 0 on the free
    vertices with d fixed to (u_i - affine(v_i)) at handles; the output is
    affine(mesh) + d, so handle vertices land exactly on their targets."""
    if len(handles) == 0:
        raise DeformError("biharmonic deformation needs at least one handle")
    if affine is None:
        affine = np.hstack([np.eye(3), np.zeros((3, 1))])
    base = apply_affine(affine, mesh.vertices)
    L = cotangent_laplacian(mesh)
    _check_handle_coverage(L, mesh.vertex_count, handles.source_ids, "biharmonic")
    K = (L @ L).tocsr()
    fixed_vals = handles.target_points - base[handles.source_ids]
    d = _solve_constrained(K, mesh.vertex_count, handles.source_ids, fixed_vals)
    return mesh.with_vertices(base + d)


# ---------------------------------------------------------------------------
# ARAP


def _edge_structure(mesh: SurfaceMesh):
    """Unique undirected edges of the triangulated view, uniform weights."""
    tris = mesh.triangles
    pairs = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    pairs.sort(axis=1)
    edges = np.unique(pairs, axis=0)
    return edges


def _uniform_laplacian(n, edges):
    i, j = edges[:, 0], edges[:, 1]
    ones = np.ones(len(edges))
    W = sp.coo_matrix((np.concatenate([ones, ones]),
                       (np.concatenate([i, j]), np.concatenate([j, i]))),
                      shape=(n, n)).tocsr()
    return sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W


def arap_energy(rest_vertices, vertices, edges, rotations):
    """Cell-based ARAP energy with uniform weights: each undirected edge is
    visited from both of its endpoint cells."""
    e = 0.0
    for a, b in ((0, 1), (1, 0)):
        i, j = edges[:, a], edges[:, b]
        rot = rotations[i]
        rest = rest_vertices[i] - rest_vertices[j]
        cur = vertices[i] - vertices[j]
        diff = cur - np.einsum("nij,nj->ni", rot, rest)
        e += (diff * diff).sum()
    return float(e)


def _fit_rotations(rest_vertices, vertices, n, edges):
    cov = np.zeros((n, 3, 3))
    for a, b in ((0, 1), (1, 0)):
        i, j = edges[:, a], edges[:, b]
        rest = rest_vertices[i] - rest_vertices[j]
        cur = vertices[i] - vertices[j]
        contrib = rest[:, :, None] * cur[:, None, :]
        np.add.at(cov, i, contrib)
    U, _, Vt = np.linalg.svd(cov)
    R = np.einsum("nji,nkj->nik", Vt, U)       # V @ U^T per cell
    dets = np.linalg.det(R)
    flip = dets < 0
    if np.any(flip):
        Vt2 = Vt[flip].copy()
        Vt2[:, 2, :] *= -1.0
        R[flip] = np.einsum("nji,nkj->nik", Vt2, U[flip])
    return R


def arap_deform(mesh: SurfaceMesh, rigid_handles: CorrespondenceSet,
                iterations=20, initial_vertices=None, return_energy=False):
    """Local-global as-rigid-as-possible solve with the rigid pairs as hard
    constraints. Uniform cell weights on the triangulated view; the energy
    is non-increasing across iterations by construction."""
    if len(rigid_handles) == 0:
        raise DeformError("ARAP needs at least one rigid handle")
    if iterations < 1:
        raise DeformError("ARAP needs at least one iteration")
    n = mesh.vertex_count
    edges = _edge_structure(mesh)
    L = _uniform_laplacian(n, edges)
    _check_handle_coverage(L, n, rigid_handles.source_ids, "ARAP")
    fixed = rigid_handles.source_ids
    free = np.setdiff1d(np.arange(n), fixed)
    if initial_vertices is None:
        affine = estimate_global_affine(rigid_handles, mesh.vertices)
        cur = apply_affine(affine, mesh.vertices)
    else:
        cur = np.array(initial_vertices, dtype=np.float64)
    cur = cur.copy()
    cur[fixed] = rigid_handles.target_points

    solve = spla.factorized(sp.csc_matrix(L[free][:, free])) if len(free) else None
    Lfc = L[free][:, fixed] if len(free) else None
    rest = mesh.vertices
    energies = []
    for _ in range(iterations):
        R = _fit_rotations(rest, cur, n, edges)
        energies.append(arap_energy(rest, cur, edges, R))
        if len(free):
            # rhs_i = sum_j w/2 (R_i + R_j)(p_i - p_j) over neighbors j
            b = np.zeros((n, 3))
            for a2, b2 in ((0, 1), (1, 0)):
                i, j = edges[:, a2], edges[:, b2]
                rot = 0.5 * (R[i] + R[j])
                contrib = np.einsum("nij,nj->ni", rot, rest[i] - rest[j])
                np.add.at(b, i, contrib)
            rhs = b[free] - Lfc @ cur[fixed]
            for c in range(3):
                cur[free, c] = solve(rhs[:, c])
    R = _fit_rotations(rest, cur, n, edges)
    energies.append(arap_energy(rest, cur, edges, R))
    out = mesh.with_vertices(cur)
    if return_energy:
        return out, energies
    return out


# ---------------------------------------------------------------------------
# composition


def initial_deformation(mesh: SurfaceMesh, target, corr: CorrespondenceSet,
                        arap_iterations=20) -> SurfaceMesh:
    """Affine alignment + biharmonic on all pairs + ARAP on rigid pairs.
    With no correspondences this is the identity."""
    if len(corr) == 0:
        return mesh.copy()
    affine = estimate_global_affine(corr, mesh.vertices)
    out = biharmonic_deform(mesh, corr, affine=affine)
    rigid = corr.rigid_subset()
    if len(rigid):
        out = arap_deform(mesh, rigid, iterations=arap_iterations,
                          initial_vertices=out.vertices)
    return out

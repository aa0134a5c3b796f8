"""Mesh / point-cloud containers, I/O, normalization, sampling and
per-element quantities (angles, areas, face quality, Dirichlet distortion).

Vertex order is meaningful everywhere: vertex ids are the namespace used
by correspondence points, so loaders never reorder or weld vertices.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# core containers


class SurfaceMesh:
    """Vertex positions plus polygonal (tri/quad) faces.

    Quads are kept in the face list untouched; a triangulated view (fixed
    diagonal from the lowest-index vertex of the quad) is derived lazily for
    everything that needs triangles. Manifoldness is not required.
    """

    def __init__(self, vertices, faces):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = [tuple(int(i) for i in f) for f in faces]
        n = len(self.vertices)
        for fi, f in enumerate(self.faces):
            if len(f) not in (3, 4):
                raise GeometryError(f"face {fi} has {len(f)} vertices (3 or 4 required)")
            if len(set(f)) != len(f):
                raise GeometryError(f"face {fi} has repeated vertex indices {f}")
            for idx in f:
                if idx < 0 or idx >= n:
                    raise GeometryError(f"face {fi} references vertex {idx} of {n}")
        self._tris = None
        self._tri_face = None

    @property
    def vertex_count(self):
        return len(self.vertices)

    @property
    def triangles(self):
        """(M, 3) int array: triangulated view of the face list."""
        if self._tris is None:
            self._build_triangulation()
        return self._tris

    @property
    def triangle_face_ids(self):
        """(M,) id of the polygonal face each view triangle came from."""
        if self._tri_face is None:
            self._build_triangulation()
        return self._tri_face

    def _build_triangulation(self):
        tris, owner = [], []
        for fi, f in enumerate(self.faces):
            if len(f) == 3:
                tris.append(f)
                owner.append(fi)
            else:
                # rotate so the lowest vertex id leads, split along (f0, f2)
                p = int(np.argmin(f))
                q = (f[p], f[(p + 1) % 4], f[(p + 2) % 4], f[(p + 3) % 4])
                tris.append((q[0], q[1], q[2]))
                tris.append((q[0], q[2], q[3]))
                owner.extend((fi, fi))
        self._tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
        self._tri_face = np.asarray(owner, dtype=np.int64)

    def with_vertices(self, vertices):
        """Same connectivity, new positions."""
        m = SurfaceMesh(vertices, self.faces)
        return m

    def copy(self):
        return self.with_vertices(self.vertices.copy())


@dataclass
class PointSet:
    points: np.ndarray
    face_ids: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise GeometryError("non-finite coordinates in point set")


@dataclass
class NormalizationTransform:
    """p -> scale * p + translation (uniform scale, aspect preserving)."""

    scale: float
    translation: np.ndarray

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) * self.scale + self.translation

    def invert(self, points):
        return (np.asarray(points, dtype=np.float64) - self.translation) / self.scale

    @classmethod
    def identity(cls):
        return cls(1.0, np.zeros(3))


class TargetShape:
    """Sampleable, nearest-point-queryable wrapper for the transfer target.

    variant is one of 'mesh', 'polygon_soup', 'point_cloud'. Nearest-point
    queries run against a canonical point set: the cloud itself, or a dense
    area-weighted surface sample plus all vertices for meshes/soups.
    """

    DENSE_SAMPLE_COUNT = 100_000

    def __init__(self, variant, mesh=None, points=None,
                 dense_count=DENSE_SAMPLE_COUNT, seed=0):
        self.variant = variant
        self.mesh = mesh
        if variant == "point_cloud":
            pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
            if len(pts) == 0:
                raise GeometryError("empty point cloud")
            self.canonical_points = pts
        elif variant in ("mesh", "polygon_soup"):
            if mesh is None or len(mesh.faces) == 0:
                raise GeometryError("empty target geometry")
            sample = sample_surface(mesh, dense_count, seed=seed)
            self.canonical_points = np.vstack([sample.points, mesh.vertices])
        else:
            raise GeometryError(f"unknown target variant {variant!r}")
        self._tree = cKDTree(self.canonical_points)

    def nearest_point(self, q):
        """Exact nearest member of the canonical point set."""
        q = np.asarray(q, dtype=np.float64)
        d, i = self._tree.query(q)
        return self.canonical_points[i], d

    def sample_points(self, n, rng):
        """n representative points: surface samples for meshes/soups,
        a (sub)set of the cloud otherwise."""
        if self.variant == "point_cloud":
            pts = self.canonical_points
            if len(pts) <= n:
                return pts
            idx = rng.choice(len(pts), size=n, replace=False)
            return pts[idx]
        return sample_surface(self.mesh, n, rng=rng).points

    def transformed(self, tf: NormalizationTransform):
        """Apply a normalization transform, rebuilding nothing from scratch."""
        if self.variant == "point_cloud":
            out = TargetShape("point_cloud", points=tf.apply(self.canonical_points))
            return out
        out = object.__new__(TargetShape)
        out.variant = self.variant
        out.mesh = self.mesh.with_vertices(tf.apply(self.mesh.vertices))
        out.canonical_points = tf.apply(self.canonical_points)
        out._tree = cKDTree(out.canonical_points)
        return out


@dataclass
class LocalAreaDistribution:
    """Per-vertex normalized incident-triangle areas (each sums to 1)."""

    face_ids: list          # per vertex: int array of incident view-triangle ids
    probabilities: list     # per vertex: float array, sums to 1
    degenerate: set = field(default_factory=set)


# ---------------------------------------------------------------------------
# I/O


def _parse_records(path):
    verts, faces, bare = [], [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) for t in tok[1:]]
                if any(i < 1 for i in idx):
                    raise GeometryError(f"{path}:{ln}: non-positive face index")
                faces.append([i - 1 for i in idx])
            elif tok[0] in ("vn", "vt", "o", "g", "s", "mtllib", "usemtl", "l"):
                continue
            else:
                try:
                    bare.append([float(t) for t in tok[:3]])
                except ValueError as exc:
                    raise GeometryError(f"{path}:{ln}: unparseable record {tok[0]!r}") from exc
    if verts and bare:
        raise GeometryError(f"{path}: mixes 'v' records with bare coordinate lines")
    return (verts or bare), faces, bool(bare)


def load_mesh(path) -> SurfaceMesh:
    verts, faces, _ = _parse_records(path)
    if not faces:
        raise GeometryError(f"{path}: no faces (use load_target for point clouds)")
    try:
        return SurfaceMesh(verts, faces)
    except GeometryError as exc:
        raise GeometryError(f"{path}: {exc}") from exc


def load_target(path) -> TargetShape:
    verts, faces, _ = _parse_records(path)
    if len(verts) == 0:
        raise GeometryError(f"{path}: empty geometry")
    if not faces:
        return TargetShape("point_cloud", points=verts)
    mesh = SurfaceMesh(verts, faces)
    # a "soup" is a face set with no shared vertices at all; no welding is done
    used = [i for f in mesh.faces for i in f]
    variant = "polygon_soup" if len(used) == len(set(used)) else "mesh"
    return TargetShape(variant, mesh=mesh)


def save_mesh(mesh: SurfaceMesh, path):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write("f " + " ".join(str(i + 1) for i in f) + "\n")


# ---------------------------------------------------------------------------
# normalization


def normalization_to_unit_cube(points) -> NormalizationTransform:
    points = np.asarray(points, dtype=np.float64)
    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = hi - lo
    longest = extent.max()
    if longest <= 0.0:
        raise GeometryError("degenerate bounding box: all points coincide")
    s = 1.0 / longest
    # scale into [0,1] on the longest axis, center the others
    t = -lo * s + (1.0 - extent * s) / 2.0
    return NormalizationTransform(s, t)


def normalize_to_unit_cube(shape):
    """Returns (shape', transform) with the bounding box fit inside [0,1]^3,
    longest axis spanning exactly 1, uniform scale."""
    if isinstance(shape, SurfaceMesh):
        tf = normalization_to_unit_cube(shape.vertices)
        return shape.with_vertices(tf.apply(shape.vertices)), tf
    if isinstance(shape, TargetShape):
        pts = shape.mesh.vertices if shape.mesh is not None else shape.canonical_points
        tf = normalization_to_unit_cube(pts)
        return shape.transformed(tf), tf
    if isinstance(shape, PointSet):
        tf = normalization_to_unit_cube(shape.points)
        return PointSet(tf.apply(shape.points), shape.face_ids), tf
    pts = np.asarray(shape, dtype=np.float64)
    tf = normalization_to_unit_cube(pts)
    return tf.apply(pts), tf


# ---------------------------------------------------------------------------
# sampling and queries


def triangle_areas(vertices, triangles):
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    return 0.5 * np.linalg.norm(cross, axis=1)


def sample_barycentric(mesh: SurfaceMesh, n, rng, areas=None):
    """Area-weighted triangle choice + uniform barycentric coordinates.

    Returns (tri_ids (n,), bary (n,3)). The square-root trick gives the
    uniform in-triangle distribution.
    """
    tris = mesh.triangles
    if areas is None:
        areas = triangle_areas(mesh.vertices, tris)
    total = areas.sum()
    if total <= 0.0:
        raise GeometryError("zero total surface area")
    cum = np.cumsum(areas)
    tri_ids = np.searchsorted(cum, rng.random(n) * total)
    tri_ids = np.minimum(tri_ids, len(tris) - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    return tri_ids, bary


def sample_surface(mesh: SurfaceMesh, n, seed=None, rng=None) -> PointSet:
    """n uniform area-weighted surface samples; deterministic for a fixed seed."""
    if n < 1:
        raise GeometryError("sample count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    tri_ids, bary = sample_barycentric(mesh, n, rng)
    corners = mesh.vertices[mesh.triangles[tri_ids]]         # (n, 3, 3)
    pts = np.einsum("nc,ncd->nd", bary, corners)
    return PointSet(pts, mesh.triangle_face_ids[tri_ids])


def nearest_point(target: TargetShape, q):
    return target.nearest_point(q)


# ---------------------------------------------------------------------------
# per-element quantities


def corner_angles(mesh_or_vertices, triangles=None):
    """(M, 3) interior angles in radians of the triangulated view;
    corners of degenerate (zero-length-edge) triangles come back NaN.

    The table is indexed purely by connectivity, so corner (i, j) of the
    source and of a deformed copy correspond.
    """
    if triangles is None:
        v, t = mesh_or_vertices.vertices, mesh_or_vertices.triangles
    else:
        v = np.asarray(mesh_or_vertices, dtype=np.float64)
        t = np.asarray(triangles, dtype=np.int64)
    p = v[t]                                                  # (M, 3, 3)
    out = np.empty((len(t), 3))
    for c in range(3):
        a = p[:, (c + 1) % 3] - p[:, c]
        b = p[:, (c + 2) % 3] - p[:, c]
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        bad = (na == 0.0) | (nb == 0.0)
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        ang = np.arctan2(cross, dot)
        ang[bad] = np.nan
        out[:, c] = ang
    return out


def local_area_distribution(mesh: SurfaceMesh) -> LocalAreaDistribution:
    tris = mesh.triangles
    areas = triangle_areas(mesh.vertices, tris)
    incident = [[] for _ in range(mesh.vertex_count)]
    for ti, tri in enumerate(tris):
        for vi in tri:
            incident[vi].append(ti)
    face_ids, probs, degenerate = [], [], set()
    for vi, ids in enumerate(incident):
        ids = np.asarray(ids, dtype=np.int64)
        a = areas[ids]
        s = a.sum()
        if len(ids) and s <= 0.0:
            degenerate.add(vi)
            p = np.full(len(ids), 1.0 / len(ids))
        elif len(ids):
            p = a / s
        else:
            p = np.zeros(0)
        face_ids.append(ids)
        probs.append(p)
    return LocalAreaDistribution(face_ids, probs, degenerate)


def face_quality(p0, p1, p2=None):
    """Triangle quality 4*sqrt(3)*A / (|e1|^2+|e2|^2+|e3|^2); 1 iff
    equilateral, 0 iff degenerate."""
    if p2 is None:  # called with a (3,3) array
        p0, p1, p2 = np.asarray(p0, dtype=np.float64)
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    e = np.array([p1 - p0, p2 - p1, p0 - p2])
    denom = (e * e).sum()
    if denom <= 0.0:
        return 0.0
    area = 0.5 * np.linalg.norm(np.cross(e[0], -e[2]))
    return float(4.0 * np.sqrt(3.0) * area / denom)


def face_qualities(vertices, triangles):
    """Vectorized face_quality over the triangulated view."""
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    e1 = v[t[:, 1]] - v[t[:, 0]]
    e2 = v[t[:, 2]] - v[t[:, 1]]
    e3 = v[t[:, 0]] - v[t[:, 2]]
    denom = (e1 * e1).sum(1) + (e2 * e2).sum(1) + (e3 * e3).sum(1)
    area = 0.5 * np.linalg.norm(np.cross(e1, -e3), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(denom > 0.0, 4.0 * np.sqrt(3.0) * area / np.maximum(denom, 1e-300), 0.0)
    return q


def _frame_coords(v, tris):
    """Per-triangle 2x2 edge matrix in an orthonormal in-plane frame."""
    e1 = v[tris[:, 1]] - v[tris[:, 0]]
    e2 = v[tris[:, 2]] - v[tris[:, 0]]
    n1 = np.linalg.norm(e1, axis=1)
    if np.any(n1 == 0.0):
        raise GeometryError("degenerate face (zero-length edge)")
    x = e1 / n1[:, None]
    y = e2 - np.einsum("ij,ij->i", e2, x)[:, None] * x
    ny = np.linalg.norm(y, axis=1)
    if np.any(ny == 0.0):
        raise GeometryError("degenerate face (zero area)")
    y = y / ny[:, None]
    m = np.zeros((len(tris), 2, 2))
    m[:, 0, 0] = n1
    m[:, 0, 1] = np.einsum("ij,ij->i", e2, x)
    m[:, 1, 1] = np.einsum("ij,ij->i", e2, y)
    return m


def dirichlet_energy_density(source: SurfaceMesh, deformed: SurfaceMesh):
    """Area-weighted mean of ||J_f||_F^2 over source faces, where J_f maps
    source face f (in its orthonormal frame) to its image in the deformed
    mesh. Identity map gives 2."""
    if source.faces != deformed.faces:
        raise GeometryError("meshes have different connectivity")
    tris = source.triangles
    s = _frame_coords(source.vertices, tris)
    d = _frame_coords(deformed.vertices, tris)
    areas = triangle_areas(source.vertices, tris)
    if np.any(areas <= 0.0):
        raise GeometryError("degenerate source face")
    jac = d @ np.linalg.inv(s)
    fro2 = (jac * jac).sum(axis=(1, 2))
    return float((fro2 * areas).sum() / areas.sum())


def dirichlet_distortion(source: SurfaceMesh, deformed: SurfaceMesh):
    """Unit-subtracted, area-normalized Dirichlet energy: 0 for any rigid
    motion, 3 for a uniform scale by 2."""
    return dirichlet_energy_density(source, deformed) / 2.0 - 1.0

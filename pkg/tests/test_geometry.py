import numpy as np
import pytest
from scipy.stats import chisquare

from meshdrape.geometry import (GeometryError, SurfaceMesh, TargetShape,
                                corner_angles, dirichlet_distortion,
                                face_qualities, face_quality, load_mesh,
                                load_target, local_area_distribution,
                                normalize_to_unit_cube, sample_surface,
                                save_mesh)
from meshdrape.shapes import flat_grid, icosphere

EQUILATERAL = np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- loading -----------------------------------------------------------------

def test_load_single_triangle(tmp_path):
    p = write(tmp_path, "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    m = load_mesh(p)
    assert m.vertex_count == 3
    assert m.faces == [(0, 1, 2)]


def test_load_quad_triangulation(tmp_path):
    p = write(tmp_path, "q.obj",
              "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    m = load_mesh(p)
    assert m.faces == [(0, 1, 2, 3)]
    tris = [tuple(t) for t in m.triangles]
    # fixed diagonal from the lowest-index vertex: (v0, v2)
    assert tris == [(0, 1, 2), (0, 2, 3)]


def test_quad_rotated_still_splits_at_lowest_vertex():
    m = SurfaceMesh(np.eye(4, 3, k=-1) + [[0, 0, 0]] * 4, [(2, 3, 0, 1)])
    tris = [tuple(t) for t in m.triangles]
    assert tris == [(0, 1, 2), (0, 2, 3)]


def test_load_out_of_range_face(tmp_path):
    p = write(tmp_path, "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 10\n")
    with pytest.raises(GeometryError):
        load_mesh(p)


def test_load_pentagon_rejected(tmp_path):
    p = write(tmp_path, "p.obj",
              "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv -1 0.5 0\nf 1 2 3 4 5\n")
    with pytest.raises(GeometryError):
        load_mesh(p)


def test_load_target_point_cloud(tmp_path):
    lines = "\n".join(f"v {x} {x} 0" for x in np.linspace(0, 1, 100))
    t = load_target(write(tmp_path, "c.xyz", lines))
    assert t.variant == "point_cloud"
    assert len(t.canonical_points) == 100


def test_load_target_bare_coordinates(tmp_path):
    t = load_target(write(tmp_path, "c.txt", "0 0 0\n1 0 0\n2 0 0\n"))
    assert t.variant == "point_cloud"


def test_load_target_soup_stays_soup(tmp_path):
    # two triangles with duplicated (unwelded) vertices
    text = ("v 0 0 0\nv 1 0 0\nv 0 1 0\n"
            "v 0 0 0\nv 1 0 0\nv 0 0 1\n"
            "f 1 2 3\nf 4 5 6\n")
    t = load_target(write(tmp_path, "s.obj", text))
    assert t.variant == "polygon_soup"
    assert t.mesh.vertex_count == 6


def test_load_target_mesh_variant(tmp_path):
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 4 3\n"
    t = load_target(write(tmp_path, "m.obj", text))
    assert t.variant == "mesh"
    _, d = t.nearest_point([0, 0, 0])
    assert d == 0.0


def test_load_target_empty(tmp_path):
    with pytest.raises(GeometryError):
        load_target(write(tmp_path, "e.obj", "# nothing\n"))


def test_save_load_roundtrip(tmp_path):
    m = icosphere(1)
    save_mesh(m, tmp_path / "s.obj")
    m2 = load_mesh(tmp_path / "s.obj")
    assert np.array_equal(m.vertices, m2.vertices)
    assert m.faces == m2.faces


# -- normalization -----------------------------------------------------------

def test_normalize_two_points():
    pts, tf = normalize_to_unit_cube(np.array([[0.0, 0, 0], [2, 0, 0]]))
    assert np.allclose(pts, [[0, 0.5, 0.5], [1, 0.5, 0.5]])
    assert tf.scale == 0.5


def test_normalize_already_normalized():
    base = np.array([[0.0, 0.5, 0.5], [1.0, 0.5, 0.5], [0.5, 0.5, 0.5]])
    pts, tf = normalize_to_unit_cube(base)
    assert np.allclose(pts, base)
    assert np.isclose(tf.scale, 1.0)


def test_normalize_degenerate():
    with pytest.raises(GeometryError):
        normalize_to_unit_cube(np.zeros((4, 3)))


def test_normalize_idempotent():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(50, 3)) * [3, 1, 0.2] + 5
    once, _ = normalize_to_unit_cube(pts)
    twice, _ = normalize_to_unit_cube(once)
    assert np.allclose(once, twice, atol=1e-9)


def test_normalize_transform_roundtrip():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(20, 3))
    out, tf = normalize_to_unit_cube(pts)
    assert np.allclose(tf.invert(out), pts, atol=1e-9)


# -- sampling ----------------------------------------------------------------

def test_sample_inside_triangle():
    m = SurfaceMesh(EQUILATERAL, [(0, 1, 2)])
    ps = sample_surface(m, 1000, seed=0)
    # all samples in the plane, inside the triangle (barycentric >= 0)
    assert np.allclose(ps.points[:, 2], 0)
    a, b, c = EQUILATERAL
    T = np.stack([b - a, c - a], axis=1)[:2, :]
    bary = np.linalg.solve(T, (ps.points[:, :2] - a[:2]).T).T
    assert bary.min() >= -1e-12 and (bary.sum(1) <= 1 + 1e-12).all()


def test_sample_area_proportional():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [2, 0, 0], [5, 0, 0], [2, 2, 0]])
    m = SurfaceMesh(verts, [(0, 1, 2), (3, 4, 5)])  # areas 1 and 3
    ps = sample_surface(m, 40000, seed=1)
    frac = (ps.face_ids == 1).mean()
    assert abs(frac - 0.75) < 0.02


def test_sample_deterministic():
    m = icosphere(1)
    a = sample_surface(m, 500, seed=7)
    b = sample_surface(m, 500, seed=7)
    assert np.array_equal(a.points, b.points)


def test_sample_frequencies_chi_square():
    m = icosphere(2)
    from meshdrape.geometry import triangle_areas
    areas = triangle_areas(m.vertices, m.triangles)
    ps = sample_surface(m, 40000, seed=2)
    counts = np.bincount(ps.face_ids, minlength=len(m.faces))
    expected = areas / areas.sum() * 40000
    _, pval = chisquare(counts, expected)
    assert pval > 0.01


# -- nearest point -----------------------------------------------------------

def test_nearest_point_member_and_midpoint():
    t = TargetShape("point_cloud", points=[[0, 0, 0], [1, 0, 0]])
    p, d = t.nearest_point([0.4, 0, 0])
    assert np.allclose(p, [0, 0, 0]) and np.isclose(d, 0.4)
    _, d0 = t.nearest_point([1, 0, 0])
    assert d0 == 0.0


def test_nearest_point_matches_brute_force():
    rng = np.random.default_rng(5)
    cloud = rng.normal(size=(300, 3))
    t = TargetShape("point_cloud", points=cloud)
    for q in rng.normal(size=(1000, 3)):
        p, d = t.nearest_point(q)
        brute = np.linalg.norm(cloud - q, axis=1)
        assert np.isclose(d, brute.min())
        assert np.allclose(p, cloud[brute.argmin()])


# -- angles, areas, quality --------------------------------------------------

def test_corner_angles_equilateral():
    m = SurfaceMesh(EQUILATERAL, [(0, 1, 2)])
    assert np.allclose(corner_angles(m), np.pi / 3)


def test_corner_angles_right_triangle():
    m = SurfaceMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [(0, 1, 2)])
    assert np.allclose(corner_angles(m)[0], [np.pi / 2, np.pi / 4, np.pi / 4])


def test_corner_angles_sum_to_pi():
    m = icosphere(2)
    rng = np.random.default_rng(0)
    m = m.with_vertices(m.vertices + 0.05 * rng.normal(size=m.vertices.shape))
    assert np.allclose(corner_angles(m).sum(axis=1), np.pi, atol=1e-9)


def test_corner_angles_degenerate_flagged():
    m = SurfaceMesh([[0, 0, 0], [0, 0, 0.0], [0, 1, 0]], [(0, 1, 2)])
    m.vertices[1] = m.vertices[0]  # zero-length edge
    assert np.isnan(corner_angles(m.vertices, m.triangles)).any()


def test_local_area_distribution_values():
    # four equal triangles around vertex 0
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
    m = SurfaceMesh(verts, [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 1)])
    dist = local_area_distribution(m)
    assert np.allclose(dist.probabilities[0], 0.25)


def test_local_area_distribution_ratio():
    # vertex 0 touches triangles with areas 1 and 3
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [-3, 0, 0], [0, -2, 0]])
    m = SurfaceMesh(verts, [(0, 1, 2), (0, 3, 4)])
    dist = local_area_distribution(m)
    assert np.allclose(sorted(dist.probabilities[0]), [0.25, 0.75])


def test_local_area_distribution_sums():
    m = icosphere(2)
    dist = local_area_distribution(m)
    for p in dist.probabilities:
        assert np.isclose(p.sum(), 1.0, atol=1e-9)


def test_face_quality_values():
    assert np.isclose(face_quality(*(EQUILATERAL * 3.7)), 1.0)
    assert face_quality([0, 0, 0], [1, 0, 0], [2, 0, 0]) == 0.0
    assert np.isclose(face_quality([0, 0, 0], [1, 0, 0], [0, 1, 0]),
                      np.sqrt(3) / 2, atol=1e-6)


def test_face_quality_range():
    rng = np.random.default_rng(6)
    tris = rng.normal(size=(200, 3, 3))
    q = face_qualities(tris.reshape(-1, 3), np.arange(600).reshape(-1, 3))
    assert (q >= 0).all() and (q <= 1 + 1e-12).all()


# -- Dirichlet distortion ----------------------------------------------------

def test_dirichlet_identity_and_scale():
    m = icosphere(1)
    assert np.isclose(dirichlet_distortion(m, m), 0.0)
    assert np.isclose(dirichlet_distortion(m, m.with_vertices(2 * m.vertices)),
                      3.0, atol=1e-9)


def test_dirichlet_rigid_invariance():
    m = icosphere(1)
    rng = np.random.default_rng(8)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    moved = m.with_vertices(m.vertices @ q.T + [1, -2, 3])
    assert abs(dirichlet_distortion(m, moved)) < 1e-9
    # common rescale of both meshes changes nothing
    d1 = dirichlet_distortion(m, moved)
    d2 = dirichlet_distortion(m.with_vertices(m.vertices * 3.3),
                              moved.with_vertices(moved.vertices * 3.3))
    assert abs(d1 - d2) < 1e-9


def test_dirichlet_connectivity_mismatch():
    with pytest.raises(GeometryError):
        dirichlet_distortion(icosphere(1), icosphere(2))

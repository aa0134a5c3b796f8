"""Synthetic shape generators used by tests, demos and the CLI examples."""

from __future__ import annotations

import numpy as np

from .geometry import SurfaceMesh


def icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return verts, faces


def icosphere(subdivisions=3, radius=1.0) -> SurfaceMesh:
    """Geodesic sphere: 12, 42, 162, 642, 2562, ... vertices."""
    verts, faces = icosahedron()
    verts = list(verts)
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces
    return SurfaceMesh(np.asarray(verts) * radius, faces)


def ellipsoid(subdivisions=3, axes=(1.0, 0.7, 0.5)) -> SurfaceMesh:
    sphere = icosphere(subdivisions)
    return sphere.with_vertices(sphere.vertices * np.asarray(axes))


def bumpy_ellipsoid(subdivisions=3, axes=(1.0, 0.7, 0.5), bump_amp=0.08,
                    bump_freq=4.0) -> SurfaceMesh:
    """Ellipsoid with a radial high-frequency bump field; used to probe how
    well an optimization fits fine detail."""
    sphere = icosphere(subdivisions)
    v = sphere.vertices
    r = 1.0 + bump_amp * (np.sin(bump_freq * np.pi * v[:, 0])
                          * np.sin(bump_freq * np.pi * v[:, 1])
                          * np.cos(bump_freq * np.pi * v[:, 2]))
    return sphere.with_vertices(v * r[:, None] * np.asarray(axes))


def flat_grid(nx=5, ny=5, scale=1.0) -> SurfaceMesh:
    """Regular triangulated grid in the z=0 plane (right-isoceles split)."""
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    verts = np.stack([xs.ravel() * scale, ys.ravel() * scale,
                      np.zeros(nx * ny)], axis=1)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            faces += [(a, b, b + 1), (a, b + 1, a + 1)]
    return SurfaceMesh(verts, faces)


def bar(nx=12, ny=3, nz=3, scale=0.25) -> SurfaceMesh:
    """Surface of an axis-aligned box of (nx, ny, nz) cells; a simple bar
    for deformation tests."""
    idx = {}
    verts = []

    def vid(i, j, k):
        key = (i, j, k)
        if key not in idx:
            idx[key] = len(verts)
            verts.append((i * scale, j * scale, k * scale))
        return idx[key]

    faces = []

    def quad(a, b, c, d):
        faces.extend([(a, b, c), (a, c, d)])

    for i in range(nx):
        for j in range(ny):
            quad(vid(i, j, 0), vid(i, j + 1, 0), vid(i + 1, j + 1, 0), vid(i + 1, j, 0))
            quad(vid(i, j, nz), vid(i + 1, j, nz), vid(i + 1, j + 1, nz), vid(i, j + 1, nz))
        for k in range(nz):
            quad(vid(i, 0, k), vid(i + 1, 0, k), vid(i + 1, 0, k + 1), vid(i, 0, k + 1))
            quad(vid(i, ny, k), vid(i, ny, k + 1), vid(i + 1, ny, k + 1), vid(i + 1, ny, k))
    for j in range(ny):
        for k in range(nz):
            quad(vid(0, j, k), vid(0, j, k + 1), vid(0, j + 1, k + 1), vid(0, j + 1, k))
            quad(vid(nx, j, k), vid(nx, j + 1, k), vid(nx, j + 1, k + 1), vid(nx, j, k + 1))
    return SurfaceMesh(np.asarray(verts), faces)

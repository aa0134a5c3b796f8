// Pure picking math, independent of the renderer: build a ray from
// normalized device coordinates and a camera description, intersect it
// with triangles, snap to vertices or cloud points.

import { Geometry, vertex, vertexCount } from './objFormat'

export type Vec3 = [number, number, number]

export type CameraDesc = {
  position: Vec3
  // orthonormal view basis: right, up, forward (forward points into the scene)
  right: Vec3
  up: Vec3
  forward: Vec3
  fovYDegrees: number
  aspect: number
}

export type Ray = { origin: Vec3; dir: Vec3 }

const sub = (a: Vec3, b: Vec3): Vec3 => [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
const add = (a: Vec3, b: Vec3): Vec3 => [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
const scale = (a: Vec3, s: number): Vec3 => [a[0] * s, a[1] * s, a[2] * s]
const dot = (a: Vec3, b: Vec3): number => a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
const cross = (a: Vec3, b: Vec3): Vec3 => [
  a[1] * b[2] - a[2] * b[1],
  a[2] * b[0] - a[0] * b[2],
  a[0] * b[1] - a[1] * b[0],
]
const norm = (a: Vec3): number => Math.sqrt(dot(a, a))
const normalize = (a: Vec3): Vec3 => scale(a, 1 / norm(a))

export function rayFromNdc(cam: CameraDesc, ndcX: number, ndcY: number): Ray {
  const tanY = Math.tan((cam.fovYDegrees * Math.PI) / 360)
  const dir = normalize(
    add(
      add(scale(cam.right, ndcX * tanY * cam.aspect), scale(cam.up, ndcY * tanY)),
      cam.forward,
    ),
  )
  return { origin: cam.position, dir }
}

/** Möller–Trumbore; returns the ray parameter t or null. */
export function rayTriangle(ray: Ray, a: Vec3, b: Vec3, c: Vec3): number | null {
  const EPS = 1e-12
  const e1 = sub(b, a)
  const e2 = sub(c, a)
  const p = cross(ray.dir, e2)
  const det = dot(e1, p)
  if (Math.abs(det) < EPS) return null
  const inv = 1 / det
  const s = sub(ray.origin, a)
  const u = dot(s, p) * inv
  if (u < -EPS || u > 1 + EPS) return null
  const q = cross(s, e1)
  const v = dot(ray.dir, q) * inv
  if (v < -EPS || u + v > 1 + EPS) return null
  const t = dot(e2, q) * inv
  return t > EPS ? t : null
}

function triangulated(faces: number[][]): [number, number, number][] {
  const tris: [number, number, number][] = []
  for (const f of faces) {
    if (f.length === 3) tris.push([f[0], f[1], f[2]])
    else tris.push([f[0], f[1], f[2]], [f[0], f[2], f[3]])
  }
  return tris
}

export type SurfaceHit = { point: Vec3; rayT: number }

export function raySurface(ray: Ray, geom: Geometry): SurfaceHit | null {
  let best: SurfaceHit | null = null
  for (const [i, j, k] of triangulated(geom.faces)) {
    const t = rayTriangle(ray, vertex(geom, i), vertex(geom, j), vertex(geom, k))
    if (t !== null && (best === null || t < best.rayT)) {
      best = { point: add(ray.origin, scale(ray.dir, t)), rayT: t }
    }
  }
  return best
}

/** Source-viewport pick: surface hit snapped to the nearest mesh vertex.
 * Returns null on a miss. */
export function pickVertex(ray: Ray, geom: Geometry): number | null {
  const hit = raySurface(ray, geom)
  if (!hit) return null
  let best = -1
  let bestD = Infinity
  for (let i = 0; i < vertexCount(geom); i++) {
    const d = norm(sub(vertex(geom, i), hit.point))
    if (d < bestD) {
      bestD = d
      best = i
    }
  }
  return best
}

/** Target-viewport pick on a mesh/soup: the exact surface point. */
export function pickSurfacePoint(ray: Ray, geom: Geometry): Vec3 | null {
  const hit = raySurface(ray, geom)
  return hit ? hit.point : null
}

/** Target-viewport pick on a point cloud: the point nearest to the ray
 * (perpendicular distance), accepted only within pickRadius. */
export function pickCloudPoint(ray: Ray, geom: Geometry, pickRadius: number): number | null {
  let best = -1
  let bestPerp = Infinity
  for (let i = 0; i < vertexCount(geom); i++) {
    const rel = sub(vertex(geom, i), ray.origin)
    const along = dot(rel, ray.dir)
    if (along <= 0) continue
    const perp = norm(sub(rel, scale(ray.dir, along)))
    if (perp < bestPerp) {
      bestPerp = perp
      best = i
    }
  }
  return best >= 0 && bestPerp <= pickRadius ? best : null
}

// OBJ-style text <-> typed arrays. Meshes use v/f records (tri or quad
// faces, 1-based indices); point clouds are bare "x y z" lines.

export type Geometry = {
  vertices: Float64Array // flat xyz triples
  faces: number[][]      // empty for point clouds
}

export function vertexCount(g: Geometry): number {
  return g.vertices.length / 3
}

export function vertex(g: Geometry, i: number): [number, number, number] {
  return [g.vertices[3 * i], g.vertices[3 * i + 1], g.vertices[3 * i + 2]]
}

export function parseGeometry(text: string): Geometry {
  const verts: number[] = []
  const bare: number[] = []
  const faces: number[][] = []
  for (const rawLine of text.split('\n')) {
    const line = rawLine.trim()
    if (!line || line.startsWith('#')) continue
    const tok = line.split(/\s+/)
    if (tok[0] === 'v') {
      verts.push(Number(tok[1]), Number(tok[2]), Number(tok[3]))
    } else if (tok[0] === 'f') {
      const idx = tok.slice(1).map((t) => Number(t.split('/')[0]) - 1)
      if (idx.length < 3 || idx.length > 4 || idx.some((i) => i < 0 || !Number.isInteger(i))) {
        throw new Error(`bad face record: ${line}`)
      }
      faces.push(idx)
    } else if (['vn', 'vt', 'o', 'g', 's', 'mtllib', 'usemtl', 'l'].includes(tok[0])) {
      continue
    } else {
      const xyz = tok.slice(0, 3).map(Number)
      if (xyz.some((x) => Number.isNaN(x))) throw new Error(`unparseable record: ${line}`)
      bare.push(xyz[0], xyz[1], xyz[2])
    }
  }
  if (verts.length && bare.length) throw new Error("mixes 'v' records with bare coordinates")
  const coords = verts.length ? verts : bare
  if (!coords.length) throw new Error('empty geometry')
  const n = coords.length / 3
  for (const f of faces) {
    if (f.some((i) => i >= n)) throw new Error('face index out of range')
  }
  return { vertices: Float64Array.from(coords), faces }
}

export function serializeGeometry(g: Geometry): string {
  const lines: string[] = []
  for (let i = 0; i < vertexCount(g); i++) {
    const [x, y, z] = vertex(g, i)
    lines.push(`v ${x} ${y} ${z}`)
  }
  for (const f of g.faces) lines.push('f ' + f.map((i) => i + 1).join(' '))
  return lines.join('\n') + '\n'
}

/** Same face list, index for index — the transfer invariant to verify on
 * downloaded results. */
export function sameConnectivity(a: Geometry, b: Geometry): boolean {
  if (vertexCount(a) !== vertexCount(b) || a.faces.length !== b.faces.length) return false
  return a.faces.every(
    (f, k) => f.length === b.faces[k].length && f.every((i, j) => i === b.faces[k][j]),
  )
}

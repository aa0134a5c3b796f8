import { describe, expect, it } from 'vitest'
import {
  parseGeometry,
  sameConnectivity,
  serializeGeometry,
  vertex,
  vertexCount,
} from '../src/objFormat'

const TRI = 'v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n'

describe('parseGeometry', () => {
  it('parses v/f records', () => {
    const g = parseGeometry(TRI)
    expect(vertexCount(g)).toBe(3)
    expect(g.faces).toEqual([[0, 1, 2]])
    expect(vertex(g, 1)).toEqual([1, 0, 0])
  })

  it('parses quads and slash-style indices', () => {
    const g = parseGeometry('v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n')
    expect(g.faces).toEqual([[0, 1, 2, 3]])
  })

  it('parses bare coordinate lines as a point cloud', () => {
    const g = parseGeometry('0 0 0\n1 2 3\n')
    expect(vertexCount(g)).toBe(2)
    expect(g.faces).toEqual([])
  })

  it('skips comments and annotation records', () => {
    const g = parseGeometry('# hi\nvn 0 0 1\n' + TRI)
    expect(vertexCount(g)).toBe(3)
  })

  it('rejects empty, mixed, and out-of-range input', () => {
    expect(() => parseGeometry('')).toThrow('empty')
    expect(() => parseGeometry('v 0 0 0\n1 2 3\n')).toThrow('mixes')
    expect(() => parseGeometry('v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n')).toThrow('out of range')
    expect(() => parseGeometry('v 0 0 0\nv 1 0 0\nf 1 2\n')).toThrow('bad face')
  })

  it('round-trips through serializeGeometry', () => {
    const g = parseGeometry(TRI)
    expect(parseGeometry(serializeGeometry(g))).toEqual(g)
  })
})

describe('sameConnectivity', () => {
  it('holds for equal faces with different vertices', () => {
    const a = parseGeometry(TRI)
    const b = parseGeometry('v 5 5 5\nv 6 5 5\nv 5 6 5\nf 1 2 3\n')
    expect(sameConnectivity(a, b)).toBe(true)
  })

  it('fails on different face lists', () => {
    const a = parseGeometry(TRI)
    const b = parseGeometry('v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 3 2\n')
    expect(sameConnectivity(a, b)).toBe(false)
  })
})

// Thin three.js glue: two synchronized-highlight viewports (source left,
// target right), correspondence dots, live vertex-buffer updates. All
// decisions happen in state.ts / picking.ts; this file only renders.

import * as THREE from 'three'
import { OrbitControls } from 'three/examples/jsm/controls/OrbitControls.js'
import { Geometry, vertexCount } from './objFormat'
import { CameraDesc } from './picking'
import { Pair } from './api'
import { pairColor } from './state'

export type Viewport = {
  renderer: THREE.WebGLRenderer
  scene: THREE.Scene
  camera: THREE.PerspectiveCamera
  controls: OrbitControls
  mesh: THREE.Mesh | THREE.Points | null
  dots: THREE.Group
}

function toBufferGeometry(g: Geometry): THREE.BufferGeometry {
  const geo = new THREE.BufferGeometry()
  geo.setAttribute('position', new THREE.Float32BufferAttribute(Float32Array.from(g.vertices), 3))
  if (g.faces.length) {
    const index: number[] = []
    for (const f of g.faces) {
      index.push(f[0], f[1], f[2])
      if (f.length === 4) index.push(f[0], f[2], f[3])
    }
    geo.setIndex(index)
    geo.computeVertexNormals()
  }
  return geo
}

export function createViewport(container: HTMLElement): Viewport {
  const renderer = new THREE.WebGLRenderer({ antialias: true })
  renderer.setSize(container.clientWidth, container.clientHeight)
  container.appendChild(renderer.domElement)
  const scene = new THREE.Scene()
  scene.background = new THREE.Color(0x1b1f27)
  scene.add(new THREE.AmbientLight(0xffffff, 0.45))
  const key = new THREE.DirectionalLight(0xffffff, 0.9)
  key.position.set(2, 3, 4)
  scene.add(key)
  const camera = new THREE.PerspectiveCamera(
    45,
    container.clientWidth / Math.max(1, container.clientHeight),
    0.01,
    100,
  )
  camera.position.set(0, 0, 3)
  const controls = new OrbitControls(camera, renderer.domElement)
  const dots = new THREE.Group()
  scene.add(dots)
  return { renderer, scene, camera, controls, mesh: null, dots }
}

export function showGeometry(vp: Viewport, g: Geometry): void {
  if (vp.mesh) vp.scene.remove(vp.mesh)
  const geo = toBufferGeometry(g)
  vp.mesh = g.faces.length
    ? new THREE.Mesh(
        geo,
        new THREE.MeshStandardMaterial({ color: 0x9db4d0, flatShading: true }),
      )
    : new THREE.Points(geo, new THREE.PointsMaterial({ color: 0x9db4d0, size: 0.01 }))
  vp.scene.add(vp.mesh)
}

/** Replace vertex positions in place (server-sent buffers only). */
export function updateVertices(vp: Viewport, vertices: ArrayLike<number>): void {
  if (!vp.mesh) return
  const attr = vp.mesh.geometry.getAttribute('position') as THREE.BufferAttribute
  ;(attr.array as Float32Array).set(Float32Array.from(vertices))
  attr.needsUpdate = true
  vp.mesh.geometry.computeVertexNormals()
}

export function showPairDots(
  vp: Viewport,
  pairs: Pair[],
  positionOf: (p: Pair, index: number) => [number, number, number],
): void {
  vp.dots.clear()
  pairs.forEach((p, i) => {
    const dot = new THREE.Mesh(
      new THREE.SphereGeometry(0.02, 12, 12),
      new THREE.MeshBasicMaterial({ color: pairColor(i, p.kind) }),
    )
    dot.position.set(...positionOf(p, i))
    vp.dots.add(dot)
  })
}

/** Camera description for the pure picking math. */
export function describeCamera(vp: Viewport): CameraDesc {
  const cam = vp.camera
  cam.updateMatrixWorld()
  const right = new THREE.Vector3().setFromMatrixColumn(cam.matrixWorld, 0)
  const up = new THREE.Vector3().setFromMatrixColumn(cam.matrixWorld, 1)
  const back = new THREE.Vector3().setFromMatrixColumn(cam.matrixWorld, 2)
  return {
    position: cam.position.toArray() as [number, number, number],
    right: right.toArray() as [number, number, number],
    up: up.toArray() as [number, number, number],
    forward: back.negate().toArray() as [number, number, number],
    fovYDegrees: cam.fov,
    aspect: cam.aspect,
  }
}

export function ndcFromMouse(
  container: HTMLElement,
  ev: { clientX: number; clientY: number },
): [number, number] {
  const r = container.getBoundingClientRect()
  return [((ev.clientX - r.left) / r.width) * 2 - 1, -(((ev.clientY - r.top) / r.height) * 2 - 1)]
}

export function renderLoop(viewports: Viewport[]): void {
  const tick = () => {
    requestAnimationFrame(tick)
    for (const vp of viewports) {
      vp.controls.update()
      vp.renderer.render(vp.scene, vp.camera)
    }
  }
  tick()
}

// three.js view: streamed category meshes, domain box, tool cursor and
// selection highlight, with a small built-in orbit camera.

import * as THREE from "three";
import { MeshFrame } from "./meshFrame.js";

const CATEGORY_COLORS = [0xc98d5e, 0x7ea8be, 0x8fbf7f, 0xbf7fa8, 0xd9c27a, 0x9a8fbf];

export class Viewer {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  readonly renderer: THREE.WebGLRenderer;
  readonly domain = 1.0;

  private categoryMeshes = new Map<number, THREE.Mesh>();
  private toolCursor: THREE.Mesh;
  private selectionSphere: THREE.Mesh;
  private orbit = { theta: 0.8, phi: 1.1, radius: 1.9, target: new THREE.Vector3(0.5, 0.4, 0.5) };

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setClearColor(0x1c1f26);
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, 50);
    this.applyOrbit();

    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const key = new THREE.DirectionalLight(0xffffff, 1.2);
    key.position.set(1.5, 2.5, 1.0);
    this.scene.add(key);
    const rim = new THREE.DirectionalLight(0x8899ff, 0.4);
    rim.position.set(-1.0, 0.6, -1.5);
    this.scene.add(rim);

    const box = new THREE.Box3(new THREE.Vector3(0, 0, 0),
                               new THREE.Vector3(this.domain, this.domain, this.domain));
    this.scene.add(new THREE.Box3Helper(box, new THREE.Color(0x44506a)));
    const grid = new THREE.GridHelper(this.domain, 8, 0x334, 0x2a3040);
    grid.position.set(0.5, 0, 0.5);
    this.scene.add(grid);

    this.toolCursor = new THREE.Mesh(
      new THREE.SphereGeometry(1, 24, 16),
      new THREE.MeshStandardMaterial({ color: 0xe8e4da, transparent: true, opacity: 0.55 }));
    this.scene.add(this.toolCursor);

    // blue highlight for the gesture selection region
    this.selectionSphere = new THREE.Mesh(
      new THREE.SphereGeometry(1, 24, 16),
      new THREE.MeshBasicMaterial({ color: 0x3399ff, transparent: true, opacity: 0.18,
                                    depthWrite: false }));
    this.selectionSphere.visible = false;
    this.scene.add(this.selectionSphere);
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / Math.max(1, height);
    this.camera.updateProjectionMatrix();
  }

  setToolCursor(position: THREE.Vector3, radius: number): void {
    this.toolCursor.position.copy(position);
    this.toolCursor.scale.setScalar(radius);
  }

  showSelection(center: THREE.Vector3 | null, radius: number): void {
    if (center === null) {
      this.selectionSphere.visible = false;
      return;
    }
    this.selectionSphere.visible = true;
    this.selectionSphere.position.copy(center);
    this.selectionSphere.scale.setScalar(radius);
  }

  /** Replace category geometry from a streamed frame. */
  applyFrame(frame: MeshFrame): void {
    const seen = new Set<number>();
    for (const block of frame.blocks) {
      seen.add(block.categoryId);
      let mesh = this.categoryMeshes.get(block.categoryId);
      if (!mesh) {
        const material = new THREE.MeshStandardMaterial({
          color: CATEGORY_COLORS[block.categoryId % CATEGORY_COLORS.length],
          roughness: 0.7,
          metalness: 0.05,
          flatShading: false,
        });
        mesh = new THREE.Mesh(new THREE.BufferGeometry(), material);
        this.categoryMeshes.set(block.categoryId, mesh);
        this.scene.add(mesh);
      }
      const geo = mesh.geometry as THREE.BufferGeometry;
      geo.setAttribute("position", new THREE.BufferAttribute(block.vertices, 3));
      geo.setIndex(new THREE.BufferAttribute(block.indices, 1));
      geo.computeVertexNormals();
      geo.computeBoundingSphere();
    }
    for (const [cat, mesh] of this.categoryMeshes) {
      mesh.visible = seen.has(cat);
    }
  }

  rotate(dTheta: number, dPhi: number): void {
    this.orbit.theta += dTheta;
    this.orbit.phi = Math.min(Math.max(this.orbit.phi + dPhi, 0.05), Math.PI - 0.05);
    this.applyOrbit();
  }

  dolly(factor: number): void {
    this.orbit.radius = Math.min(Math.max(this.orbit.radius * factor, 0.3), 10);
    this.applyOrbit();
  }

  private applyOrbit(): void {
    const { theta, phi, radius, target } = this.orbit;
    this.camera.position.set(
      target.x + radius * Math.sin(phi) * Math.cos(theta),
      target.y + radius * Math.cos(phi),
      target.z + radius * Math.sin(phi) * Math.sin(theta),
    );
    this.camera.lookAt(target);
  }

  /** Pointer ray intersected with the camera-facing plane at `depth`. */
  pointerToWorld(ndcX: number, ndcY: number, depth: number): THREE.Vector3 {
    const ray = new THREE.Raycaster();
    ray.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    const point = ray.ray.origin.clone().addScaledVector(ray.ray.direction, depth);
    point.clampScalar(0.02, this.domain - 0.02);
    return point;
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}

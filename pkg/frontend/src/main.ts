/** Browser entry point: WebGL point cloud, click-to-select, scale slider,
 * and the collapsible tree panel. All grouping semantics come from the
 * HTTP service; this file only renders state. */

import * as THREE from "three";

import { ApiClient, type Meta, type PointCloud, type Vec3 } from "./api.js";
import { CLICK_MARKER, DIMMED, HIGHLIGHT, siblingColors, type Rgb } from "./colors.js";
import { pickAlongRay } from "./pick.js";
import { SelectionLoop } from "./state.js";
import { TreeModel } from "./tree.js";

type ColorMode = "selection" | "tree";

class Viewer {
  private readonly api = new ApiClient("");
  private scene = new THREE.Scene();
  private camera!: THREE.PerspectiveCamera;
  private renderer!: THREE.WebGLRenderer;
  private pointsObj!: THREE.Points;
  private colorAttr!: THREE.BufferAttribute;
  private marker!: THREE.Mesh;
  private cloud!: PointCloud;
  private meta!: Meta;
  private tree!: TreeModel;
  private loop!: SelectionLoop;
  private mode: ColorMode = "selection";
  private treeSelection: { node: number; colors: Map<number, Rgb> } | null = null;
  private nodeIndices = new Map<number, number[]>();

  async start(): Promise<void> {
    this.meta = await this.api.meta();
    this.cloud = await this.api.points();
    this.tree = new TreeModel(await this.api.tree());
    this.loop = new SelectionLoop(this.api, {
      sMax: this.meta.s_max,
      threshold: this.meta.threshold,
    });
    this.loop.onHighlight(() => this.repaint());
    this.loop.onError((err) => this.toast(`selection failed: ${String(err)}`));
    this.initScene();
    this.initUi();
    this.repaint();
    this.animate();
  }

  private initScene(): void {
    const canvas = document.getElementById("view") as HTMLCanvasElement;
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(50, 1, 0.01, 100);
    this.camera.position.set(0, -3.2, 1.6);
    this.camera.up.set(0, 0, 1);
    this.camera.lookAt(0, 0, 0);
    this.resize();
    window.addEventListener("resize", () => this.resize());

    const geom = new THREE.BufferGeometry();
    geom.setAttribute("position", new THREE.BufferAttribute(this.cloud.positions, 3));
    const colors = new Float32Array(this.cloud.count * 3);
    this.colorAttr = new THREE.BufferAttribute(colors, 3);
    geom.setAttribute("color", this.colorAttr);
    this.pointsObj = new THREE.Points(
      geom,
      new THREE.PointsMaterial({ size: 0.02, vertexColors: true }),
    );
    this.scene.add(this.pointsObj);

    this.marker = new THREE.Mesh(
      new THREE.SphereGeometry(0.018, 12, 12),
      new THREE.MeshBasicMaterial({
        color: new THREE.Color(...CLICK_MARKER.map((c) => c / 255) as Vec3),
      }),
    );
    this.marker.visible = false;
    this.scene.add(this.marker);

    this.installOrbit(canvas);
    canvas.addEventListener("click", (ev) => this.onCanvasClick(ev));
  }

  /** Minimal drag orbit + wheel zoom around the origin. */
  private installOrbit(canvas: HTMLCanvasElement): void {
    let dragging = false;
    let moved = 0;
    let last: [number, number] = [0, 0];
    let theta = Math.atan2(this.camera.position.y, this.camera.position.x);
    let phi = Math.acos(this.camera.position.z / this.camera.position.length());
    let radius = this.camera.position.length();
    const apply = () => {
      this.camera.position.set(
        radius * Math.sin(phi) * Math.cos(theta),
        radius * Math.sin(phi) * Math.sin(theta),
        radius * Math.cos(phi),
      );
      this.camera.lookAt(0, 0, 0);
    };
    canvas.addEventListener("pointerdown", (e) => {
      dragging = true;
      moved = 0;
      last = [e.clientX, e.clientY];
    });
    window.addEventListener("pointerup", () => (dragging = false));
    window.addEventListener("pointermove", (e) => {
      if (!dragging) return;
      const dx = e.clientX - last[0];
      const dy = e.clientY - last[1];
      moved += Math.abs(dx) + Math.abs(dy);
      last = [e.clientX, e.clientY];
      theta -= dx * 0.005;
      phi = Math.min(Math.PI - 0.05, Math.max(0.05, phi - dy * 0.005));
      apply();
    });
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      radius = Math.min(30, Math.max(0.2, radius * (1 + e.deltaY * 0.001)));
      apply();
    });
    canvas.addEventListener("click", () => {
      // suppress selection when the click ended a drag
      if (moved > 4) event?.stopImmediatePropagation?.();
    }, true);
  }

  private onCanvasClick(ev: MouseEvent): void {
    const rect = (ev.target as HTMLElement).getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((ev.clientX - rect.left) / rect.width) * 2 - 1,
      -((ev.clientY - rect.top) / rect.height) * 2 + 1,
    );
    const ray = new THREE.Raycaster();
    ray.setFromCamera(ndc, this.camera);
    const hit = pickAlongRay(
      this.cloud.positions,
      this.camera.position.toArray() as Vec3,
      ray.ray.direction.toArray() as Vec3,
    );
    if (hit === null) {
      this.toast("no point under cursor");
      return;
    }
    const p: Vec3 = [
      this.cloud.positions[3 * hit.index],
      this.cloud.positions[3 * hit.index + 1],
      this.cloud.positions[3 * hit.index + 2],
    ];
    this.marker.position.set(...p);
    this.marker.visible = true;
    this.mode = "selection";
    this.treeSelection = null;
    this.loop.setClick(p);
    this.setStatus(`clicked point ${hit.index}`);
  }

  private initUi(): void {
    const slider = document.getElementById("scale") as HTMLInputElement;
    slider.min = "0";
    slider.max = String(this.meta.s_max);
    slider.step = "0.01";
    slider.value = "0";
    const markers = document.getElementById("scale-marks") as HTMLDataListElement;
    for (let s = 0; s <= this.meta.s_max + 1e-9; s += this.meta.scale_step) {
      const opt = document.createElement("option");
      opt.value = s.toFixed(2);
      markers.appendChild(opt);
    }
    slider.addEventListener("input", () => {
      this.loop.setScale(Number(slider.value));
      this.setStatus(`scale ${Number(slider.value).toFixed(2)}`);
    });
    this.renderTreePanel();
  }

  private renderTreePanel(): void {
    const panel = document.getElementById("tree") as HTMLElement;
    panel.innerHTML = "";
    const render = (id: number, depth: number): HTMLElement => {
      const node = this.tree.node(id);
      const li = document.createElement("li");
      const btn = document.createElement("button");
      btn.textContent =
        `#${node.id} n=${node.count} s=${node.split_scale.toFixed(2)}`;
      btn.addEventListener("click", () => void this.selectTreeNode(id));
      li.appendChild(btn);
      if (node.children.length > 0) {
        const ul = document.createElement("ul");
        for (const c of node.children) ul.appendChild(render(c, depth + 1));
        li.appendChild(ul);
      }
      return li;
    };
    const ul = document.createElement("ul");
    for (const r of this.tree.roots) ul.appendChild(render(r, 0));
    panel.appendChild(ul);
  }

  private async nodePoints(id: number): Promise<number[]> {
    let idx = this.nodeIndices.get(id);
    if (idx === undefined) {
      idx = await this.api.node(id);
      this.nodeIndices.set(id, idx);
    }
    return idx;
  }

  private async selectTreeNode(id: number): Promise<void> {
    const node = this.tree.node(id);
    const palette = siblingColors(Math.max(node.children.length, 1));
    const colors = new Map<number, Rgb>();
    if (node.children.length === 0) {
      for (const i of await this.nodePoints(id)) colors.set(i, palette[0]);
    } else {
      for (let c = 0; c < node.children.length; c++) {
        for (const i of await this.nodePoints(node.children[c])) {
          colors.set(i, palette[c]);
        }
      }
    }
    this.mode = "tree";
    this.treeSelection = { node: id, colors };
    const crumbs = this.tree
      .breadcrumbs(id)
      .map((n) => `#${n.id}@${n.split_scale.toFixed(2)}`)
      .join(" / ");
    (document.getElementById("breadcrumbs") as HTMLElement).textContent = crumbs;
    this.repaint();
  }

  private repaint(): void {
    const arr = this.colorAttr.array as Float32Array;
    const paint = (i: number, rgb: Rgb) => {
      arr[3 * i] = rgb[0] / 255;
      arr[3 * i + 1] = rgb[1] / 255;
      arr[3 * i + 2] = rgb[2] / 255;
    };
    if (this.mode === "tree" && this.treeSelection !== null) {
      for (let i = 0; i < this.cloud.count; i++) {
        paint(i, this.treeSelection.colors.get(i) ?? DIMMED);
      }
    } else {
      const hl = this.loop?.highlight ?? new Set<number>();
      for (let i = 0; i < this.cloud.count; i++) {
        if (hl.has(i)) {
          paint(i, HIGHLIGHT);
        } else if (hl.size > 0) {
          paint(i, DIMMED);
        } else {
          paint(i, [
            this.cloud.colors[3 * i],
            this.cloud.colors[3 * i + 1],
            this.cloud.colors[3 * i + 2],
          ]);
        }
      }
    }
    this.colorAttr.needsUpdate = true;
  }

  private resize(): void {
    const canvas = this.renderer.domElement;
    const w = canvas.clientWidth || 800;
    const h = canvas.clientHeight || 600;
    this.renderer.setSize(w, h, false);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
  }

  private animate(): void {
    requestAnimationFrame(() => this.animate());
    this.renderer.render(this.scene, this.camera);
  }

  private setStatus(text: string): void {
    (document.getElementById("status") as HTMLElement).textContent = text;
  }

  private toast(text: string): void {
    const el = document.getElementById("toast") as HTMLElement;
    el.textContent = text;
    el.classList.add("visible");
    setTimeout(() => el.classList.remove("visible"), 2500);
  }
}

if (typeof document !== "undefined" && document.getElementById("view") !== null) {
  new Viewer().start().catch((err) => {
    const el = document.getElementById("toast");
    if (el) {
      el.textContent = `failed to load: ${String(err)}`;
      el.classList.add("visible");
    }
  });
}

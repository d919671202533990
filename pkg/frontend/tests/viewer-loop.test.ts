/** End-to-end selection loop against a live service: click a real point,
 * sweep the scale slider, and verify the highlights are nested groups that
 * match direct /select responses. Spawns the Python fixture server. */

import { type ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, type Vec3 } from "../src/api.js";
import { SelectionLoop } from "../src/state.js";
import { TreeModel } from "../src/tree.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let serverLog = "";

async function waitForService(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/meta`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    if (server.exitCode !== null) {
      throw new Error(`fixture server exited early:\n${serverLog}`);
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error(`fixture server not ready in ${timeoutMs} ms:\n${serverLog}`);
}

beforeAll(async () => {
  server = spawn(
    "python3",
    [new URL("../scripts/serve_fixture.py", import.meta.url).pathname,
     "--port", String(PORT)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stdout?.on("data", (d) => (serverLog += d));
  server.stderr?.on("data", (d) => (serverLog += d));
  await waitForService(240_000);
}, 250_000);

afterAll(() => {
  server?.kill();
});

describe("viewer selection loop against the live service", () => {
  it("produces nested, service-consistent selections across a scale sweep", async () => {
    const api = new ApiClient(BASE);
    const meta = await api.meta();
    const cloud = await api.points();
    const tree = new TreeModel(await api.tree());

    // click the first point of a deepest leaf group, mimicking a canvas pick
    const leaves = tree.leaves();
    const target = leaves.reduce((a, b) =>
      tree.depth(b.id) > tree.depth(a.id) ? b : a);
    const idx = (await api.node(target.id))[0];
    const click: Vec3 = [
      cloud.positions[3 * idx],
      cloud.positions[3 * idx + 1],
      cloud.positions[3 * idx + 2],
    ];

    const loop = new SelectionLoop(api, {
      sMax: meta.s_max,
      threshold: meta.threshold,
    });
    loop.setClick(click);

    const sweep: Array<{ scale: number; indices: number[] }> = [];
    for (let s = 0; s <= meta.s_max + 1e-9; s += 0.05) {
      const scale = Math.round(s * 100) / 100;
      loop.setScale(scale);
      await loop.flush();
      sweep.push({
        scale,
        indices: [...loop.highlight].sort((a, b) => a - b),
      });
    }

    // the clicked point is always part of its own group
    for (const step of sweep) {
      expect(step.indices).toContain(idx);
    }

    // groups only grow as scale grows (nesting)
    for (let i = 1; i < sweep.length; i++) {
      const prev = new Set(sweep[i].indices);
      for (const j of sweep[i - 1].indices) {
        expect(prev.has(j)).toBe(true);
      }
    }

    // at least two genuinely different groups appear across the sweep
    const distinct = new Set(sweep.map((s) => s.indices.join(",")));
    expect(distinct.size).toBeGreaterThanOrEqual(2);

    // every highlight matches a direct /select call bypassing the loop
    for (const step of [sweep[0], sweep[Math.floor(sweep.length / 2)], sweep[sweep.length - 1]]) {
      const direct = await api.select(click, step.scale, meta.threshold);
      expect(step.indices).toEqual([...direct].sort((a, b) => a - b));
    }
  }, 120_000);
});

/** Ray -> nearest rendered point, the 3D half of click handling. */

import type { Vec3 } from "./api.js";

export interface PickResult {
  index: number;
  distance: number;
}

/**
 * Nearest point along a ray. A point qualifies when its perpendicular
 * distance to the ray is below `tolerance * max(t, 1)` (roughly a fixed
 * angular size); among qualifiers the smallest ray parameter t wins.
 * Returns null on a miss.
 */
export function pickAlongRay(
  positions: Float32Array,
  origin: Vec3,
  dir: Vec3,
  tolerance = 0.02,
): PickResult | null {
  const n = Math.floor(positions.length / 3);
  const len = Math.hypot(dir[0], dir[1], dir[2]);
  if (len === 0) return null;
  const d: Vec3 = [dir[0] / len, dir[1] / len, dir[2] / len];
  let best = -1;
  let bestT = Infinity;
  for (let i = 0; i < n; i++) {
    const px = positions[3 * i] - origin[0];
    const py = positions[3 * i + 1] - origin[1];
    const pz = positions[3 * i + 2] - origin[2];
    const t = px * d[0] + py * d[1] + pz * d[2];
    if (t <= 0 || t >= bestT) continue;
    const qx = px - t * d[0];
    const qy = py - t * d[1];
    const qz = pz - t * d[2];
    const perp = Math.hypot(qx, qy, qz);
    if (perp <= tolerance * Math.max(t, 1)) {
      best = i;
      bestT = t;
    }
  }
  return best === -1 ? null : { index: best, distance: bestT };
}

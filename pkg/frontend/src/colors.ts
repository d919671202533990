/** Color assignment: golden-ratio hues keep sibling clusters visually
 * distinct without a fixed palette. */

export type Rgb = [number, number, number];

export const HIGHLIGHT: Rgb = [255, 196, 0];
export const DIMMED: Rgb = [70, 70, 78];
export const CLICK_MARKER: Rgb = [255, 0, 80];

export function hsvToRgb(h: number, s: number, v: number): Rgb {
  const i = Math.floor(h * 6) % 6;
  const f = h * 6 - Math.floor(h * 6);
  const p = v * (1 - s);
  const q = v * (1 - f * s);
  const t = v * (1 - (1 - f) * s);
  const pick: Rgb[] = [
    [v, t, p], [q, v, p], [p, v, t], [p, q, v], [t, p, v], [v, p, q],
  ];
  const [r, g, b] = pick[i];
  return [Math.round(r * 255), Math.round(g * 255), Math.round(b * 255)];
}

export function goldenHue(i: number): number {
  return (i * 0.61803398875) % 1.0;
}

/** One distinct color per sibling; stable for a given count. */
export function siblingColors(n: number): Rgb[] {
  return Array.from({ length: n }, (_, i) => hsvToRgb(goldenHue(i), 0.7, 0.95));
}

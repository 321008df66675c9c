/**
 * Constant-velocity extrapolation with an optional multi-mode heading fan,
 * mirroring the certification host's built-in predictor coordinate for
 * coordinate: mode 1 extrapolates the last observed velocity, extra modes
 * rotate it by angles spread over +-30 degrees.
 */

import type { Point } from "./protocol.js";

const FAN_HALF_ANGLE = (30 * Math.PI) / 180;

export function fanAngles(k: number): number[] {
  if (k <= 1) return [0];
  if (k === 2) return [0, -FAN_HALF_ANGLE];
  const rest: number[] = [];
  for (let i = 0; i < k - 1; i++) {
    rest.push(-FAN_HALF_ANGLE + (2 * FAN_HALF_ANGLE * i) / (k - 2));
  }
  return [0, ...rest];
}

export function constantVelocityModes(
  primary: Point[],
  tPred: number,
  k: number
): Point[][] {
  const [x1, y1] = primary[primary.length - 2];
  const [x0, y0] = primary[primary.length - 1];
  const vx = x0 - x1;
  const vy = y0 - y1;
  return fanAngles(k).map((theta) => {
    const c = Math.cos(theta);
    const s = Math.sin(theta);
    const rx = c * vx - s * vy;
    const ry = s * vx + c * vy;
    const mode: Point[] = [];
    for (let t = 1; t <= tPred; t++) {
      mode.push([x0 + t * rx, y0 + t * ry]);
    }
    return mode;
  });
}

import { Sample, hColor, H_MARGIN } from "./state.js";

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

const COLORS = { green: "#46d46a", amber: "#e6b03c", red: "#e05555" };

/** Map samples into pixel coordinates inside a rect. The x axis always
 * spans [t_end - spanSeconds, t_end] so the trace scrolls steadily. */
export function seriesPath(
  samples: readonly Sample[],
  value: (s: Sample) => number,
  rect: Rect,
  spanSeconds: number,
  yMin: number,
  yMax: number,
): [number, number][] {
  if (samples.length === 0) return [];
  const tEnd = samples[samples.length - 1].t;
  const t0 = tEnd - spanSeconds;
  const out: [number, number][] = [];
  for (const s of samples) {
    const fx = (s.t - t0) / spanSeconds;
    const fy = (value(s) - yMin) / (yMax - yMin);
    out.push([
      rect.x + fx * rect.w,
      rect.y + (1 - Math.min(1, Math.max(0, fy))) * rect.h,
    ]);
  }
  return out;
}

function polyline(ctx: CanvasRenderingContext2D, pts: [number, number][]) {
  if (pts.length < 2) return;
  ctx.beginPath();
  ctx.moveTo(pts[0][0], pts[0][1]);
  for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
  ctx.stroke();
}

export function drawMeter(ctx: CanvasRenderingContext2D, rect: Rect, h: number): void {
  ctx.fillStyle = "#10141a";
  ctx.fillRect(rect.x, rect.y, rect.w, rect.h);
  // full scale at 8 margins: the interesting range is near zero
  const frac = Math.min(1, Math.max(0, h / (8 * H_MARGIN)));
  ctx.fillStyle = COLORS[hColor(h)];
  const bar = frac * rect.h;
  ctx.fillRect(rect.x, rect.y + rect.h - bar, rect.w, bar);
  ctx.strokeStyle = "#232b36";
  ctx.strokeRect(rect.x + 0.5, rect.y + 0.5, rect.w - 1, rect.h - 1);
}

export function drawStrips(
  ctx: CanvasRenderingContext2D,
  rect: Rect,
  samples: readonly Sample[],
  spanSeconds: number,
): void {
  ctx.fillStyle = "#10141a";
  ctx.fillRect(rect.x, rect.y, rect.w, rect.h);
  const half = rect.h / 2;
  const top = { x: rect.x, y: rect.y, w: rect.w, h: half - 2 };
  const bottom = { x: rect.x, y: rect.y + half + 2, w: rect.w, h: half - 2 };

  // h strip with the zero and margin guides
  const hMax = 0.6;
  for (const [level, color] of [[0, COLORS.red], [H_MARGIN, "#3c4654"]] as const) {
    const y = top.y + (1 - level / hMax) * top.h;
    ctx.strokeStyle = color;
    ctx.setLineDash([3, 3]);
    ctx.beginPath();
    ctx.moveTo(top.x, y);
    ctx.lineTo(top.x + top.w, y);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  ctx.strokeStyle = "#6fb7ff";
  ctx.lineWidth = 1.2;
  polyline(ctx, seriesPath(samples, (s) => s.h, top, spanSeconds, 0, hMax));

  ctx.strokeStyle = "#e6b03c";
  polyline(ctx, seriesPath(samples, (s) => s.correction, bottom, spanSeconds, 0, 1.5));
  ctx.strokeStyle = "#232b36";
  ctx.strokeRect(rect.x + 0.5, rect.y + 0.5, rect.w - 1, rect.h - 1);
}

export function drawBars(
  ctx: CanvasRenderingContext2D,
  rect: Rect,
  bars: number[],
  fullScale: number,
): void {
  ctx.fillStyle = "#10141a";
  ctx.fillRect(rect.x, rect.y, rect.w, rect.h);
  const slot = rect.w / Math.max(1, bars.length);
  bars.forEach((b, i) => {
    const frac = Math.min(1, b / fullScale);
    ctx.fillStyle = frac > 0.02 ? "#e6b03c" : "#2c3642";
    const bh = Math.max(2, frac * rect.h);
    ctx.fillRect(rect.x + i * slot + 4, rect.y + rect.h - bh, slot - 8, bh);
  });
  ctx.strokeStyle = "#232b36";
  ctx.strokeRect(rect.x + 0.5, rect.y + 0.5, rect.w - 1, rect.h - 1);
}

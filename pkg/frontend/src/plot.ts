/** Canvas waveform renderer: transmitted signal volts against seconds. */

const MARGIN = { left: 44, right: 10, top: 10, bottom: 24 };

export interface PlotTheme {
  grid: string;
  axis: string;
  trace: string;
  text: string;
}

export const DEFAULT_THEME: PlotTheme = {
  grid: "rgba(148, 163, 184, 0.15)",
  axis: "rgba(148, 163, 184, 0.6)",
  trace: "#34d399",
  text: "#94a3b8",
};

export function renderWaveform(
  canvas: HTMLCanvasElement,
  points: [number, number][],
  windowS: number,
  theme: PlotTheme = DEFAULT_THEME,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);

  const plotW = w - MARGIN.left - MARGIN.right;
  const plotH = h - MARGIN.top - MARGIN.bottom;
  const latestT = points.length ? points[points.length - 1]![0] : windowS;
  const t0 = latestT - windowS;

  // Fixed voltage scale: the post-conversion signal lives in [0, 3.3] V.
  const vMin = 0.0;
  const vMax = 3.3;
  const x = (t: number) => MARGIN.left + ((t - t0) / windowS) * plotW;
  const y = (v: number) => MARGIN.top + (1 - (v - vMin) / (vMax - vMin)) * plotH;

  ctx.font = "10px system-ui, sans-serif";
  ctx.fillStyle = theme.text;
  ctx.strokeStyle = theme.grid;
  ctx.lineWidth = 1;

  for (let volts = 0; volts <= vMax + 1e-9; volts += 1.0) {
    const yy = y(volts);
    ctx.beginPath();
    ctx.moveTo(MARGIN.left, yy);
    ctx.lineTo(w - MARGIN.right, yy);
    ctx.stroke();
    ctx.fillText(`${volts.toFixed(0)} V`, 6, yy + 3);
  }
  const tickEvery = windowS <= 12 ? 2 : 5;
  const firstTick = Math.ceil(t0 / tickEvery) * tickEvery;
  for (let t = firstTick; t <= latestT + 1e-9; t += tickEvery) {
    const xx = x(t);
    ctx.beginPath();
    ctx.moveTo(xx, MARGIN.top);
    ctx.lineTo(xx, h - MARGIN.bottom);
    ctx.stroke();
    ctx.fillText(`${t.toFixed(0)} s`, xx - 8, h - 8);
  }

  ctx.strokeStyle = theme.axis;
  ctx.strokeRect(MARGIN.left, MARGIN.top, plotW, plotH);

  if (points.length < 2) {
    return;
  }
  ctx.strokeStyle = theme.trace;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  let started = false;
  for (const [t, v] of points) {
    if (t < t0) {
      continue;
    }
    const xx = x(t);
    const yy = y(Math.max(vMin, Math.min(vMax, v)));
    if (started) {
      ctx.lineTo(xx, yy);
    } else {
      ctx.moveTo(xx, yy);
      started = true;
    }
  }
  ctx.stroke();
}

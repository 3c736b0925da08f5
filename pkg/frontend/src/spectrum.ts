// Spectrum trace geometry: log-frequency polyline with peak markers.
// Path building is pure; only draw() touches the canvas.

import type { PeakReport, TagSummary } from "./protocol.js";

export interface TracePoint {
  sx: number;
  sy: number;
}

export function tracePath(
  freq: number[], magnitude: number[], fStart: number, fEnd: number,
  width: number, height: number, magFloor = 1e-4,
): TracePoint[] {
  const logLo = Math.log(fStart);
  const logHi = Math.log(fEnd);
  const out: TracePoint[] = [];
  let magMax = magFloor;
  for (const m of magnitude) magMax = Math.max(magMax, m);
  for (let i = 0; i < freq.length; i++) {
    const fx = (Math.log(freq[i]) - logLo) / (logHi - logLo);
    const fy = Math.min(1, Math.max(0, magnitude[i] / magMax));
    out.push({ sx: fx * width, sy: height - fy * (height - 14) - 2 });
  }
  return out;
}

export function peakMarkers(
  peaks: PeakReport[], tags: TagSummary[], fStart: number, fEnd: number,
  width: number,
): Array<{ sx: number; label: string; merged: boolean }> {
  const logLo = Math.log(fStart);
  const logHi = Math.log(fEnd);
  return peaks.map((p) => {
    const fx = (Math.log(p.freq_hz) - logLo) / (logHi - logLo);
    // nearest registered tag (within its parametric band) names the marker
    let label = "?";
    let best = Infinity;
    for (const t of tags) {
      const lo = t.f0 * (1 - t.alpha) - 0.02 * t.f0;
      const hi = t.f0 * 1.02;
      if (p.freq_hz >= lo && p.freq_hz <= hi) {
        const d = Math.abs(p.freq_hz - t.f0);
        if (d < best) {
          best = d;
          label = t.id;
        }
      }
    }
    return { sx: fx * width, label, merged: p.merged };
  });
}

export function drawSpectrum(
  ctx: CanvasRenderingContext2D,
  trace: TracePoint[],
  markers: Array<{ sx: number; label: string; merged: boolean }>,
  width: number, height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#69c";
  ctx.lineWidth = 1;
  ctx.beginPath();
  trace.forEach((p, i) => (i === 0 ? ctx.moveTo(p.sx, p.sy) : ctx.lineTo(p.sx, p.sy)));
  ctx.stroke();
  ctx.font = "10px monospace";
  for (const m of markers) {
    ctx.strokeStyle = m.merged ? "#e6a23c" : "#e55";
    ctx.beginPath();
    ctx.moveTo(m.sx, 12);
    ctx.lineTo(m.sx, height);
    ctx.stroke();
    ctx.fillStyle = "#ccc";
    ctx.fillText(m.label, Math.min(m.sx + 3, width - 60), 10);
  }
}

/**
 * Per-group error curves over rounds.
 *
 * A group's series is drawn dashed up to the round at which it was
 * introduced and solid from then on, so a hunter can see both how a group
 * fared before anyone patched it and what the patch bought.
 */

import { TestReport } from "./docs.js";

export interface SeriesSegment {
  dashed: boolean;
  points: [number, number][];
}

export interface ErrorSeries {
  id: string;
  introducedRound: number | null;
  segments: SeriesSegment[];
}

function splitSeries(
  rounds: number[],
  losses: (number | null)[],
  introduced: number | null,
): SeriesSegment[] {
  const points: [number, number][] = [];
  rounds.forEach((round, i) => {
    const loss = losses[i];
    if (loss !== null && loss !== undefined) {
      points.push([round, loss]);
    }
  });
  if (points.length === 0) {
    return [];
  }
  if (introduced === null) {
    return [{ dashed: false, points }];
  }
  const dashed = points.filter(([round]) => round <= introduced);
  const solid = points.filter(([round]) => round >= introduced);
  if (solid.length === 0) {
    // report ends before the introduction round: nothing solid to draw yet
    return [{ dashed: true, points: dashed }];
  }
  const segments: SeriesSegment[] = [];
  if (dashed.length > 1) {
    segments.push({ dashed: true, points: dashed });
  }
  segments.push({ dashed: false, points: solid });
  return segments;
}

export function buildErrorSeries(report: TestReport): ErrorSeries[] {
  const out: ErrorSeries[] = [
    {
      id: "overall",
      introducedRound: null,
      segments: splitSeries(report.rounds, report.overall, null),
    },
  ];
  for (const group of report.groups) {
    out.push({
      id: group.id,
      introducedRound: group.introduced_round,
      segments: splitSeries(report.rounds, group.losses, group.introduced_round),
    });
  }
  return out;
}

const PALETTE = ["#1f2937", "#2563eb", "#c2571a", "#15803d", "#9333ea", "#be123c"];

export function renderErrorChartSvg(
  series: ErrorSeries[],
  width = 520,
  height = 260,
): string {
  const margin = { left: 44, right: 120, top: 12, bottom: 28 };
  const innerW = width - margin.left - margin.right;
  const innerH = height - margin.top - margin.bottom;
  const rounds = series.flatMap((s) => s.segments.flatMap((seg) => seg.points.map((p) => p[0])));
  const maxRound = Math.max(1, ...rounds);
  const losses = series.flatMap((s) => s.segments.flatMap((seg) => seg.points.map((p) => p[1])));
  const maxLoss = Math.max(0.0001, ...losses);

  const x = (round: number) => margin.left + (round / maxRound) * innerW;
  const y = (loss: number) => margin.top + innerH - (loss / maxLoss) * innerH;

  const parts: string[] = [
    `<line x1="${margin.left}" y1="${margin.top + innerH}" x2="${margin.left + innerW}" ` +
      `y2="${margin.top + innerH}" stroke="#9ca3af"/>`,
    `<line x1="${margin.left}" y1="${margin.top}" x2="${margin.left}" ` +
      `y2="${margin.top + innerH}" stroke="#9ca3af"/>`,
  ];
  series.forEach((entry, index) => {
    const color = PALETTE[index % PALETTE.length];
    for (const segment of entry.segments) {
      if (segment.points.length === 1) {
        const [[round, loss]] = segment.points as [[number, number]];
        parts.push(
          `<circle data-series="${entry.id}" cx="${x(round)}" cy="${y(loss)}" r="3" fill="${color}"/>`,
        );
        continue;
      }
      const path = segment.points.map(([r, l]) => `${x(r)},${y(l)}`).join(" ");
      parts.push(
        `<polyline data-series="${entry.id}" data-dashed="${segment.dashed}" points="${path}" ` +
          `fill="none" stroke="${color}" stroke-width="1.8"` +
          (segment.dashed ? ` stroke-dasharray="6 4"` : "") +
          `/>`,
      );
    }
    const labelY = margin.top + 14 * (index + 1);
    parts.push(
      `<text x="${margin.left + innerW + 8}" y="${labelY}" font-size="11" ` +
        `font-family="monospace" fill="${color}">${entry.id}</text>`,
    );
  });
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}">` +
    parts.join("") +
    `</svg>`
  );
}

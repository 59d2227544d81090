/** Minimal SVG assembly + axis helpers, DOM-free. */

import { ScaleContinuousNumeric } from "d3-scale";

export interface Frame {
  width: number;
  height: number;
  margin: { top: number; right: number; bottom: number; left: number };
}

export const DEFAULT_FRAME: Frame = {
  width: 640,
  height: 440,
  margin: { top: 42, right: 24, bottom: 52, left: 64 },
};

const esc = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

export function el(
  tag: string,
  attrs: Record<string, string | number>,
  body = ""
): string {
  const a = Object.entries(attrs)
    .map(([k, v]) => `${k}="${v}"`)
    .join(" ");
  return body === "" ? `<${tag} ${a}/>` : `<${tag} ${a}>${body}</${tag}>`;
}

export function text(
  x: number,
  y: number,
  s: string,
  attrs: Record<string, string | number> = {}
): string {
  return el("text", { x, y, "font-size": 12, "font-family": "sans-serif", ...attrs }, esc(s));
}

function fmtTick(v: number): string {
  if (v !== 0 && (Math.abs(v) < 1e-3 || Math.abs(v) >= 1e4)) return v.toExponential(0);
  return `${Number(v.toPrecision(6))}`;
}

export function xAxis(
  scale: ScaleContinuousNumeric<number, number>,
  frame: Frame,
  label: string,
  ticks?: number[]
): string {
  const y0 = frame.height - frame.margin.bottom;
  const parts = [
    el("line", {
      x1: frame.margin.left, x2: frame.width - frame.margin.right,
      y1: y0, y2: y0, stroke: "black",
    }),
  ];
  for (const t of ticks ?? scale.ticks(6)) {
    const x = scale(t);
    parts.push(el("line", { x1: x, x2: x, y1: y0, y2: y0 + 5, stroke: "black" }));
    parts.push(text(x, y0 + 18, fmtTick(t), { "text-anchor": "middle" }));
  }
  parts.push(
    text((frame.margin.left + frame.width - frame.margin.right) / 2, frame.height - 10,
         label, { "text-anchor": "middle" })
  );
  return parts.join("\n");
}

export function yAxis(
  scale: ScaleContinuousNumeric<number, number>,
  frame: Frame,
  label: string,
  ticks?: number[]
): string {
  const x0 = frame.margin.left;
  const parts = [
    el("line", {
      x1: x0, x2: x0, y1: frame.margin.top,
      y2: frame.height - frame.margin.bottom, stroke: "black",
    }),
  ];
  for (const t of ticks ?? scale.ticks(6)) {
    const y = scale(t);
    parts.push(el("line", { x1: x0 - 5, x2: x0, y1: y, y2: y, stroke: "black" }));
    parts.push(text(x0 - 8, y + 4, fmtTick(t), { "text-anchor": "end" }));
  }
  parts.push(
    el(
      "g",
      { transform: `translate(14, ${(frame.margin.top + frame.height - frame.margin.bottom) / 2}) rotate(-90)` },
      text(0, 0, label, { "text-anchor": "middle" })
    )
  );
  return parts.join("\n");
}

export function document(frame: Frame, title: string, body: string[]): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${frame.width}" height="${frame.height}" viewBox="0 0 ${frame.width} ${frame.height}">`,
    el("rect", { x: 0, y: 0, width: frame.width, height: frame.height, fill: "white" }),
    text(frame.width / 2, 24, title, { "text-anchor": "middle", "font-size": 15 }),
    ...body,
    "</svg>",
  ].join("\n");
}

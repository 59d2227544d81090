import { scaleLog } from "d3-scale";
import { CsvTable, numericColumns } from "./csv";
import { DEFAULT_FRAME, document, el, text, xAxis, yAxis } from "./svg";

/** Least-squares slope of log(y) against log(x). */
export function fittedLogLogSlope(xs: number[], ys: number[]): number | undefined {
  const pts = xs
    .map((x, i) => [Math.log(x), Math.log(ys[i])])
    .filter(([a, b]) => Number.isFinite(a) && Number.isFinite(b));
  if (pts.length < 2) return undefined;
  const mx = pts.reduce((s, p) => s + p[0], 0) / pts.length;
  const my = pts.reduce((s, p) => s + p[1], 0) / pts.length;
  let num = 0;
  let den = 0;
  for (const [a, b] of pts) {
    num += (a - mx) * (b - my);
    den += (a - mx) * (a - mx);
  }
  return den > 0 ? num / den : undefined;
}

/**
 * Mean-field convergence figure: bounded-Lipschitz distance and mean
 * weak-form residual against N on log-log axes, with a -1/2 slope guide
 * and the fitted residual slope annotated.
 */
export function convergenceSvg(table: CsvTable, file = "convergence.csv"): string {
  const cols = numericColumns(table, ["N", "bl_distance", "w_residual"], file);
  const N = cols["N"];
  const frame = DEFAULT_FRAME;

  const values = [...cols["bl_distance"], ...cols["w_residual"]].filter(
    (v) => Number.isFinite(v) && v > 0
  );
  const xdom: [number, number] =
    N.length > 0 ? [Math.min(...N) / 1.5, Math.max(...N) * 1.5] : [10, 1000];
  const ydom: [number, number] =
    values.length > 0
      ? [Math.min(...values) / 2, Math.max(...values) * 2]
      : [1e-3, 1];
  const x = scaleLog().domain(xdom).range([frame.margin.left, frame.width - frame.margin.right]);
  const y = scaleLog().domain(ydom).range([frame.height - frame.margin.bottom, frame.margin.top]);

  const body: string[] = [];

  // -1/2 slope guide through the plot center
  const cx = Math.sqrt(xdom[0] * xdom[1]);
  const cy = Math.sqrt(ydom[0] * ydom[1]);
  const guide = (n: number) => cy * Math.sqrt(cx / n);
  body.push(
    el("line", {
      x1: x(xdom[0]), y1: y(guide(xdom[0])),
      x2: x(xdom[1]), y2: y(guide(xdom[1])),
      stroke: "gray", "stroke-dasharray": "6 4", class: "guide-line",
    })
  );
  body.push(text(x(cx), y(guide(cx)) - 8, "slope -1/2", { fill: "gray" }));

  const series: [string, string, string][] = [
    ["bl_distance", "crimson", "bl-point"],
    ["w_residual", "steelblue", "w-point"],
  ];
  for (const [name, color, cls] of series) {
    const pts = N.map((n, i) => [n, cols[name][i]]).filter(
      ([a, b]) => Number.isFinite(a) && Number.isFinite(b) && b > 0
    );
    for (const [n, v] of pts) {
      body.push(el("circle", { cx: x(n), cy: y(v), r: 5, fill: color, class: cls }));
    }
    if (pts.length > 1) {
      const d = pts.map(([n, v], i) => `${i ? "L" : "M"}${x(n)},${y(v)}`).join(" ");
      body.push(el("path", { d, fill: "none", stroke: color }));
    }
  }

  const slope = fittedLogLogSlope(N, cols["w_residual"]);
  if (slope !== undefined) {
    body.push(
      text(frame.width - 230, 44, `fitted |W| slope: ${slope.toFixed(3)}`, {
        class: "slope-annotation",
      })
    );
  }
  body.push(el("circle", { cx: frame.width - 245, cy: 58, r: 5, fill: "crimson" }));
  body.push(text(frame.width - 235, 62, "BL distance to PDE"));
  body.push(el("circle", { cx: frame.width - 245, cy: 74, r: 5, fill: "steelblue" }));
  body.push(text(frame.width - 235, 78, "mean |W| residual"));

  body.push(xAxis(x, frame, "N (particles)", N.length ? N : undefined));
  body.push(yAxis(y, frame, "distance / residual"));
  return document(frame, "Mean-field convergence", body);
}

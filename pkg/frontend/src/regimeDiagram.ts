import { scaleLinear } from "d3-scale";
import { CsvTable, numericColumns } from "./csv";
import { DEFAULT_FRAME, document, el, text, xAxis, yAxis } from "./svg";

/**
 * Two-particle regime diagram: frozen and post-hit separation fractions
 * against gamma/sigma^2, with the regime boundaries at 1/2 (weak solution
 * ends) and 1 (sticky collisions begin) drawn as vertical reference lines.
 */
export function regimeDiagramSvg(table: CsvTable, file = "collisions.csv"): string {
  const cols = numericColumns(
    table,
    ["gamma_over_sigma2", "frozen_fraction", "separation_fraction"],
    file
  );
  const g = cols["gamma_over_sigma2"];
  const frame = DEFAULT_FRAME;

  const xmax = Math.max(1.5, ...g.filter(Number.isFinite)) * 1.1;
  const x = scaleLinear()
    .domain([0, xmax])
    .range([frame.margin.left, frame.width - frame.margin.right]);
  const y = scaleLinear()
    .domain([0, 1.05])
    .range([frame.height - frame.margin.bottom, frame.margin.top]);

  const body: string[] = [];
  for (const ref of [0.5, 1.0]) {
    body.push(
      el("line", {
        x1: x(ref), x2: x(ref), y1: y(1.05), y2: y(0),
        stroke: "gray", "stroke-dasharray": "6 4", class: "reference-line",
        "data-ref": ref,
      })
    );
    body.push(text(x(ref) + 4, frame.margin.top + 12,
                   ref === 0.5 ? "g/s2 = 1/2" : "g/s2 = 1", { fill: "gray" }));
  }

  g.forEach((gv, i) => {
    const frozen = cols["frozen_fraction"][i];
    const sep = cols["separation_fraction"][i];
    if (Number.isFinite(gv) && Number.isFinite(frozen)) {
      body.push(
        el("circle", {
          cx: x(gv), cy: y(frozen), r: frozen > 0 ? 6 : 4,
          fill: "crimson", class: "frozen-point",
        })
      );
    }
    if (Number.isFinite(gv) && Number.isFinite(sep)) {
      body.push(
        el("rect", {
          x: x(gv) - 4, y: y(sep) - 4, width: 8, height: 8,
          fill: "steelblue", class: "separation-point",
        })
      );
    }
  });

  body.push(el("circle", { cx: frame.width - 190, cy: 40, r: 5, fill: "crimson" }));
  body.push(text(frame.width - 180, 44, "frozen fraction"));
  body.push(el("rect", { x: frame.width - 195, y: 52, width: 8, height: 8, fill: "steelblue" }));
  body.push(text(frame.width - 180, 61, "separation fraction"));

  body.push(xAxis(x, frame, "gamma / sigma^2"));
  body.push(yAxis(y, frame, "fraction of paths"));
  return document(frame, "Two-particle collision regimes", body);
}

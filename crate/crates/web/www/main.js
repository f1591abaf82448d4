// Built with `wasm-pack build crates/web --target web --out-dir www/pkg`.
import init, { sampleBenchmark, modelMetrics, verifyModel } from "./pkg/scmbench_web.js";

const $ = (id) => document.getElementById(id);

function show(value) {
  $("status").textContent = "";
  $("output").textContent = typeof value === "string" ? value : JSON.stringify(value, null, 2);
}

function fail(err) {
  $("status").className = "error";
  $("status").textContent = String(err);
}

function run(label, f) {
  $("status").className = "";
  $("status").textContent = label + "...";
  // let the status paint before the synchronous wasm call
  setTimeout(() => {
    try {
      f();
    } catch (err) {
      fail(err);
    }
  }, 10);
}

function seed() {
  return BigInt($("seed").value || 0);
}

// Nodes on a circle, hidden ones dashed; directed edges of the full model.
function drawGraph(result) {
  const svg = $("graph");
  const n = result.cardinalities.length;
  const hidden = new Set(result.hidden);
  const w = svg.width.baseVal.value, h = svg.height.baseVal.value;
  const pos = [...Array(n).keys()].map((i) => {
    const a = (2 * Math.PI * i) / n - Math.PI / 2;
    return [w / 2 + 90 * Math.cos(a), h / 2 + 90 * Math.sin(a)];
  });
  let body = '<defs><marker id="arrow" viewBox="0 0 10 10" refX="22" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z"/></marker></defs>';
  for (const [a, b] of result.edges) {
    body += `<line x1="${pos[a][0]}" y1="${pos[a][1]}" x2="${pos[b][0]}" y2="${pos[b][1]}" stroke="#333" marker-end="url(#arrow)"/>`;
  }
  pos.forEach(([x, y], i) => {
    const dash = hidden.has(i) ? ' stroke-dasharray="3,3"' : "";
    body += `<circle cx="${x}" cy="${y}" r="14" fill="#eef" stroke="#336"${dash}/>`;
    body += `<text x="${x}" y="${y + 4}" text-anchor="middle" font-size="11">V${i}</text>`;
  });
  svg.innerHTML = body;
  svg.hidden = false;
}

await init();

$("sample").onclick = () =>
  run("Sampling", () => {
    const result = JSON.parse(sampleBenchmark($("soi").value, seed(), 10));
    drawGraph(result);
    show({
      columns: result.columns,
      first_rows: result.rows,
      queries: result.queries,
      projected_graph: result.graph,
    });
  });

$("metrics").onclick = () =>
  run("Computing metrics", () => show(JSON.parse(modelMetrics($("soi").value, seed()))));

$("verify").onclick = () =>
  run("Verifying", () => {
    const samples = Number($("samples").value) || 5000;
    show(JSON.parse(verifyModel($("soi").value, seed(), $("level").value, samples)));
  });

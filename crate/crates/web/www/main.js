import init, { SimulationDemo, separatingLoss, dciScores } from "./pkg/relfeed_web.js";

const $ = (id) => document.getElementById(id);
let demo = null;

function attrs(tile) {
  return Object.entries(tile.attributes).map(([k, v]) => `${k}=${v}`).join("<br>");
}

function render(round) {
  const similar = new Set(round.similar);
  $("sim-batch").innerHTML = round.shown
    .map((t) => {
      const cls = t.is_target ? "tile target" : similar.has(t.id) ? "tile similar" : "tile";
      return `<div class="${cls}"><b>${t.id}</b><br>sim ${t.similarity.toFixed(3)}<br>${attrs(t)}</div>`;
    })
    .join("");
  let status = `iteration ${round.iteration}, threshold ${round.threshold.toFixed(3)}, ${round.similar.length} marked similar`;
  if (round.loss !== null) status += `, loss ${round.loss.toFixed(4)}`;
  if (round.done) status += round.converged ? " (target found)" : " (gave up)";
  $("sim-status").textContent = status;
  $("sim-step").disabled = $("sim-run").disabled = round.done;
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    out.textContent = `error: ${e.message ?? e}`;
  }
}

await init();

$("sim-start").onclick = () =>
  guard($("sim-status"), () => {
    demo?.free();
    demo = new SimulationDemo(
      Number($("sim-n").value),
      Number($("sim-attrs").value),
      Number($("sim-noise").value),
      $("sim-alg").value,
      BigInt($("sim-seed").value),
    );
    const t = JSON.parse(demo.target());
    $("sim-target").innerHTML = `<div class="tile target"><b>target ${t.id}</b><br>${attrs(t)}</div>`;
    $("sim-batch").innerHTML = "";
    $("sim-status").textContent = "ready";
    $("sim-step").disabled = $("sim-run").disabled = false;
  });

$("sim-step").onclick = () => guard($("sim-status"), () => render(JSON.parse(demo.step())));

$("sim-run").onclick = () =>
  guard($("sim-status"), () => {
    let round;
    while (!demo.done) round = JSON.parse(demo.step());
    if (round) render(round);
  });

$("loss-run").onclick = () =>
  guard($("loss-out"), () => {
    const r = JSON.parse(
      separatingLoss($("loss-s").value, $("loss-d").value, Number($("loss-tau").value), $("loss-sym").checked),
    );
    $("loss-out").textContent = JSON.stringify(r, null, 2);
  });

$("dci-run").onclick = () =>
  guard($("dci-out"), () => {
    $("dci-out").textContent = JSON.stringify(JSON.parse(dciScores($("dci-in").value)), null, 2);
  });

import init, { validatePlan, rankAgents, traceNode, samples } from "./pkg/coordkit_web.js";

const $ = (id) => document.getElementById(id);

function show(el, text, failed = false) {
  el.textContent = text;
  el.className = failed ? "err" : "";
}

function attempt(el, fn) {
  try {
    fn();
  } catch (e) {
    show(el, String(e.message ?? e), true);
  }
}

await init();
const sample = JSON.parse(samples());

function resetPlan() {
  $("strategy").value = JSON.stringify(sample.strategy, null, 2);
}

function validate() {
  attempt($("validation"), () => {
    const { report, outline } = JSON.parse(validatePlan($("strategy").value));
    const names = Object.fromEntries(outline.objects.map((o) => [o.id, o.name]));
    const lines = outline.tasks.map((t) => {
      const ins = outline.edges.filter((e) => e.taskId === t.id && e.kind === "input").map((e) => names[e.objectId]);
      const out = outline.edges.find((e) => e.taskId === t.id && e.kind === "output");
      return `${t.index + 1}. ${t.stepName}  [${ins.join(", ") || "-"}] -> ${names[out.objectId]}`;
    });
    const issues = [...report.errors.map((i) => `error ${i.code} at ${i.path}: ${i.message}`),
                    ...report.warnings.map((i) => `warning ${i.code} at ${i.path}: ${i.message}`)];
    show($("validation"), [report.errors.length ? "INVALID" : "valid", ...issues, "", ...lines].join("\n"),
         report.errors.length > 0);
  });
}

function renderAspects() {
  const box = $("aspects");
  for (const name of sample.ranking.scores.aspects) {
    const label = document.createElement("label");
    const input = document.createElement("input");
    input.type = "checkbox";
    input.value = name;
    input.checked = sample.ranking.selected.includes(name);
    label.append(input, " ", name);
    box.append(label);
  }
}

function rank() {
  attempt($("ranking"), () => {
    const selected = [...$("aspects").querySelectorAll("input:checked")].map((i) => i.value);
    const rows = JSON.parse(rankAgents(JSON.stringify({ ...sample.ranking, selected })));
    const table = document.createElement("table");
    table.innerHTML = "<tr><th>#</th><th>agent</th><th>mean</th><th></th></tr>";
    rows.forEach((r, i) => {
      const tr = table.insertRow();
      for (const cell of [i + 1, sample.names[r.agentId] ?? r.agentId, r.mean.toFixed(2), r.assigned ? "on team" : ""]) {
        tr.insertCell().textContent = cell;
      }
    });
    $("ranking").className = "";
    $("ranking").replaceChildren(table);
  });
}

function trace() {
  attempt($("traced"), () => {
    const out = JSON.parse(traceNode($("strategy").value, $("node").value));
    const value = out.objectValues[out.node];
    show($("traced"), [
      `${out.node}${value ? ` = ${value}` : ""}`,
      `depends on ${out.predecessors.length} of ${out.nodes.length} nodes:`,
      ...out.predecessors.map((p) => `  ${p}`),
    ].join("\n"));
  });
}

resetPlan();
renderAspects();
$("validate").onclick = validate;
$("reset").onclick = () => { resetPlan(); validate(); };
$("rank").onclick = rank;
$("trace").onclick = trace;
validate();
rank();

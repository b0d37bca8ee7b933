import init, { fimTransform, infill, assignSecondaryStructure } from "./pkg/infill_wasm.js";

const $ = (id) => document.getElementById(id);

function escape(s) {
  return s.replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);
}

function show(id, html) {
  $(id).innerHTML = html;
}

function fail(id, err) {
  show(id, `<span class="error">${escape(String(err.message ?? err))}</span>`);
}

function runFim() {
  try {
    const r = JSON.parse(fimTransform($("fim-seq").value, Number($("fim-seed").value) >>> 0));
    show(
      "fim-out",
      `span start ${r.span.start}, length ${r.span.len}\n\n` +
        `<span class="pre">${r.prefix}</span><span class="mid">${r.middle}</span><span class="suf">${r.suffix}</span>\n\n` +
        `${escape(r.rendered)}`,
    );
  } catch (e) {
    fail("fim-out", e);
  }
}

function runFill() {
  try {
    const r = JSON.parse(
      infill(
        $("fill-prefix").value,
        $("fill-suffix").value,
        Number($("fill-len").value) >>> 0,
        Number($("fill-k").value) >>> 0,
        Number($("fill-seed").value) >>> 0,
        $("fill-gen").value,
      ),
    );
    const pre = escape($("fill-prefix").value.trim().toUpperCase());
    const suf = escape($("fill-suffix").value.trim().toUpperCase());
    const lines = r.candidates.map(
      (c, i) => `${String(i + 1).padStart(2)}  <span class="pre">${pre}</span><span class="mid">${c}</span><span class="suf">${suf}</span>`,
    );
    show("fill-out", `${r.generator}\n` + lines.join("\n"));
  } catch (e) {
    fail("fill-out", e);
  }
}

function colour(ss3) {
  return [...ss3].map((c) => `<span class="${c}">${c}</span>`).join("");
}

function runSs() {
  try {
    const r = JSON.parse(assignSecondaryStructure($("ss-text").value));
    const blocks = r.chains.map((c) => {
      const n = c.ss3.length || 1;
      const pct = (x) => ((100 * c.counts[x]) / n).toFixed(1);
      return (
        `chain ${escape(c.chain_id)}: ${c.ss8.length} residues, H ${pct("H")}%, E ${pct("E")}%, C ${pct("C")}%\n` +
        `seq ${escape(c.sequence)}\nss8 ${escape(c.ss8)}\nss3 ${colour(c.ss3)}`
      );
    });
    show("ss-out", `${escape(r.entry || "structure")}\n\n` + blocks.join("\n\n"));
  } catch (e) {
    fail("ss-out", e);
  }
}

async function loadExample() {
  const res = await fetch("example.pdb");
  $("ss-text").value = await res.text();
}

async function main() {
  await init();
  $("status").textContent = "Ready. Everything runs locally in your browser.";
  $("fim-run").addEventListener("click", runFim);
  $("fill-run").addEventListener("click", runFill);
  $("ss-run").addEventListener("click", runSs);
  $("ss-example").addEventListener("click", loadExample);
  runFim();
  runFill();
}

main().catch((e) => {
  $("status").textContent = `Failed to load: ${e}`;
});

// Bootstrap: fetch the schema (with retry banner), build the studio, wire
// seed controls, ablation toggles, sweep panel, and the permalink.

import { SynthesisClient } from "./api.js";
import { StudioController } from "./controller.js";
import { StudioState } from "./state.js";
import { renderSliders, renderSweep, renderTriplet, retryBanner, toast } from "./ui.js";

const SERVICE_URL =
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8000";

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function boot(): Promise<void> {
  const client = new SynthesisClient(SERVICE_URL);
  const slidersRoot = byId("sliders");
  let schema;
  try {
    schema = await client.getSchema();
  } catch (err) {
    retryBanner(slidersRoot,
      `Cannot reach the synthesis service at ${SERVICE_URL}.`, () => void boot());
    return;
  }

  const state = new StudioState(schema, Math.floor(Math.random() * 2 ** 31));
  state.applyPermalink(location.hash);

  const controller = new StudioController(state, client, {
    onTriplet: (triplet) => {
      renderTriplet(byId("triplet"), triplet);
      (byId("seed-value") as HTMLElement).textContent = String(state.seed);
      history.replaceState(null, "", state.toPermalink());
    },
    onError: (message) => toast(message),
    onSweep: (sweep) => renderSweep(byId("sweep"), sweep),
  });

  renderSliders(slidersRoot, schema, controller);

  const lock = byId("seed-lock") as HTMLInputElement;
  lock.checked = state.seedLocked;
  lock.addEventListener("change", () => {
    state.seedLocked = lock.checked;
  });
  byId("seed-reroll").addEventListener("click", () => {
    controller.reroll();
    (byId("seed-value") as HTMLElement).textContent = String(state.seed);
  });

  for (const flag of ["skip_stage2", "no_attr_stage2", "no_attr_stage3"] as const) {
    const box = byId(`flag-${flag}`) as HTMLInputElement;
    box.addEventListener("change", () => controller.setAblation(flag, box.checked));
  }

  const sweepSelect = byId("sweep-attribute") as HTMLSelectElement;
  for (const name of schema.names) {
    const option = document.createElement("option");
    option.value = name;
    option.textContent = name;
    sweepSelect.appendChild(option);
  }
  byId("sweep-run").addEventListener("click", () => {
    void controller.requestSweep(sweepSelect.value);
  });

  (byId("seed-value") as HTMLElement).textContent = String(state.seed);
  void controller.requestSynthesis();
}

void boot();

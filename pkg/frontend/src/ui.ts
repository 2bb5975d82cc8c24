// DOM rendering: grouped sliders, stage triplet, sweep strip, toasts.

import { SchemaResponse, SweepResponse } from "./api.js";
import { StudioController } from "./controller.js";
import { SLIDER_MAX, SLIDER_MIN, SLIDER_STEP, Triplet } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

export function renderSliders(
  root: HTMLElement, schema: SchemaResponse, controller: StudioController,
): void {
  root.textContent = "";
  if (schema.names.length === 0) {
    root.appendChild(el("div", "error-panel", "Schema has no attributes."));
    return;
  }
  for (const [group, names] of [["texture", controller.state.texture()],
                                ["color", controller.state.color()]] as const) {
    const section = el("section", `group group-${group}`);
    section.appendChild(el("h3", "group-title", `${group} attributes`));
    for (const name of names) {
      const row = el("label", "slider-row");
      row.appendChild(el("span", "slider-name", name));
      const input = el("input", "slider");
      input.type = "range";
      input.min = String(SLIDER_MIN);
      input.max = String(SLIDER_MAX);
      input.step = String(SLIDER_STEP);
      input.value = String(controller.state.get(name));
      input.dataset.attribute = name;
      const valueLabel = el("span", "slider-value", input.value);
      input.addEventListener("input", () => {
        valueLabel.textContent = input.value;
        controller.onSliderChange(name, Number(input.value));
      });
      row.appendChild(input);
      row.appendChild(valueLabel);
      section.appendChild(row);
    }
    root.appendChild(section);
  }
}

export function renderTriplet(root: HTMLElement, triplet: Triplet): void {
  root.textContent = "";
  const stages: Array<[string, string]> = [
    ["coarse sketch", triplet.images.stage1],
    ["enhanced sketch", triplet.images.stage2],
    ["face", triplet.images.stage3],
  ];
  for (const [label, b64] of stages) {
    const cell = el("figure", "stage-cell");
    const img = el("img", "stage-image");
    img.width = 128;
    img.height = 128;
    img.src = pngSrc(b64);
    cell.appendChild(img);
    cell.appendChild(el("figcaption", "stage-label", label));
    root.appendChild(cell);
  }
}

export function renderSweep(root: HTMLElement, sweep: SweepResponse): void {
  root.textContent = "";
  root.appendChild(el("h3", "sweep-title", `${sweep.attribute} sweep (seed ${sweep.seed})`));
  const strip = el("div", "sweep-strip");
  sweep.images.forEach((b64, i) => {
    const cell = el("figure", "sweep-cell");
    const img = el("img", "sweep-image");
    img.width = 96;
    img.height = 96;
    img.src = pngSrc(b64);
    cell.appendChild(img);
    cell.appendChild(el("figcaption", "sweep-weight", sweep.weights[i].toFixed(1)));
    strip.appendChild(cell);
  });
  root.appendChild(strip);
}

export function toast(message: string): void {
  const node = el("div", "toast", message);
  document.body.appendChild(node);
  setTimeout(() => node.remove(), 4000);
}

export function retryBanner(root: HTMLElement, message: string, retry: () => void): void {
  root.textContent = "";
  const banner = el("div", "retry-banner");
  banner.appendChild(el("span", "retry-message", message));
  const button = el("button", "retry-button", "Retry");
  button.addEventListener("click", retry);
  banner.appendChild(button);
  root.appendChild(banner);
}

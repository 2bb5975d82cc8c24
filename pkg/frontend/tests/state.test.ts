import { describe, expect, it } from "vitest";

import type { SchemaResponse } from "../src/api.js";
import { StudioState } from "../src/state.js";

export function schemaFixture(): SchemaResponse {
  const texture = ["Bold", "Round", "Sharp", "Wide"];
  const color = ["Dark", "Pale"];
  const names = [...texture, ...color];
  return {
    names,
    groups: Object.fromEntries(
      names.map((n) => [n, texture.includes(n) ? "texture" : "color"]),
    ) as Record<string, "texture" | "color">,
    defaults: Object.fromEntries(names.map((n) => [n, 0])),
    texture,
    color,
    sweep_weights: [-1, -0.1, 0.1, 0.4, 0.7, 1],
  };
}

const triplet = (seed: number) => ({
  seed,
  images: { stage1: "a", stage2: "b", stage3: `c${seed}` },
});

describe("StudioState", () => {
  it("initializes sliders from schema defaults in schema order", () => {
    const state = new StudioState(schemaFixture(), 7);
    expect(state.names).toEqual(["Bold", "Round", "Sharp", "Wide", "Dark", "Pale"]);
    expect(state.texture()).toEqual(["Bold", "Round", "Sharp", "Wide"]);
    expect(state.color()).toEqual(["Dark", "Pale"]);
    expect(state.get("Bold")).toBe(0);
  });

  it("clamps slider values to [-1, 1] on a 0.1 grid", () => {
    const state = new StudioState(schemaFixture());
    state.set("Bold", 3.7);
    expect(state.get("Bold")).toBe(1);
    state.set("Bold", -2);
    expect(state.get("Bold")).toBe(-1);
    state.set("Bold", 0.4500001);
    expect(state.get("Bold")).toBe(0.5);
  });

  it("rejects unknown attributes", () => {
    const state = new StudioState(schemaFixture());
    expect(() => state.set("Nope", 0)).toThrow(/unknown/);
  });

  it("ignores stale responses (monotonic request ids)", () => {
    const state = new StudioState(schemaFixture());
    const early = state.beginRequest();
    const late = state.beginRequest();
    expect(state.applyResponse(late, triplet(2))).toBe(true);
    expect(state.applyResponse(early, triplet(1))).toBe(false);
    expect(state.lastTriplet?.images.stage3).toBe("c2");
  });

  it("permalink round-trips sliders and seed", () => {
    const state = new StudioState(schemaFixture(), 12345);
    state.set("Bold", 0.7);
    state.set("Pale", -0.3);
    const link = state.toPermalink();

    const restored = new StudioState(schemaFixture(), 0);
    expect(restored.applyPermalink(link)).toBe(true);
    expect(restored.seed).toBe(12345);
    expect(restored.get("Bold")).toBe(0.7);
    expect(restored.get("Pale")).toBe(-0.3);
    expect(restored.seedLocked).toBe(true);
    expect(restored.attributeMap()).toEqual(state.attributeMap());
  });

  it("rejects malformed permalinks", () => {
    const state = new StudioState(schemaFixture());
    expect(state.applyPermalink("")).toBe(false);
    expect(state.applyPermalink("#v=1_2&seed=0")).toBe(false); // wrong length
    expect(state.applyPermalink("#v=a_b_c_d_e_f&seed=0")).toBe(false);
  });
});

// Studio state: slider values, seed locking, last-write-wins response gating,
// and permalink round-tripping. No DOM here so it is unit-testable.

import type { SchemaResponse, StageImages } from "./api.js";

export const SLIDER_MIN = -1;
export const SLIDER_MAX = 1;
export const SLIDER_STEP = 0.1;

export interface Triplet {
  seed: number;
  images: StageImages;
}

export class StudioState {
  readonly names: string[];
  readonly groups: Record<string, "texture" | "color">;
  private values = new Map<string, number>();

  seed: number;
  seedLocked = true;
  lastTriplet: Triplet | null = null;
  pendingRequest = false;

  private nextRequestId = 1;
  private lastAppliedId = 0;

  constructor(schema: SchemaResponse, seed = 0) {
    this.names = [...schema.names];
    this.groups = { ...schema.groups };
    for (const name of this.names) {
      this.values.set(name, schema.defaults[name] ?? 0);
    }
    this.seed = seed;
  }

  get(name: string): number {
    const v = this.values.get(name);
    if (v === undefined) throw new Error(`unknown attribute: ${name}`);
    return v;
  }

  set(name: string, value: number): void {
    if (!this.values.has(name)) throw new Error(`unknown attribute: ${name}`);
    const clamped = Math.min(SLIDER_MAX, Math.max(SLIDER_MIN, value));
    this.values.set(name, Math.round(clamped * 10) / 10);
  }

  attributeMap(): Record<string, number> {
    return Object.fromEntries(this.values);
  }

  texture(): string[] {
    return this.names.filter((n) => this.groups[n] === "texture");
  }

  color(): string[] {
    return this.names.filter((n) => this.groups[n] === "color");
  }

  rerollSeed(): number {
    this.seed = Math.floor(Math.random() * 2 ** 31);
    return this.seed;
  }

  // Monotonic request ids: a response may only be applied if no newer
  // response has already been shown.
  beginRequest(): number {
    this.pendingRequest = true;
    return this.nextRequestId++;
  }

  applyResponse(requestId: number, triplet: Triplet): boolean {
    if (requestId <= this.lastAppliedId) {
      return false; // stale
    }
    this.lastAppliedId = requestId;
    this.lastTriplet = triplet;
    this.pendingRequest = false;
    if (this.seedLocked === false) {
      this.seed = triplet.seed;
    }
    return true;
  }

  failRequest(requestId: number): void {
    if (requestId > this.lastAppliedId) {
      this.pendingRequest = false;
    }
  }

  toPermalink(): string {
    const params = new URLSearchParams();
    params.set("seed", String(this.seed));
    params.set("v", this.names.map((n) => String(this.get(n))).join("_"));
    return `#${params.toString()}`;
  }

  applyPermalink(hash: string): boolean {
    const raw = hash.startsWith("#") ? hash.slice(1) : hash;
    if (!raw) return false;
    const params = new URLSearchParams(raw);
    const seed = params.get("seed");
    const values = params.get("v");
    if (seed === null || values === null) return false;
    const parts = values.split("_").map(Number);
    if (parts.length !== this.names.length || parts.some((p) => Number.isNaN(p))) {
      return false;
    }
    this.names.forEach((name, i) => this.set(name, parts[i]));
    this.seed = Number(seed);
    this.seedLocked = true;
    return true;
  }
}

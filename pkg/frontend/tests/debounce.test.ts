import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { Debouncer, SingleFlight } from "../src/debounce.js";

describe("Debouncer", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("collapses a rapid burst into one trailing call", () => {
    const d = new Debouncer(150);
    const fn = vi.fn();
    for (let i = 0; i < 10; i++) d.schedule(fn);
    expect(fn).not.toHaveBeenCalled();
    vi.advanceTimersByTime(150);
    expect(fn).toHaveBeenCalledTimes(1);
  });

  it("resets the window on each schedule", () => {
    const d = new Debouncer(150);
    const fn = vi.fn();
    d.schedule(fn);
    vi.advanceTimersByTime(100);
    d.schedule(fn);
    vi.advanceTimersByTime(100);
    expect(fn).not.toHaveBeenCalled();
    vi.advanceTimersByTime(50);
    expect(fn).toHaveBeenCalledTimes(1);
  });

  it("cancel suppresses the pending call", () => {
    const d = new Debouncer(150);
    const fn = vi.fn();
    d.schedule(fn);
    d.cancel();
    vi.advanceTimersByTime(500);
    expect(fn).not.toHaveBeenCalled();
    expect(d.pending).toBe(false);
  });
});

describe("SingleFlight", () => {
  it("keeps at most one task in flight and runs only the latest queued", async () => {
    const flight = new SingleFlight();
    const order: string[] = [];
    let release!: () => void;
    const gate = new Promise<void>((resolve) => (release = resolve));

    const first = flight.run(async () => {
      order.push("first-start");
      await gate;
      order.push("first-end");
    });
    // queued while busy; only the latest of these survives
    void flight.run(async () => order.push("dropped"));
    void flight.run(async () => order.push("latest"));
    expect(flight.busy).toBe(true);

    release();
    await first;
    await new Promise((r) => setTimeout(r, 0));
    expect(order).toEqual(["first-start", "first-end", "latest"]);
  });
});

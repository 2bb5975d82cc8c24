// Glue between the studio state and the service client: debounced synthesis,
// seed control, ablation toggles, sweeps. DOM-free for testability.

import { AblationFlags, SynthesisClient, SweepResponse } from "./api.js";
import { Debouncer, SingleFlight } from "./debounce.js";
import { StudioState, Triplet } from "./state.js";

export const DEBOUNCE_MS = 150;

export interface ControllerEvents {
  onTriplet?: (t: Triplet) => void;
  onError?: (message: string) => void;
  onSweep?: (s: SweepResponse) => void;
}

export class StudioController {
  readonly ablation: AblationFlags = {};
  private debouncer: Debouncer;
  private flight = new SingleFlight();

  constructor(
    public state: StudioState,
    private client: SynthesisClient,
    private events: ControllerEvents = {},
    debounceMs: number = DEBOUNCE_MS,
  ) {
    this.debouncer = new Debouncer(debounceMs);
  }

  onSliderChange(name: string, value: number): void {
    this.state.set(name, value);
    this.debouncer.schedule(() => void this.requestSynthesis());
  }

  setAblation(flag: keyof AblationFlags, on: boolean): void {
    this.ablation[flag] = on;
    this.debouncer.schedule(() => void this.requestSynthesis());
  }

  reroll(): void {
    this.state.rerollSeed();
    this.debouncer.schedule(() => void this.requestSynthesis());
  }

  async requestSynthesis(): Promise<void> {
    await this.flight.run(async () => {
      const requestId = this.state.beginRequest();
      const seed = this.state.seedLocked ? this.state.seed : undefined;
      try {
        const resp = await this.client.synthesize(
          this.state.attributeMap(), seed, this.ablation,
        );
        const triplet = { seed: resp.seed, images: resp.images };
        if (this.state.applyResponse(requestId, triplet)) {
          this.state.seed = resp.seed;
          this.events.onTriplet?.(triplet);
        }
      } catch (err) {
        this.state.failRequest(requestId);
        this.events.onError?.(err instanceof Error ? err.message : String(err));
      }
    });
  }

  async requestSweep(attribute: string): Promise<void> {
    try {
      const resp = await this.client.sweep(
        attribute, this.state.attributeMap(), this.state.seed,
      );
      this.events.onSweep?.(resp);
    } catch (err) {
      this.events.onError?.(err instanceof Error ? err.message : String(err));
    }
  }
}

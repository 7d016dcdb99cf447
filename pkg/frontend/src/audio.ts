// Contact cue sonification: distinct tones for contact made and lost, with
// a visual flash fallback when audio is unavailable or muted.

export interface TonePlayer {
  play(frequency: number, durationMs: number): void;
}

const CUE_TONES: Record<string, number> = {
  contact_made: 880,
  contact_lost: 440,
};

export class CuePlayer {
  muted = false;
  flashUntilMs = 0;

  constructor(private player: TonePlayer | null) {}

  /** Plays each cue in order; returns the number of tones emitted. */
  playCues(cues: string[], nowMs: number): number {
    let played = 0;
    for (const cue of cues) {
      const freq = CUE_TONES[cue];
      if (freq === undefined) continue;
      if (this.player && !this.muted) {
        this.player.play(freq, 80);
        played += 1;
      } else {
        this.flashUntilMs = nowMs + 150;
      }
    }
    return played;
  }
}

export function webAudioPlayer(): TonePlayer | null {
  const Ctx = (globalThis as { AudioContext?: new () => AudioContext }).AudioContext;
  if (!Ctx) return null;
  const context = new Ctx();
  return {
    play(frequency: number, durationMs: number) {
      const osc = context.createOscillator();
      const gain = context.createGain();
      osc.frequency.value = frequency;
      gain.gain.value = 0.12;
      osc.connect(gain).connect(context.destination);
      osc.start();
      osc.stop(context.currentTime + durationMs / 1000);
    },
  };
}

// Optional WebAudio preview of the event stream: simple per-channel
// oscillator voices, pitch bend, channel volume and a lowpass driven by
// CC#74. Off by default; nothing else depends on it.

import type { EventReport } from "./protocol.js";

interface Voice {
  osc: OscillatorNode;
  gain: GainNode;
  note: number;
}

export class AudioPreview {
  private ctx: AudioContext | null = null;
  private voices = new Map<string, Voice>();
  private channelGain = new Map<number, GainNode>();
  private channelBend = new Map<number, number>();
  private channelFilter = new Map<number, BiquadFilterNode>();
  enabled = false;

  toggle(): boolean {
    this.enabled = !this.enabled;
    if (this.enabled && !this.ctx) {
      this.ctx = new AudioContext();
    }
    if (!this.enabled) this.allOff();
    return this.enabled;
  }

  private channelChain(ch: number): { gain: GainNode; filter: BiquadFilterNode } {
    const ctx = this.ctx!;
    let gain = this.channelGain.get(ch);
    let filter = this.channelFilter.get(ch);
    if (!gain || !filter) {
      gain = ctx.createGain();
      gain.gain.value = 0.12;
      filter = ctx.createBiquadFilter();
      filter.type = "lowpass";
      filter.frequency.value = 8000;
      gain.connect(filter).connect(ctx.destination);
      this.channelGain.set(ch, gain);
      this.channelFilter.set(ch, filter);
    }
    return { gain, filter };
  }

  private midiHz(note: number, bend: number): number {
    return 440 * Math.pow(2, (note - 69 + bend) / 12);
  }

  handle(events: EventReport[]): void {
    if (!this.enabled || !this.ctx) return;
    for (const ev of events) {
      const key = `${ev.ch}:${ev.d1}`;
      if (ev.kind === "NoteOn") {
        const { gain } = this.channelChain(ev.ch);
        const osc = this.ctx.createOscillator();
        osc.type = ev.ch <= 4 ? "triangle" : "sawtooth";
        const bend = this.channelBend.get(ev.ch) ?? 0;
        osc.frequency.value = this.midiHz(ev.d1, bend);
        const vGain = this.ctx.createGain();
        vGain.gain.value = (ev.d2 / 127) * 0.5;
        osc.connect(vGain).connect(gain);
        osc.start();
        this.voices.get(key)?.osc.stop();
        this.voices.set(key, { osc, gain: vGain, note: ev.d1 });
      } else if (ev.kind === "NoteOff") {
        const voice = this.voices.get(key);
        if (voice) {
          voice.osc.stop(this.ctx.currentTime + 0.03);
          this.voices.delete(key);
        }
      } else if (ev.kind === "PitchBend") {
        const semitones = ((ev.d2 * 128 + ev.d1) - 8192) / 8192 * 2;
        this.channelBend.set(ev.ch, semitones);
        for (const [k, v] of this.voices) {
          if (k.startsWith(`${ev.ch}:`)) {
            v.osc.frequency.value = this.midiHz(v.note, semitones);
          }
        }
      } else if (ev.kind === "ControlChange") {
        if (ev.d1 === 7) {
          this.channelChain(ev.ch).gain.gain.value = 0.02 + (ev.d2 / 127) * 0.2;
        } else if (ev.d1 === 74) {
          this.channelChain(ev.ch).filter.frequency.value =
            200 + (ev.d2 / 127) * 9000;
        }
      }
    }
  }

  allOff(): void {
    for (const v of this.voices.values()) v.osc.stop();
    this.voices.clear();
  }
}

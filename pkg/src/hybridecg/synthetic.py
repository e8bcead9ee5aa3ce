"""Synthetic single-lead ECG records with annotated beats of all five classes.

Beats are sums of Gaussian waves (P, Q, R, S, T) whose shape and timing
depend on the beat class: supraventricular beats come early with a normal
QRS, ventricular beats are wide with a compensatory pause, fusion beats sit
between the two, and paced beats carry a pacing spike. Useful for demos and
tests; not a physiological model.
"""

from __future__ import annotations

import numpy as np

from .beats import AamiClass
from .wfdb_io import DEFAULT_GAIN, AnnotationEvent, EcgRecord, RecordHeader, SignalSpec, SYMBOL_CODES

FS = 360.0

# (amplitude mV, centre s relative to R, width s)
_WAVES = {
    AamiClass.N: [(0.15, -0.20, 0.025), (-0.10, -0.03, 0.010), (1.20, 0.0, 0.012),
                  (-0.25, 0.03, 0.010), (0.30, 0.25, 0.050)],
    AamiClass.S: [(-0.10, -0.14, 0.020), (-0.08, -0.03, 0.010), (1.10, 0.0, 0.012),
                  (-0.30, 0.03, 0.010), (0.25, 0.22, 0.045)],
    AamiClass.V: [(-0.20, -0.04, 0.020), (1.60, 0.0, 0.035), (-0.60, 0.07, 0.030),
                  (-0.40, 0.30, 0.070)],
    AamiClass.F: [(0.08, -0.18, 0.025), (-0.10, -0.03, 0.015), (1.40, 0.0, 0.022),
                  (-0.40, 0.05, 0.020), (0.05, 0.27, 0.060)],
    AamiClass.Q: [(0.90, -0.06, 0.002), (-0.30, -0.02, 0.015), (1.00, 0.02, 0.030),
                  (-0.50, 0.08, 0.030), (0.35, 0.30, 0.060)],
}
_SYMBOL = {AamiClass.N: "N", AamiClass.S: "A", AamiClass.V: "V", AamiClass.F: "F", AamiClass.Q: "/"}
# (pre-RR factor, post-RR factor) relative to the running base interval
_TIMING = {AamiClass.N: (1.0, 1.0), AamiClass.S: (0.70, 1.15), AamiClass.V: (0.65, 1.40),
           AamiClass.F: (0.90, 1.10), AamiClass.Q: (1.0, 1.0)}

DEFAULT_MIX = (0.80, 0.06, 0.07, 0.03, 0.04)


def beat_waveform(cls: AamiClass, t: np.ndarray, scale: float = 1.0, jitter=None) -> np.ndarray:
    """Waveform of one beat evaluated at times ``t`` (seconds from its R peak)."""
    out = np.zeros_like(t, dtype=np.float64)
    for j, (amp, centre, width) in enumerate(_WAVES[cls]):
        if jitter is not None:
            amp *= 1 + jitter[j, 0]
            centre += jitter[j, 1]
            width *= 1 + jitter[j, 2]
        out += scale * amp * np.exp(-0.5 * ((t - centre) / width) ** 2)
    return out


def make_record(name: str, n_beats: int = 600, mix=DEFAULT_MIX, seed: int = 0, fs: float = FS,
                noise_mv: float = 0.01, lead_name: str = "MLII") -> EcgRecord:
    """A synthetic record of about ``n_beats`` beats, quantised to 12-bit ADC units."""
    rng = np.random.default_rng(seed)
    mix = np.asarray(mix, dtype=np.float64) / np.sum(mix)
    base_rr = rng.uniform(0.65, 1.0)
    scale = rng.uniform(0.8, 1.2)
    classes = rng.choice(len(AamiClass), size=n_beats, p=mix)

    times = [0.6]
    next_factor = 1.0
    for i in range(1, n_beats):
        cls = AamiClass(classes[i])
        pre, post = _TIMING[cls]
        rr = base_rr * next_factor * (pre if next_factor == 1.0 else 1.0)
        rr *= 1 + 0.03 * rng.standard_normal()
        times.append(times[-1] + max(rr, 0.3))
        next_factor = post
    duration = times[-1] + 0.8
    n = int(duration * fs)
    t = np.arange(n) / fs
    signal = 0.05 * np.sin(2 * np.pi * 0.25 * t + rng.uniform(0, 2 * np.pi))
    r_samples = []
    for i, tr in enumerate(times):
        cls = AamiClass(classes[i])
        r = int(round(tr * fs))
        r_samples.append(r)
        lo, hi = max(0, r - int(0.5 * fs)), min(n, r + int(0.6 * fs))
        jitter = rng.normal(0, [0.08, 0.004, 0.08], size=(len(_WAVES[cls]), 3))
        signal[lo:hi] += beat_waveform(cls, (np.arange(lo, hi) - r) / fs, scale, jitter)
    signal += noise_mv * rng.standard_normal(n)

    adc = np.clip(np.round(signal * DEFAULT_GAIN), -2048, 2047).astype(np.int16)[None, :]
    checksum = ((int(adc.astype(np.int64).sum()) + 32768) & 0xFFFF) - 32768
    spec = SignalSpec(f"{name}.dat", 212, DEFAULT_GAIN, 0, 12, 0, int(adc[0, 0]), checksum, 0, lead_name)
    header = RecordHeader(name, 1, fs, n, [spec])
    events = [AnnotationEvent(0, SYMBOL_CODES["+"], aux=b"(N")]
    events += [AnnotationEvent(r, SYMBOL_CODES[_SYMBOL[AamiClass(c)]]) for r, c in zip(r_samples, classes)]
    beats = [(e.sample_index, e.symbol_code) for e in events[1:]]
    physical = adc.astype(np.float64) / DEFAULT_GAIN
    return EcgRecord(header, physical, beats, adc, events)


def make_database(n_records: int = 6, n_beats: int = 600, seed: int = 0, mix=DEFAULT_MIX) -> list[EcgRecord]:
    seeds = np.random.SeedSequence(seed).spawn(n_records)
    return [make_record(f"{900 + i}", n_beats, mix, int(s.generate_state(1)[0])) for i, s in enumerate(seeds)]

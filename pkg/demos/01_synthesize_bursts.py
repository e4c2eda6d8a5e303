"""Generate one burst per protocol and look at what came out.

Writes each burst to an .iq capture next to a PNG of its envelope and
spectrum, then prints the numbers that distinguish the four formats.

Run:  python3 demos/01_synthesize_bursts.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from iqproto.capture import write_capture
from iqproto.signals import mean_power
from iqproto.waveforms import PROTOCOL_ORDER, BurstSpec, generate_burst

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out/synthesize")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)
    rows = []
    for proto in PROTOCOL_ORDER:
        spec = BurstSpec(proto)
        burst = generate_burst(spec, rng)
        path = OUT / f"{proto.label}.iq"
        write_capture(path, burst, {"protocols": [proto], "demo": "synthesize"})
        rows.append((proto.label, burst))
        print(f"{proto.label:12s} {len(burst):6d} samples @ {burst.sample_rate_hz/1e6:.0f} MHz, "
              f"mean power {mean_power(burst):.3f}, "
              f"peak/mean {np.abs(burst.samples).max()**2 / mean_power(burst):.1f}")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(len(rows), 2, figsize=(11, 2.2 * len(rows)))
    for (label, burst), (ax_t, ax_f) in zip(rows, axes):
        t_us = np.arange(len(burst)) / burst.sample_rate_hz * 1e6
        ax_t.plot(t_us, np.abs(burst.samples), lw=0.3)
        ax_t.set_ylabel(label, rotation=0, ha="right")
        ax_t.set_xlim(0, t_us[-1])
        # Welch-style averaged spectrum, 256-sample segments
        segs = burst.samples[: len(burst) // 256 * 256].reshape(-1, 256)
        psd = np.abs(np.fft.fftshift(np.fft.fft(segs * np.hanning(256), axis=1),
                                     axes=1)).mean(axis=0)
        freq = np.fft.fftshift(np.fft.fftfreq(256, 1 / burst.sample_rate_hz)) / 1e6
        ax_f.plot(freq, 20 * np.log10(psd / psd.max() + 1e-12), lw=0.8)
        ax_f.set_ylim(-50, 2)
    axes[0, 0].set_title("envelope vs time (us)")
    axes[0, 1].set_title("avg spectrum (dB vs MHz)")
    fig.tight_layout()
    fig.savefig(OUT / "bursts.png", dpi=110)
    print(f"\nwrote captures and bursts.png under {OUT}/")


if __name__ == "__main__":
    main()

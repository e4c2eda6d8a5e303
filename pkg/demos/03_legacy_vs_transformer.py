"""Put the preamble-correlation detector and the transformer on one grid.

The legacy detector matches known training-field templates and falls apart
once noise buries the correlation plateau; the learned classifier keeps
going well below that. Loads the checkpoint from demo 02 if present,
otherwise trains one first.

Run:  python3 demos/03_legacy_vs_transformer.py [out_dir]
"""

import subprocess
import sys
from pathlib import Path

import numpy as np

from iqproto.channel import ChannelModel
from iqproto.evaluation import report, snr_sweep
from iqproto.legacy import detection_table
from iqproto.model.checkpoint import load_model
from iqproto.tokenizer import TokenizationConfig
from iqproto.waveforms import PROTOCOL_ORDER, BurstSpec, generate_burst

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out/legacy_vs_transformer")
CKPT = Path("demo_out/train/small.ckpt")
CHANNELS = (ChannelModel.NONE, ChannelModel.RAYLEIGH)
SNRS = (-10.0, -5.0, 0.0, 5.0, 10.0, 20.0, 30.0)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    if not CKPT.exists():
        print("no checkpoint yet, running demo 02 first")
        subprocess.run([sys.executable, "demos/02_train_small_classifier.py"], check=True)
    params, model_config, classes, extra = load_model(CKPT)
    tok = TokenizationConfig(**extra["tokenizer"])

    rng = np.random.default_rng(3)
    test_pairs = [(generate_burst(BurstSpec(p), rng), p)
                  for p in PROTOCOL_ORDER for _ in range(4)]

    sweep = snr_sweep(params, model_config, tok, test_pairs, channels=CHANNELS,
                      snrs_db=SNRS, trials_per_point=200, seed=4,
                      model_id="transformer")
    legacy_rows = detection_table(np.random.default_rng(5), channels=CHANNELS,
                                  snrs_db=SNRS, trials_per_point=60)
    legacy = {(r["channel"], r["snr_db"]): r["accuracy"] for r in legacy_rows}

    print(f"{'channel':9s} {'SNR':>5s}  {'legacy':>7s}  {'transformer':>11s}")
    for pt in sweep.points:
        print(f"{pt.channel:9s} {pt.snr_db:5.0f}  "
              f"{legacy[(pt.channel, pt.snr_db)]:7.3f}  {pt.accuracy:11.3f}")

    report([sweep], OUT)
    print(f"\ncurves and CSV under {OUT}/")


if __name__ == "__main__":
    main()

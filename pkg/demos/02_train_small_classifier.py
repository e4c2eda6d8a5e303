"""Train the reduced-width transformer on a small synthetic dataset.

Twenty bursts per protocol, a dozen epochs, channel and noise augmentation
on the fly. Prints the learning curve, saves a checkpoint that the other
demos can reuse, and reports held-out accuracy on a compact grid.

Run:  python3 demos/02_train_small_classifier.py [out_dir]
"""

import sys
import time
from pathlib import Path

import numpy as np

from iqproto.channel import ChannelModel
from iqproto.evaluation import snr_sweep
from iqproto.model.checkpoint import save_model
from iqproto.model.training import AugmentConfig, SequenceDataset, TrainConfig, train
from iqproto.model.transformer import desk_model_config, param_count
from iqproto.tokenizer import TokenizationConfig
from iqproto.waveforms import PROTOCOL_ORDER, BurstSpec, generate_burst

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out/train")
TOK = TokenizationConfig(num_slices=24, slice_len=32)
# dense training windows: several start phases per burst position
TRAIN_TOK = TokenizationConfig(num_slices=24, slice_len=32, stride=256)


def make_pairs(rng, per_protocol):
    pairs = []
    for proto in PROTOCOL_ORDER:
        for _ in range(per_protocol):
            pairs.append((generate_burst(BurstSpec(proto), rng), proto))
    return pairs


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(42)
    train_pairs = make_pairs(rng, per_protocol=20)
    test_pairs = make_pairs(rng, per_protocol=3)

    augment = AugmentConfig(channels=(ChannelModel.NONE, ChannelModel.RAYLEIGH),
                            snr_range_db=(0.0, 30.0))
    dataset = SequenceDataset.from_signals(train_pairs, TRAIN_TOK, augment=augment)
    model_config = desk_model_config()
    print(f"{len(dataset.index)} training windows, "
          f"{param_count(model_config):,} model parameters")

    t0 = time.time()
    result = train(dataset, model_config,
                   TrainConfig(epochs=12, batch_size=122, learning_rate=1e-3,
                               seed=1, augment=augment, plateau_patience=3))
    print(f"trained in {time.time() - t0:.0f}s")
    for h in result.history:
        print(f"  epoch {h['epoch']:2d}  train loss {h['train_loss']:.3f}  "
              f"val loss {h['val_loss']:.3f}  val acc {h['val_acc']:.3f}")

    ckpt = OUT / "small.ckpt"
    save_model(ckpt, result.params, result.model_config, result.classes,
               extra={"tokenizer": {"num_slices": TOK.num_slices,
                                    "slice_len": TOK.slice_len}})
    print(f"checkpoint -> {ckpt}")

    sweep = snr_sweep(result.params, result.model_config, TOK, test_pairs,
                      channels=(ChannelModel.NONE, ChannelModel.RAYLEIGH),
                      snrs_db=(0.0, 10.0, 30.0), seed=2, model_id="small")
    print("\nheld-out accuracy:")
    for pt in sweep.points:
        print(f"  {pt.channel:9s} {pt.snr_db:5.0f} dB  {pt.accuracy:.3f}  "
              f"({pt.trials} windows)")


if __name__ == "__main__":
    main()

"""
Training a reduced network on synthetic patterns
================================================

A reduced-depth MobileNetV2 with the full classification head memorizes
40 striped 32x32 images. The same loop, at full depth and with the default
recipe, is what the CLI ``train`` command runs.
"""

import tempfile
from pathlib import Path

import numpy as np

from mrinet.data import CLASS_NAMES, save_png, scan_dataset
from mrinet.training import TrainConfig, evaluate, predict, train_model

root = Path(tempfile.mkdtemp())
yy, xx = np.mgrid[0:32, 0:32] / 32
for c, name in enumerate(CLASS_NAMES):
    theta = np.pi * c / 5
    for i in range(8):
        phase = np.random.default_rng([c, i]).uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (3 + c) * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        save_png(np.repeat((127.5 + 100 * wave)[..., None], 3, axis=2), root / name / f"{i}.png")

index = scan_dataset(root)
config = TrainConfig(model="mobilenetv2", depth="reduced", input_size=(32, 32),
                     learning_rate=1e-3, batch_size=8, epochs=25, augment=False)
result = train_model(config, index, out_dir=root / "run")
for row in result.history.rows[::5]:
    print(f"epoch {row.epoch:>2}  loss {row.train_loss:.4f}  acc {row.train_acc:.3f}")

print("eval accuracy:", evaluate(result.graph, index, config).accuracy)
print("prediction for", index.records[0][0])
for name, p in predict(result.graph, index.path(0), config):
    print(f"  {name:<10} {p:.4f}")
print("checkpoints:", sorted(p.name for p in (root / "run").glob("*.ckpt"))[-2:])

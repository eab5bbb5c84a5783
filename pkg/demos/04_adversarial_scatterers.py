"""Craft adversarial scatterers against a trained victim.

Trains a small victim on a reduced dataset (a couple of minutes on CPU),
runs the scatterer search on a few test images, and plots the classic
triptych: original image, scatterer perturbation, fused adversarial image,
annotated with predictions, confidences, and the winning parameters.
"""

import pathlib
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sarscatter import classifier as cl, dataset as ds
from sarscatter.attack import AttackConfig, run_attack
from sarscatter.imaging import xband_config

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

icfg = xband_config(88)
dcfg = ds.DatasetConfig(num_classes=6, train_per_class=60, test_per_class=10, seed=3)
print("rendering dataset...")
train, test = ds.generate_samples(dcfg, icfg)
images, labels = ds.stack_split(train)

print("training victim...")
net = cl.build_victim(cl.aconvnet_config(num_classes=6), seed=0)
t0 = time.perf_counter()
cl.train(net, images, labels, cl.TrainConfig(epochs=10, seed=1, learning_rate=0.02))
test_images, test_labels = ds.stack_split(test)
print(f"  {time.perf_counter() - t0:.0f}s; held-out accuracy "
      f"{cl.evaluate_accuracy(net, test_images, test_labels):.3f}")

cfg = AttackConfig(n_scatterers=2, population=20, max_iter=60, seed=42)
picks = []
for k, sample in enumerate(test):
    result = run_attack(net, sample, cfg, icfg)
    if result.skipped:
        continue
    picks.append((sample, result))
    if len(picks) == 3:
        break

fig, axes = plt.subplots(len(picks), 3, figsize=(10, 3.2 * len(picks)))
for row, (sample, result) in enumerate(picks):
    axes[row, 0].imshow(sample.image, cmap="viridis")
    axes[row, 0].set_title(f"clean: class {sample.label}", fontsize=9)
    axes[row, 1].imshow(result.perturbation, cmap="inferno")
    kinds = ", ".join(k.value for k in result.kinds)
    axes[row, 1].set_title(f"scatterers: {kinds}", fontsize=8)
    axes[row, 2].imshow(result.adversarial, cmap="viridis")
    tag = "fooled" if result.success else "held"
    axes[row, 2].set_title(
        f"{tag}: pred {result.predicted} (p={result.adv_confidence:.2f}, "
        f"{result.iterations} iters)",
        fontsize=9,
    )
    for col in range(3):
        axes[row, col].axis("off")
fig.tight_layout()
fig.savefig(OUT / "04_adversarial_triptych.png", dpi=120)
print(f"wrote {OUT / '04_adversarial_triptych.png'}")

for sample, result in picks:
    print(f"label {result.label} -> {result.predicted}  conf {result.adv_confidence:.3f}  "
          f"gt conf {result.gt_confidence:.3f}  iterations {result.iterations}")
    for kind, row in zip(result.kinds, result.thetas):
        vals = " ".join(f"{v:+.2f}" for v in row)
        print(f"    {kind.value:>16}: [{vals}]")

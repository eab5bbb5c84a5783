"""Scatterer-robust training.

Trains a normal victim and a scatterer-adversarially-trained victim on the
same reduced dataset (every training image perturbed by a cheap surrogate
search each epoch), then compares clean accuracy and robustness against the
full scatterer attack.  Expect the defended model to give up a sliver of
clean accuracy for a large robustness gain.
"""

import pathlib
import time
from dataclasses import replace

import numpy as np

from sarscatter import classifier as cl, dataset as ds, defense as df
from sarscatter.attack import AttackConfig, run_attack
from sarscatter.imaging import xband_config

icfg = xband_config(88)
dcfg = ds.DatasetConfig(num_classes=6, train_per_class=50, test_per_class=10, seed=5)
train, test = ds.generate_samples(dcfg, icfg)
images, labels = ds.stack_split(train)
tcfg = cl.TrainConfig(epochs=8, seed=1, learning_rate=0.02)

print("training normal victim...")
normal = cl.build_victim(cl.aconvnet_config(num_classes=6), seed=0)
cl.train(normal, images, labels, tcfg)

print("adversarially training defended victim (surrogate attack per image per epoch)...")
defended = cl.build_victim(cl.aconvnet_config(num_classes=6), seed=0)
t0 = time.perf_counter()
df.adversarial_train(defended, train, df.DefenseConfig(train=tcfg), icfg)
print(f"  {time.perf_counter() - t0:.0f}s")

eval_cfg = AttackConfig(n_scatterers=3, population=10, max_iter=40, seed=9)


def scatter_attack(net, sample):
    return run_attack(net, sample, eval_cfg, icfg).adversarial


report = df.evaluate_defense(
    {"normal": normal, "defended": defended}, [("scatter3", scatter_attack)], test
)
print()
print(f"{'':>10} {'clean':>8} {'vs scatter-3':>14} {'adv confidence':>15}")
for name in ("normal", "defended"):
    print(
        f"{name:>10} {report[f'{name}.clean_accuracy']:>8.3f} "
        f"{report[f'{name}.scatter3.robust_accuracy']:>14.3f} "
        f"{report[f'{name}.scatter3.mean_adv_confidence']:>15.3f}"
    )

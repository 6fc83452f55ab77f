"""Train the dense classifier on the two-Gaussian task and probe it with
every attack family and objective.

Run:  python3 demos/01_train_and_attack.py
"""

import numpy as np

from mead import nn
from mead.attacks import (AttackFamily, Norm, deepfool, fgsm, pgd,
                          square_attack)
from mead.data import GaussianSpec, gen_gaussian_dataset
from mead.objectives import ObjectiveKind


def main():
    train, test = gen_gaussian_dataset(GaussianSpec(seed=0))
    model = nn.train_classifier(
        train, [2, 16, 2],
        nn.TrainConfig(epochs=20, learning_rate=0.01, seed=0))
    print(f"clean accuracy: train={nn.accuracy(model, train):.3f} "
          f"test={nn.accuracy(model, test):.3f}")

    # attack the first 50 test points with each objective
    X, y = test.inputs[:50], test.labels[:50]
    eps = 1.0
    print(f"\nfooling rates at L-inf eps={eps} (50 samples):")
    print(f"{'objective':>10} {'fgsm':>6} {'pgd':>6} {'square':>7}")
    for obj in ObjectiveKind:
        rates = {}
        for name, run in (
            ("fgsm", lambda x, lbl: fgsm(model, x, lbl, obj, eps,
                                         clip=False)),
            ("pgd", lambda x, lbl: pgd(model, x, lbl, obj, eps, Norm.LINF,
                                       steps=20, seed=0, clip=False)),
            ("square", lambda x, lbl: square_attack(model, x, lbl, obj, eps,
                                                    iters=100, seed=0,
                                                    clip=False)),
        ):
            fooled = sum(run(x, int(lbl)).fooled for x, lbl in zip(X, y))
            rates[name] = fooled / len(X)
        print(f"{obj.value:>10} {rates['fgsm']:6.2f} {rates['pgd']:6.2f} "
              f"{rates['square']:7.2f}")

    # DeepFool needs no objective or budget: it walks to the boundary
    dists = []
    for x, lbl in zip(X, y):
        out = deepfool(model, x, int(lbl), clip=False)
        if out.fooled:
            dists.append(np.linalg.norm(out.x_adv - x))
    print(f"\ndeepfool: fooled {len(dists)}/{len(X)}, "
          f"median L2 distance {np.median(dists):.3f}")


if __name__ == "__main__":
    main()

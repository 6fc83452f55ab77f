"""Image pipeline end to end: IDX files on disk, a dense classifier,
image-only attacks (spatial transforms, squares), and a report CSV.

Uses the bundled 8x8 digits as a small stand-in written through the same
IDX reader used for full-size MNIST files.

Run:  python3 demos/05_image_pipeline.py
"""

import tempfile
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

from mead import nn
from mead.attacks import AttackFamily, AttackSpec, Norm
from mead.config import config_from_mapping, write_report_csv
from mead.data import load_idx, write_idx
from mead.evaluation import evaluate_group, group_arms, report_rows
from mead.objectives import ObjectiveKind
from mead.pipeline import build_detectors


def main():
    workdir = Path(tempfile.mkdtemp(prefix="mead-demo-"))
    digits = load_digits()
    images = np.round(digits.images / 16.0 * 255).astype(np.uint8)
    write_idx(images, digits.target,
              workdir / "images.idx", workdir / "labels.idx")
    ds = load_idx(workdir / "images.idx", workdir / "labels.idx", limit=600)
    print(f"loaded {len(ds)} digits from IDX files "
          f"({ds.inputs.shape[1]} pixels each)")

    n_train = 500
    train = nn.LabeledDataset(ds.inputs[:n_train], ds.labels[:n_train])
    test = nn.LabeledDataset(ds.inputs[n_train:n_train + 25],
                             ds.labels[n_train:n_train + 25])
    model = nn.train_classifier(
        train, [64, 32, 10],
        nn.TrainConfig(epochs=15, learning_rate=0.05, seed=0))
    print(f"test accuracy: {nn.accuracy(model, test):.3f}")

    cfg = config_from_mapping({
        "clip_domain": True,
        "detectors": [{"kind": "fs"}, {"kind": "magnet"}]})
    detectors = build_detectors(cfg, model, train, image_shape=(8, 8),
                                fit_limit=120)

    specs = [AttackSpec(AttackFamily.PGD, obj, Norm.LINF, 0.25, steps=20,
                        random_init=True) for obj in ObjectiveKind]
    specs.append(AttackSpec(AttackFamily.SQUARE, ObjectiveKind.ACE,
                            Norm.LINF, 0.25, steps=100))
    specs.append(AttackSpec(AttackFamily.SPATIAL, None, Norm.LINF, None,
                            max_rot_deg=25, max_trans_px=2, grid_steps=3))

    results = [evaluate_group(model, det, test, group, clip=True,
                              image_shape=(8, 8), base_seed=0)
               for det in detectors for group in group_arms(specs)]
    rows = report_rows(results)
    report = workdir / "report.csv"
    write_report_csv(rows, report)
    print(f"\nwrote {report}")
    for r in rows:
        if r["setting"] == "mead":
            eps = r["epsilon"] or "-"
            print(f"  {r['detector']:>7} {r['norm']}/eps={eps}: "
                  f"auroc={r['auroc']:.3f} "
                  f"fpr@95={r['fpr_at_95_tpr']:.3f} "
                  f"({r['n_adversarials']} positives)")


if __name__ == "__main__":
    main()

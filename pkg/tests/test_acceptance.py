"""Acceptance gate: one test per shipping criterion.

Each test prints a single ``[acceptance] criterion N ...: PASS/FAIL``
line (visible with ``pytest -s`` or in captured output on failure).
"""

import contextlib
import os
import time

import numpy as np
import pytest

from mead import nn
from mead.attacks import (AttackFamily, AttackSpec, Norm, attack_preset,
                          project_l1_ball, project_lp)
from mead.config import config_from_mapping, write_report_csv
from mead.data import GaussianSpec, gen_gaussian_dataset, load_idx, write_idx
from mead.evaluation import (SampleVerdict, auroc, confusion_counts,
                             evaluate_group, fpr_at_95_tpr, group_arms,
                             roc_points)
from mead.objectives import (ObjectiveKind, ObjectiveReference, ace_loss,
                             fr_loss, gini_loss, kl_loss, objective_value)
from mead.pipeline import build_detectors, run_case_study


@contextlib.contextmanager
def criterion(num: int, name: str):
    try:
        yield
    except BaseException:
        print(f"\n[acceptance] criterion {num} ({name}): FAIL")
        raise
    print(f"\n[acceptance] criterion {num} ({name}): PASS")


# ---------------------------------------------------------------------------

def test_criterion_1_case_study_reproduction():
    with criterion(1, "case-study reproduction"):
        t0 = time.time()
        result = run_case_study()
        elapsed = time.time() - t0
        assert elapsed < 120, f"case study took {elapsed:.0f}s"

        ca = result["corrupted_accuracy"]
        assert abs(ca["ace"] - 0.50) <= 0.10, ca
        assert abs(ca["gini"] - 0.50) <= 0.10, ca

        m = result["detector_matrix"]
        b = result["both_trained"]
        targets = [
            (m["ace"]["ace"], 0.71), (m["ace"]["gini"], 0.62),
            (m["gini"]["gini"], 0.87), (m["gini"]["ace"], 0.63),
            (b["gini"], 0.798), (b["ace"], 0.663),
        ]
        for got, want in targets:
            assert abs(got - want) <= 0.08, (got, want, m, b)


def test_criterion_2_gradient_finite_difference_suite():
    with criterion(2, "input-gradient finite differences"):
        t0 = time.time()
        from mead.attacks import make_reference

        rng = np.random.default_rng(0)
        kinds = list(ObjectiveKind)
        checks = 0
        for trial in range(25):
            params = nn.init_params([4, 12, 6, 3], seed=trial)
            for kind in kinds:
                x = rng.normal(size=4)
                ref = make_reference(kind, params,
                                     x + 0.3 * rng.normal(size=4),
                                     int(rng.integers(3)))
                g = nn.input_gradient(params, x, kind, ref)
                fd = np.zeros(4)
                h = 1e-5
                for i in range(4):
                    e = np.zeros(4)
                    e[i] = h
                    up = objective_value(kind, ref,
                                         nn.forward(params, x + e).probs)
                    dn = objective_value(kind, ref,
                                         nn.forward(params, x - e).probs)
                    fd[i] = (up - dn) / (2 * h)
                rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8)
                assert rel <= 1e-4, (kind, trial, rel)
                checks += 1
        assert checks == 100
        assert time.time() - t0 < 30


def test_criterion_3_projection_oracle():
    with criterion(3, "Lp projection oracle"):
        cp = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(1)
        for _ in range(1000):
            v = rng.normal(scale=2.0, size=5)
            eps = float(rng.uniform(0.1, 5.0))
            z = cp.Variable(5)
            cp.Problem(cp.Minimize(cp.sum_squares(z - v)),
                       [cp.norm1(z) <= eps]).solve()
            assert np.max(np.abs(project_l1_ball(v, eps) - z.value)) <= 1e-6

        # L2 / Linf projections satisfy their constraints exactly
        for _ in range(500):
            v = rng.normal(scale=3.0, size=6)
            c = rng.normal(size=6)
            eps = float(rng.uniform(0.1, 2.0))
            l2 = project_lp(v, c, eps, Norm.L2)
            assert np.linalg.norm(l2 - c) <= eps * (1 + 1e-12)
            li = project_lp(v, c, eps, Norm.LINF)
            assert np.all(li <= c + eps) and np.all(li >= c - eps)


def _random_verdicts(rng, n):
    verdicts = []
    for _ in range(n):
        n_arms = int(rng.integers(0, 4))
        arms = [(AttackSpec(AttackFamily.PGD,
                            rng.choice(list(ObjectiveKind)), Norm.LINF, 0.1),
                 round(float(rng.normal(0.3)), 1))
                for _ in range(n_arms)]
        verdicts.append(SampleVerdict(round(float(rng.normal()), 1), arms))
    if not any(v.adversarial_scores for v in verdicts):
        verdicts[0].adversarial_scores.append(
            (AttackSpec(AttackFamily.PGD, ObjectiveKind.ACE, Norm.LINF, 0.1),
             0.5))
    return verdicts


def _brute_force_curve(verdicts):
    """Exhaustive-threshold reference: direct set construction per gamma."""
    nat = [v.natural_score for v in verdicts]
    pos = [v.worst_case_score for v in verdicts
           if v.worst_case_score is not None]
    pts = set()
    for gamma in [-np.inf, np.inf] + sorted(set(nat) | set(pos)):
        tp = sum(1 for p in pos if p >= gamma)
        fn = len(pos) - tp
        fp = sum(1 for s in nat if s >= gamma)
        tn = len(nat) - fp
        pts.add((fp / (fp + tn), tp / (tp + fn)))
    return sorted(pts)


def _brute_force_auroc(pts):
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += 0.5 * (y0 + y1) * (x1 - x0)
    return area


def test_criterion_4_metric_oracle():
    with criterion(4, "AUROC / FPR@95 exhaustive-threshold oracle"):
        rng = np.random.default_rng(2)
        for _ in range(200):
            verdicts = _random_verdicts(rng, int(rng.integers(5, 51)))
            ours = roc_points(verdicts)
            ref = _brute_force_curve(verdicts)
            assert ours == ref
            assert auroc(ours) == pytest.approx(_brute_force_auroc(ref),
                                                abs=1e-12)
            ref95 = min((f for f, t in ref if t >= 0.95), default=1.0)
            assert fpr_at_95_tpr(ours) == ref95

            # tie-corrected pairwise-comparison statistic
            pos = np.array([v.worst_case_score for v in verdicts
                            if v.worst_case_score is not None])
            neg = np.array([v.natural_score for v in verdicts])
            mw = (np.sum(pos[:, None] > neg[None, :])
                  + 0.5 * np.sum(pos[:, None] == neg[None, :])) \
                / (len(pos) * len(neg))
            assert auroc(ours) == pytest.approx(mw, abs=1e-12)


def test_criterion_5_mead_criterion_oracle():
    with criterion(5, "worst-case confusion-set oracle"):
        rng = np.random.default_rng(3)
        for _ in range(200):
            verdicts = _random_verdicts(rng, int(rng.integers(3, 40)))
            sweep = [-np.inf, np.inf] + [float(g) for g in rng.normal(size=10)]
            sweep += [v.natural_score for v in verdicts]
            for gamma in sweep:
                tp = sum(1 for v in verdicts if v.adversarial_scores
                         and all(s >= gamma
                                 for _, s in v.adversarial_scores))
                fn = sum(1 for v in verdicts if v.adversarial_scores
                         and any(s < gamma for _, s in v.adversarial_scores))
                fp = sum(1 for v in verdicts if v.natural_score >= gamma)
                tn = len(verdicts) - fp
                assert confusion_counts(verdicts, gamma) == (tp, fn, tn, fp)

        # constructed instance where the multi-armed AUROC exceeds every
        # single-armed AUROC (the sifter sets differ across objectives)
        def v(nat, pairs):
            return SampleVerdict(nat, [
                (AttackSpec(AttackFamily.PGD, o, Norm.LINF, 0.1), s)
                for o, s in pairs])

        ACE, KL = ObjectiveKind.ACE, ObjectiveKind.KL
        verdicts = [v(5.0, [(ACE, 0.0), (KL, 0.0)]),
                    v(5.0, [(KL, 10.0)]), v(5.0, [(KL, 10.0)]),
                    v(5.0, [(ACE, 10.0)])]

        def single(obj):
            sub = [SampleVerdict(x.natural_score,
                                 [(sp, s) for sp, s in x.adversarial_scores
                                  if sp.objective == obj])
                   for x in verdicts]
            return auroc(roc_points(sub))

        mead = auroc(roc_points(verdicts))
        assert mead == pytest.approx(0.75)
        assert mead > single(ACE)
        assert mead > single(KL)


def test_criterion_6_objective_bounds():
    with criterion(6, "objective bound properties"):
        rng = np.random.default_rng(4)
        for _ in range(10_000):
            C = int(rng.integers(2, 6))
            q_adv = rng.dirichlet(np.ones(C))
            q_nat = rng.dirichlet(np.ones(C))
            y = int(rng.integers(C))
            assert ace_loss(q_adv, y) >= 0.0
            assert kl_loss(q_nat, q_adv) >= -1e-12
            fr = fr_loss(q_nat, q_adv)
            assert -1e-12 <= fr <= np.pi + 1e-9
            assert fr_loss(q_adv, q_adv) <= 1e-4
            assert np.isclose(fr, fr_loss(q_adv, q_nat), atol=1e-12)
            g = gini_loss(q_adv)
            assert -1e-12 <= g <= 1.0 - 1.0 / np.sqrt(C) + 1e-9


def _smoke_config():
    return config_from_mapping({
        "seed": 0,
        "dataset": {"kind": "gaussian", "n_per_class": 120},
        "arch": [2, 16, 2],
        "dropout": [0.2],
        "train": {"epochs": 15, "learning_rate": 0.02},
        "detectors": [{"kind": "rbf_svm"}, {"kind": "lid"},
                      {"kind": "kd_bu"}, {"kind": "fs"}, {"kind": "magnet"}],
    })


def test_criterion_7_desk_scale_smoke_run(tmp_path):
    with criterion(7, "multi-armed smoke run"):
        t0 = time.time()
        cfg = _smoke_config()
        from mead.pipeline import load_dataset, train_model

        train, test, _ = load_dataset(cfg)
        model = train_model(cfg, train)
        detectors = build_detectors(cfg, model, train, fit_limit=120)
        test = nn.LabeledDataset(test.inputs[:30], test.labels[:30])

        specs = []
        for preset in ("paper-l1", "paper-l2", "paper-linf"):
            specs.extend(attack_preset(preset, eps_limit=3))
        groups = group_arms(specs)

        rows = []
        remark_log = []
        for det in detectors:
            for group in groups:
                r = evaluate_group(model, det, test, group, clip=False,
                                   base_seed=cfg.seed)
                rows.append(r)
                if not r.per_objective:
                    continue
                max_single = max(a for a, _ in r.per_objective.values())
                if r.auroc > max_single + 1e-9:
                    # only legitimate via sifter-set differences: some
                    # objective's positive set must be a strict subset
                    diffs = {obj: r.n_adversarials - c
                             for obj, c in r.per_objective_counts.items()}
                    assert any(d > 0 for d in diffs.values()), \
                        (det.kind, group.norm, group.epsilon, r.auroc,
                         max_single)
                    remark_log.append(
                        f"{det.kind} {group.norm.value} eps={group.epsilon}: "
                        f"multi-armed {r.auroc:.3f} > best single "
                        f"{max_single:.3f}; sifter-set deficits {diffs}")

        from mead.evaluation import report_rows
        csv_path = tmp_path / "smoke_report.csv"
        write_report_csv(report_rows(rows), csv_path)
        assert csv_path.exists() and csv_path.stat().st_size > 0
        if remark_log:
            print("\n".join(remark_log))
        elapsed = time.time() - t0
        assert elapsed < 600, f"smoke run took {elapsed:.0f}s"


def _digits_as_idx(tmp_path, limit=2000):
    """Image dataset for the directional check: real IDX files under
    MEAD_DATA_DIR if present, otherwise the bundled 8x8 digits written
    through the same IDX code path."""
    data_dir = os.environ.get("MEAD_DATA_DIR")
    if data_dir:
        ip = os.path.join(data_dir, "train-images-idx3-ubyte")
        lp = os.path.join(data_dir, "train-labels-idx1-ubyte")
        if os.path.exists(ip) and os.path.exists(lp):
            return load_idx(ip, lp, limit=limit), (28, 28)
    from sklearn.datasets import load_digits

    digits = load_digits()
    images = np.round(digits.images / 16.0 * 255).astype(np.uint8)[:limit]
    labels = digits.target[:limit]
    ip, lp = tmp_path / "digits-images.idx", tmp_path / "digits-labels.idx"
    write_idx(images, labels, ip, lp)
    return load_idx(ip, lp, limit=limit), (8, 8)


def _directional_check(model, detectors, test, image_shape, clip):
    """multi-armed-vs-single degradation for score-based detectors."""
    group = group_arms([
        AttackSpec(AttackFamily.PGD, obj, Norm.LINF, 0.25, steps=20,
                   random_init=True)
        for obj in ObjectiveKind])[0]
    findings = []
    for det in detectors:
        r = evaluate_group(model, det, test, group, clip=clip,
                           image_shape=image_shape, base_seed=0)
        max_single = max(a for a, _ in r.per_objective.values())
        findings.append((det.kind, r.auroc, max_single))
    return findings


def test_criterion_8_non_reproducibility_statement(tmp_path):
    with criterion(8, "scale limits + directional degradation"):
        print("\nNOT REPRODUCED AT THIS SCALE: the full-scale benchmark "
              "tables (ResNet-18/CIFAR-10 and a full-MNIST CNN) need GPU "
              "training far beyond this artifact. Only the qualitative "
              "claim is checked: multi-armed worst-case AUROC does not "
              "exceed the best single-armed AUROC for the feature-based "
              "detectors, on synthetic data and a small image subset.")

        # synthetic dataset
        train, test = gen_gaussian_dataset(GaussianSpec(seed=0))
        model = nn.train_classifier(
            train, [2, 16, 2],
            nn.TrainConfig(epochs=20, learning_rate=0.01, seed=0))
        cfg = config_from_mapping({
            "detectors": [{"kind": "lid"}, {"kind": "kd_bu"},
                          {"kind": "fs"}]})
        dets = build_detectors(cfg, model, train, fit_limit=120)
        sub = nn.LabeledDataset(test.inputs[:30], test.labels[:30])
        for kind, mead, best_single in _directional_check(
                model, dets, sub, None, clip=False):
            print(f"synthetic {kind}: multi-armed {mead:.3f} "
                  f"vs best single {best_single:.3f}")
            assert mead <= best_single + 0.05, (kind, mead, best_single)

        # small image subset through the IDX path (<= 2000 samples)
        ds, shape = _digits_as_idx(tmp_path)
        assert len(ds) <= 2000
        n_train = int(0.8 * len(ds))
        img_train = nn.LabeledDataset(ds.inputs[:n_train],
                                      ds.labels[:n_train])
        img_test = nn.LabeledDataset(ds.inputs[n_train:n_train + 25],
                                     ds.labels[n_train:n_train + 25])
        d = ds.inputs.shape[1]
        img_model = nn.train_classifier(
            img_train, [d, 32, 10],
            nn.TrainConfig(epochs=15, learning_rate=0.05, seed=0))
        img_cfg = config_from_mapping({
            "clip_domain": True,
            "detectors": [{"kind": "lid"}, {"kind": "kd_bu"},
                          {"kind": "fs"}]})
        img_dets = build_detectors(img_cfg, img_model, img_train,
                                   image_shape=shape, fit_limit=120)
        for kind, mead, best_single in _directional_check(
                img_model, img_dets, img_test, shape, clip=True):
            print(f"image {kind}: multi-armed {mead:.3f} "
                  f"vs best single {best_single:.3f}")
            assert mead <= best_single + 0.05, (kind, mead, best_single)

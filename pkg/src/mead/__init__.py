"""Multi-armed evaluation harness for adversarial-example detectors."""

from .attacks import (AttackFamily, AttackOutcome, AttackSpec, Norm,
                      attack_preset, clip_domain, deepfool, fgsm, pgd,
                      project_lp, run_attack, spatial_transform_attack,
                      square_attack)
from .data import GaussianSpec, gen_gaussian_dataset, load_idx
from .evaluation import (ArmGroup, SampleVerdict, auroc, confusion_counts,
                         evaluate_group, fpr_at_95_tpr, group_arms,
                         roc_points, sift)
from .nn import (LabeledDataset, ModelParams, SoftPrediction, TrainConfig,
                 forward, input_gradient, predict_label, train_autoencoder,
                 train_classifier)
from .objectives import (ObjectiveKind, ObjectiveReference, ace_loss, fr_loss,
                         gini_loss, kl_loss, objective_grad_probs,
                         objective_value)

__version__ = "0.1.0"

"""Desk-scale lab for finite-difference black-box attacks on small softmax
classifiers and the additive output-randomization defense."""

from .analysis import (DivergenceSummary, GradErrorReport, empirical_gradient_error,
                       gradient_l2_divergence, taylor_gradient_error)
from .attacks import (AttackConfig, AttackResult, GradientEstimate, QueryOracle,
                      averaged_query, fd_coordinate_gradient, nes_gradient,
                      ql_attack, whitebox_attack, zoo_attack)
from .data import (BlobSpec, Dataset, Example, load_csv, load_dataset, load_idx,
                   make_blobs)
from .defense import (CalibrationMode, NoiseModel, calibrate_variance,
                      misclassification_rate, pairwise_flip_probability,
                      randomize_output)
from .harness import ExperimentSpec, ResultRow, run_experiment
from .losses import (AttackGoal, LossParams, loss_for_goal, targeted_loss,
                     untargeted_loss, zoo_objective)
from .models import Classifier, evaluate_accuracy, train_classifier

__version__ = "0.1.0"

"""Adversarial losses and the distortion-penalized attack objective.

Both losses are minimized: they fall to -kappa exactly when the goal holds
with margin kappa. They accept raw model outputs as well as randomized ones,
whose entries can be zero or negative; entries are floored at ``LOG_FLOOR``
before the log so the attacker always receives a finite value. That floor is
the attacker-side convention; measurement code that needs unbiased
expectations rejects such draws instead (see analysis).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-30


@dataclass(frozen=True)
class AttackGoal:
    """Either force class ``class_index`` (targeted) or escape it (untargeted)."""

    kind: str  # "targeted" | "untargeted"
    class_index: int

    def __post_init__(self):
        if self.kind not in ("targeted", "untargeted"):
            raise ValueError(f"unknown goal kind {self.kind!r}")

    @classmethod
    def targeted(cls, target_class: int) -> "AttackGoal":
        return cls("targeted", target_class)

    @classmethod
    def untargeted(cls, original_label: int) -> "AttackGoal":
        return cls("untargeted", original_label)

    @property
    def is_targeted(self) -> bool:
        return self.kind == "targeted"

    def satisfied_by(self, label: int) -> bool:
        return label == self.class_index if self.is_targeted else label != self.class_index


@dataclass(frozen=True)
class LossParams:
    kappa: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if self.kappa < 0.0 or self.c < 0.0:
            raise ValueError("kappa and c must be non-negative")


def _safe_log(out: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(np.asarray(out, dtype=float), LOG_FLOOR))


def _rival_logs(logs: np.ndarray, excluded: int) -> np.ndarray:
    """Row-wise max of log-outputs over every class except ``excluded``."""
    if logs.shape[-1] < 2:
        raise ValueError("need at least two classes")
    masked = logs.copy()
    masked[..., excluded] = -np.inf
    return masked.max(axis=-1)


def batch_targeted_loss(outs: np.ndarray, target: int,
                        kappa: float = 0.0) -> np.ndarray:
    """Vectorized targeted loss over rows of output vectors."""
    logs = _safe_log(np.atleast_2d(outs))
    return np.maximum(_rival_logs(logs, target) - logs[:, target], -kappa)


def batch_untargeted_loss(outs: np.ndarray, label: int, kappa: float = 0.0,
                          clamp: bool = True) -> np.ndarray:
    logs = _safe_log(np.atleast_2d(outs))
    margin = logs[:, label] - _rival_logs(logs, label)
    return np.maximum(margin, -kappa) if clamp else margin


def targeted_loss(out: np.ndarray, target: int, kappa: float = 0.0) -> float:
    """max{ max_{i != t}(log out_i - log out_t), -kappa }."""
    return float(batch_targeted_loss(out, target, kappa)[0])


def untargeted_loss(out: np.ndarray, label: int, kappa: float = 0.0,
                    clamp: bool = True) -> float:
    """max{ log out_i - max_{j != i} log out_j, -kappa } for original label i.

    ``clamp=False`` drops the -kappa cutoff, giving the plain top-versus-rival
    log ratio used by the gradient-error analysis.
    """
    return float(batch_untargeted_loss(out, label, kappa, clamp)[0])


def batch_loss_for_goal(outs: np.ndarray, goal: AttackGoal,
                        kappa: float = 0.0) -> np.ndarray:
    if goal.is_targeted:
        return batch_targeted_loss(outs, goal.class_index, kappa)
    return batch_untargeted_loss(outs, goal.class_index, kappa)


def loss_for_goal(out: np.ndarray, goal: AttackGoal, kappa: float = 0.0) -> float:
    if goal.is_targeted:
        return targeted_loss(out, goal.class_index, kappa)
    return untargeted_loss(out, goal.class_index, kappa)


def zoo_objective(x: np.ndarray, x0: np.ndarray, out: np.ndarray,
                  goal: AttackGoal, params: LossParams) -> float:
    """||x - x0||_2^2 + c * L(out); x must already lie in the unit box."""
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x.shape != x0.shape:
        raise ValueError("candidate and original inputs must share a shape")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("candidate outside [0,1]^n; project before scoring")
    dist = float(np.sum((x - x0) ** 2))
    return dist + params.c * loss_for_goal(out, goal, params.kappa)


def batch_loss_and_output_gradient(outs: np.ndarray, goal: AttackGoal,
                                   kappa: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Loss values plus (sub)gradients w.r.t. each output row.

    White-box path: the gradient is zero wherever the -kappa clamp is active,
    and zero on entries sitting at the log floor.
    """
    outs = np.atleast_2d(np.asarray(outs, dtype=float))
    rows = np.arange(len(outs))
    logs = _safe_log(outs)
    masked = logs.copy()
    masked[:, goal.class_index] = -np.inf
    rival = masked.argmax(axis=1)
    if goal.is_targeted:
        margin = logs[rows, rival] - logs[:, goal.class_index]
        winner, loser = rival, np.full_like(rival, goal.class_index)
    else:
        margin = logs[:, goal.class_index] - logs[rows, rival]
        winner, loser = np.full_like(rival, goal.class_index), rival
    grads = np.zeros_like(outs)
    grads[rows, winner] = np.where(outs[rows, winner] > LOG_FLOOR,
                                   1.0 / outs[rows, winner], 0.0)
    grads[rows, loser] = np.where(outs[rows, loser] > LOG_FLOOR,
                                  -1.0 / outs[rows, loser], 0.0)
    clamped = margin <= -kappa
    grads[clamped] = 0.0
    return np.where(clamped, -kappa, margin), grads


def loss_and_output_gradient(out: np.ndarray, goal: AttackGoal,
                             kappa: float = 0.0) -> tuple[float, np.ndarray]:
    """Single-vector form of :func:`batch_loss_and_output_gradient`."""
    losses, grads = batch_loss_and_output_gradient(out, goal, kappa)
    return float(losses[0]), grads[0]

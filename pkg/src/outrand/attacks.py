"""Black-box gradient estimation and attack loops, plus a white-box baseline.

The attacker touches the model only through :class:`QueryOracle`, which meters
every query and applies the output randomization when a defense is installed.
Success bookkeeping inside the loops runs on what the attacker can see
(defended outputs); the reported ``success`` is re-adjudicated against the
clean model so the defense's own flips are never credited to the attacker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .defense import NoiseModel
from .losses import (AttackGoal, batch_loss_and_output_gradient,
                     batch_loss_for_goal, loss_and_output_gradient)
from .models import Classifier


class QueryOracle:
    """Input -> (possibly randomized) output vector, with exact accounting.

    The wrapped model only needs a ``forward(rows) -> rows`` method. Without
    noise, repeated queries at the same point return identical vectors.
    """

    def __init__(self, model, noise: NoiseModel | None = None,
                 rng: np.random.Generator | None = None):
        self.model = model
        self.noise = noise
        self.rng = rng if rng is not None else np.random.default_rng()
        self.query_count = 0

    def query(self, x: np.ndarray) -> np.ndarray:
        return self.query_batch(np.asarray(x, dtype=float)[None, :])[0]

    def query_batch(self, rows: np.ndarray) -> np.ndarray:
        """One metered query per row; fresh noise per row when defended."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        out = np.atleast_2d(self.model.forward(rows))
        self.query_count += len(rows)
        if self.noise is not None:
            out = out + self.noise.sample(self.rng, size=len(rows))
        return out

    def clean_forward(self, x: np.ndarray) -> np.ndarray:
        """Undefended output for experimenter-side adjudication; not metered."""
        return np.asarray(self.model.forward(np.asarray(x, dtype=float)))

    def clean_label(self, x: np.ndarray) -> int:
        return int(np.argmax(self.clean_forward(x)))


@dataclass
class AttackConfig:
    """Shared attack hyperparameters.

    ``avg_samples`` is the adaptive attacker's averaging count k; k = 1 is the
    non-adaptive attack. Adaptive runs also double ``max_iters``. ``avg_mode``
    selects whether averaging pools loss values ("loss", default) or output
    vectors before the loss ("output").
    """

    h: float = 1e-4                 # FD half-step
    kappa: float = 0.0
    c_init: float = 1.0
    binary_search_steps: int = 9
    adam_alpha: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    coord_batch: int = 128          # coordinates per ZOO iteration
    max_iters: int = 100
    eta: float = 3e-2               # PGD step
    sigma_search: float = 1e-2      # NES search std
    m: int = 20                     # NES samples (even: antithetic pairs)
    eps_budget: float = 0.3         # L-inf limit for the QL attack
    avg_samples: int = 1
    avg_mode: str = "loss"

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError("h must be positive")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.avg_samples < 1:
            raise ValueError("avg_samples must be >= 1")
        if self.avg_mode not in ("loss", "output"):
            raise ValueError(f"unknown avg_mode {self.avg_mode!r}")
        if min(self.max_iters, self.binary_search_steps, self.eps_budget,
               self.coord_batch, self.kappa, self.c_init) < 0:
            raise ValueError("budgets must be non-negative")

    @property
    def effective_iters(self) -> int:
        """Adaptive attackers double the iteration budget."""
        return self.max_iters * (2 if self.avg_samples > 1 else 1)


@dataclass(frozen=True)
class GradientEstimate:
    g: np.ndarray | float
    queries_used: int


@dataclass(frozen=True)
class AttackResult:
    success: bool
    adversarial_example: np.ndarray
    l2_distortion: float
    linf_distortion: float
    queries: int
    iterations_run: int
    final_label: int


def averaged_query(oracle: QueryOracle, x: np.ndarray, k: int) -> np.ndarray:
    """Mean of k independent defended outputs at x (k metered queries)."""
    if k < 1:
        raise ValueError("averaging count k must be >= 1")
    rows = np.repeat(np.asarray(x, dtype=float)[None, :], k, axis=0)
    return oracle.query_batch(rows).mean(axis=0)


def _losses_from_outputs(outputs: np.ndarray, loss_fn, k: int, avg_mode: str) -> np.ndarray:
    """Collapse (groups*k, C) outputs into one loss per group of k queries.

    ``loss_fn`` is batched: (rows, C) -> (rows,). "loss" averaging pools the k
    loss values per group; "output" averages the k output vectors first.
    """
    if avg_mode == "output":
        return np.asarray(loss_fn(outputs.reshape(-1, k, outputs.shape[-1]).mean(axis=1)))
    return np.asarray(loss_fn(outputs)).reshape(-1, k).mean(axis=1)


def _fd_probe_pair(x: np.ndarray, i: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    plus = x.copy()
    plus[i] = min(plus[i] + h, 1.0)
    minus = x.copy()
    minus[i] = max(minus[i] - h, 0.0)
    return plus, minus


def fd_coordinate_gradient(oracle: QueryOracle, loss_fn, x: np.ndarray, i: int,
                           h: float, avg_samples: int = 1,
                           avg_mode: str = "loss") -> GradientEstimate:
    """Symmetric difference quotient (L(x+h e_i) - L(x-h e_i)) / (2h).

    Probe points are clipped into [0,1]^n before querying. With k > 1 each of
    the two loss evaluations averages over k independent defended queries;
    queries_used = 2k.
    """
    x = np.asarray(x, dtype=float)
    if not 0 <= i < x.shape[0]:
        raise ValueError(f"coordinate {i} out of range for dimension {x.shape[0]}")
    k = avg_samples
    plus, minus = _fd_probe_pair(x, i, h)
    rows = np.concatenate([np.repeat(plus[None, :], k, axis=0),
                           np.repeat(minus[None, :], k, axis=0)])
    loss_plus, loss_minus = _losses_from_outputs(
        oracle.query_batch(rows), loss_fn, k, avg_mode)
    return GradientEstimate(g=(loss_plus - loss_minus) / (2.0 * h), queries_used=2 * k)


def _fd_coordinate_batch(oracle: QueryOracle, loss_fn, x: np.ndarray,
                         coords: np.ndarray, h: float, k: int,
                         avg_mode: str) -> np.ndarray:
    """Symmetric difference quotients for several coordinates in one metered
    batch; same math as ``fd_coordinate_gradient`` per coordinate."""
    rows = np.empty((2 * len(coords) * k, x.shape[0]))
    for j, ci in enumerate(coords):
        plus, minus = _fd_probe_pair(x, int(ci), h)
        rows[2 * j * k:(2 * j + 1) * k] = plus
        rows[(2 * j + 1) * k:(2 * j + 2) * k] = minus
    losses = _losses_from_outputs(oracle.query_batch(rows), loss_fn, k, avg_mode)
    return (losses[0::2] - losses[1::2]) / (2.0 * h)


def nes_gradient(oracle: QueryOracle, loss_fn, x: np.ndarray, sigma_search: float,
                 m: int, rng: np.random.Generator | int, avg_samples: int = 1,
                 avg_mode: str = "loss") -> GradientEstimate:
    """NES estimate sum_i [L(x + s u_i) - L(x - s u_i)] u_i / (2 m s).

    The m directions come in antithetic pairs (u, -u) sharing one standard
    normal draw; every loss evaluation is a fresh (averaged) oracle query, so
    queries_used = 2 m k.
    """
    if m < 2 or m % 2:
        raise ValueError("antithetic NES needs an even m >= 2")
    if sigma_search <= 0.0:
        raise ValueError("sigma_search must be positive")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    x = np.asarray(x, dtype=float)
    k = avg_samples
    half = rng.standard_normal((m // 2, x.shape[0]))
    directions = np.concatenate([half, -half])
    probes = np.concatenate([x + sigma_search * directions, x - sigma_search * directions])
    rows = np.repeat(probes, k, axis=0)
    losses = _losses_from_outputs(oracle.query_batch(rows), loss_fn, k, avg_mode)
    diffs = losses[:m] - losses[m:]
    g = (diffs[:, None] * directions).sum(axis=0) / (2.0 * m * sigma_search)
    return GradientEstimate(g=g, queries_used=2 * m * k)


class _Adam:
    """ADAM with per-coordinate moments and step counts (ZOO-style)."""

    def __init__(self, n: int, cfg: AttackConfig):
        self.cfg = cfg
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = np.zeros(n, dtype=int)

    def step(self, x: np.ndarray, coords: np.ndarray, grads: np.ndarray) -> None:
        cfg = self.cfg
        self.t[coords] += 1
        self.m[coords] = cfg.adam_beta1 * self.m[coords] + (1 - cfg.adam_beta1) * grads
        self.v[coords] = cfg.adam_beta2 * self.v[coords] + (1 - cfg.adam_beta2) * grads ** 2
        t = self.t[coords]
        m_hat = self.m[coords] / (1 - cfg.adam_beta1 ** t)
        v_hat = self.v[coords] / (1 - cfg.adam_beta2 ** t)
        x[coords] -= cfg.adam_alpha * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def _trivial_result(x0: np.ndarray, clean_label: int) -> AttackResult:
    return AttackResult(success=False, adversarial_example=x0.copy(),
                        l2_distortion=0.0, linf_distortion=0.0, queries=0,
                        iterations_run=0, final_label=clean_label)


def _distortions(x: np.ndarray, x0: np.ndarray) -> tuple[float, float]:
    diff = x - x0
    return float(np.linalg.norm(diff)), float(np.abs(diff).max(initial=0.0))


def _attacker_view(oracle: QueryOracle, x: np.ndarray, k: int) -> np.ndarray:
    return averaged_query(oracle, x, k) if k > 1 else oracle.query(x)


def zoo_attack(oracle: QueryOracle, x0: np.ndarray, goal: AttackGoal,
               cfg: AttackConfig, seed: int = 0) -> AttackResult:
    """Zeroth-order coordinate descent with per-coordinate ADAM and a binary
    search over the penalty weight c.

    Each round restarts from x0 with fresh ADAM state; iterations sample
    ``coord_batch`` coordinates without replacement, estimate the adversarial
    loss term by symmetric difference quotients, add the analytic distortion
    gradient 2(x - x0), and step. On a round with an attacker-visible success
    c moves halfway toward the last failing value, otherwise it doubles.
    Among the attacker-visible successes only clean-model-verified candidates
    are retained (minimum L2): the defense's own flips are not credited.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    n = x0.shape[0]
    iters = cfg.effective_iters
    if iters == 0 or cfg.binary_search_steps == 0:
        return _trivial_result(x0, oracle.clean_label(x0))
    rng = np.random.default_rng(seed)
    k = cfg.avg_samples
    start_count = oracle.query_count
    loss_fn = lambda outs: batch_loss_for_goal(outs, goal, cfg.kappa)
    batch = min(cfg.coord_batch, n)
    c, last_fail = cfg.c_init, 0.0
    best_x, best_l2 = None, np.inf
    iterations = 0
    for _ in range(cfg.binary_search_steps):
        x = x0.copy()
        adam = _Adam(n, cfg)
        round_success = False
        for _ in range(iters):
            coords = rng.choice(n, size=batch, replace=False)
            fd = _fd_coordinate_batch(oracle, loss_fn, x, coords, cfg.h, k, cfg.avg_mode)
            adam.step(x, coords, 2.0 * (x[coords] - x0[coords]) + c * fd)
            np.clip(x, 0.0, 1.0, out=x)
            iterations += 1
            view = _attacker_view(oracle, x, k)
            if goal.satisfied_by(int(np.argmax(view))):
                round_success = True
                l2 = float(np.linalg.norm(x - x0))
                if l2 < best_l2 and goal.satisfied_by(oracle.clean_label(x)):
                    best_x, best_l2 = x.copy(), l2
        if round_success:
            c = 0.5 * (c + last_fail)
        else:
            last_fail = c
            c *= 2.0
    final_x = best_x if best_x is not None else x
    final_label = oracle.clean_label(final_x)
    l2, linf = _distortions(final_x, x0)
    return AttackResult(success=goal.satisfied_by(final_label),
                        adversarial_example=final_x, l2_distortion=l2,
                        linf_distortion=linf,
                        queries=oracle.query_count - start_count,
                        iterations_run=iterations, final_label=final_label)


def ql_attack(oracle: QueryOracle, x0: np.ndarray, goal: AttackGoal,
              cfg: AttackConfig, seed: int = 0) -> AttackResult:
    """NES gradient estimation with sign-PGD inside an L-inf ball around x0.

    Stops early once the goal holds on a fresh (averaged when adaptive)
    oracle view of the current iterate; the returned success is adjudicated
    against the clean model.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    iters = cfg.effective_iters
    if cfg.eps_budget == 0.0 or iters == 0:
        return _trivial_result(x0, oracle.clean_label(x0))
    rng = np.random.default_rng(seed)
    k = cfg.avg_samples
    start_count = oracle.query_count
    loss_fn = lambda outs: batch_loss_for_goal(outs, goal, cfg.kappa)
    lo = np.clip(x0 - cfg.eps_budget, 0.0, 1.0)
    hi = np.clip(x0 + cfg.eps_budget, 0.0, 1.0)
    x = x0.copy()
    iterations = 0
    for _ in range(iters):
        est = nes_gradient(oracle, loss_fn, x, cfg.sigma_search, cfg.m, rng,
                           k, cfg.avg_mode)
        x = np.clip(x - cfg.eta * np.sign(est.g), lo, hi)
        iterations += 1
        view = _attacker_view(oracle, x, k)
        if goal.satisfied_by(int(np.argmax(view))):
            break
    final_label = oracle.clean_label(x)
    l2, linf = _distortions(x, x0)
    return AttackResult(success=goal.satisfied_by(final_label),
                        adversarial_example=x, l2_distortion=l2,
                        linf_distortion=linf,
                        queries=oracle.query_count - start_count,
                        iterations_run=iterations, final_label=final_label)


def whitebox_attack(model: Classifier, noise: NoiseModel | None, x0: np.ndarray,
                    goal: AttackGoal, cfg: AttackConfig, seed: int = 0,
                    avg_samples: int | None = None) -> AttackResult:
    """Gradient-descent attack on the distortion-penalized objective using true
    backprop gradients; the additive output noise is a constant offset in the
    backward pass. The adaptive variant averages the defended loss gradient
    over k draws and doubles the iteration budget, with the same c binary
    search as the ZOO loop. ``queries`` is 0: no oracle is involved.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    k = avg_samples if avg_samples is not None else cfg.avg_samples
    iters = cfg.max_iters * (2 if k > 1 else 1)
    clean_at = lambda x: int(np.argmax(model.forward(x)))
    if iters == 0 or cfg.binary_search_steps == 0:
        return _trivial_result(x0, clean_at(x0))
    rng = np.random.default_rng(seed)
    c, last_fail = cfg.c_init, 0.0
    best_x, best_l2 = None, np.inf
    iterations = 0
    all_coords = np.arange(x0.shape[0])
    for _ in range(cfg.binary_search_steps):
        x = x0.copy()
        adam = _Adam(x0.shape[0], cfg)
        round_success = False
        probs = model.forward(x)
        for _ in range(iters):
            if noise is None:
                _, grad_out = loss_and_output_gradient(probs, goal, cfg.kappa)
            else:
                outs = probs[None, :] + noise.sample(rng, size=k)
                grad_out = batch_loss_and_output_gradient(outs, goal, cfg.kappa)[1].mean(axis=0)
            grad_x = 2.0 * (x - x0) + c * model.input_gradient(x, grad_out)
            adam.step(x, all_coords, grad_x)
            np.clip(x, 0.0, 1.0, out=x)
            iterations += 1
            probs = model.forward(x)
            if noise is None:
                view = probs
            else:
                view = probs + noise.sample(rng, size=k).mean(axis=0)
            if goal.satisfied_by(int(np.argmax(view))):
                round_success = True
                l2 = float(np.linalg.norm(x - x0))
                if l2 < best_l2 and goal.satisfied_by(clean_at(x)):
                    best_x, best_l2 = x.copy(), l2
        if round_success:
            c = 0.5 * (c + last_fail)
        else:
            last_fail = c
            c *= 2.0
    final_x = best_x if best_x is not None else x
    final_label = clean_at(final_x)
    l2, linf = _distortions(final_x, x0)
    return AttackResult(success=goal.satisfied_by(final_label),
                        adversarial_example=final_x, l2_distortion=l2,
                        linf_distortion=linf, queries=0,
                        iterations_run=iterations, final_label=final_label)

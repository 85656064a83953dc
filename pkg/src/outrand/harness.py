"""Seeded experiment grids over noise levels, attacks, and averaging counts.

Every cell of a grid gets its own deterministic random stream derived from
the root seed and the cell coordinates, so reruns produce byte-identical CSV
output (the wall-time column aside). CSV files carry a schema tag line and
are written atomically.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import AttackConfig, QueryOracle, whitebox_attack, zoo_attack, ql_attack
from .analysis import gradient_l2_divergence
from .data import Dataset, load_dataset
from .defense import CalibrationMode, NoiseModel, calibrate_variance
from .losses import AttackGoal
from .models import Classifier, evaluate_accuracy

RESULT_SCHEMA = "outrand-results-v1"
CALIBRATION_SCHEMA = "outrand-calibration-v1"
DEFAULT_SIGMA2_GRID = (0.0, 1e-6, 1e-4, 1e-2, 5.76e-2)
DEFAULT_K_GRID = (0.005, 0.01, 0.1, 0.2)
DEFAULT_DELTA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
OUT_DIR_ENV = "OUTRAND_OUT_DIR"

KINDS = ("asr_vs_variance", "adaptive_averaging", "accuracy_vs_variance",
         "grad_error_vs_variance", "calibration_curve")
ATTACKS = ("zoo", "ql", "whitebox")


@dataclass
class ExperimentSpec:
    kind: str
    dataset: str = "blobs"
    model: str = ""
    attack: str = "zoo"
    goal: str = "untargeted"
    sigma2_grid: tuple[float, ...] = DEFAULT_SIGMA2_GRID
    avg_samples_grid: tuple[int, ...] = (1,)
    images: int = 100
    repeats: int = 30
    seed: int = 0
    out: str | None = None
    mode: CalibrationMode = CalibrationMode.CORRECTED
    experiment_id: str = ""
    attack_config: AttackConfig = field(default_factory=AttackConfig)
    k_grid: tuple[float, ...] = DEFAULT_K_GRID
    delta_grid: tuple[float, ...] = DEFAULT_DELTA_GRID

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.attack not in ATTACKS:
            raise ValueError(f"unknown attack {self.attack!r}")
        if self.goal not in ("targeted", "untargeted"):
            raise ValueError(f"unknown goal {self.goal!r}")
        if not self.sigma2_grid or not self.avg_samples_grid:
            raise ValueError("grids must be non-empty")
        if self.images < 1 or self.repeats < 1:
            raise ValueError("images and repeats must be >= 1")
        if not self.experiment_id:
            self.experiment_id = f"{self.kind}-{self.attack}-{self.goal}"


@dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    attack: str
    goal: str
    sigma2: float
    avg_samples: int
    run_index: int
    asr: float | None
    accuracy: float | None
    mean_l2_distortion: float | None
    mean_queries: float | None
    wall_time: float


@dataclass(frozen=True)
class CalibrationRow:
    experiment_id: str
    k: float
    delta: float
    mode: str
    sigma2: float


def derive_rng(root_seed: int, *key) -> np.random.Generator:
    """Deterministic child stream keyed by (root seed, mixed identifiers)."""
    return np.random.default_rng(_seed_sequence(root_seed, *key))


def _seed_sequence(root_seed: int, *key) -> np.random.SeedSequence:
    words = [root_seed & 0xFFFFFFFF]
    for part in key:
        if isinstance(part, (int, np.integer)):
            words.append(int(part) & 0xFFFFFFFF)
        else:
            digest = hashlib.sha256(str(part).encode()).digest()
            words.append(int.from_bytes(digest[:4], "big"))
    return np.random.SeedSequence(words)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def write_rows_csv(path: str, rows, schema: str) -> None:
    """Schema-tagged CSV with columns exactly in row-dataclass field order."""
    if not rows:
        raise ValueError("no rows to write")
    names = [f.name for f in dataclasses.fields(rows[0])]
    lines = [f"# schema={schema}", ",".join(names)]
    for row in rows:
        lines.append(",".join(_format_cell(getattr(row, n)) for n in names))
    _atomic_write(path, "\n".join(lines) + "\n")


def parse_spec_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` config; blank lines and # comments ignored."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
            values[key.strip()] = value.strip()
    return values


_LIST_KEYS = {"sigma2": "sigma2_grid", "avg_samples": "avg_samples_grid",
              "k": "k_grid", "delta": "delta_grid"}
_INT_KEYS = ("images", "repeats", "seed")
_STR_KEYS = ("kind", "dataset", "model", "attack", "goal", "out")
_ATTACK_FLOAT_KEYS = ("h", "kappa", "c_init", "adam_alpha", "eta", "sigma_search",
                      "eps_budget")
_ATTACK_INT_KEYS = ("binary_search_steps", "coord_batch", "max_iters", "m")


def spec_from_mapping(values: dict[str, str]) -> ExperimentSpec:
    """Build an ExperimentSpec from flat string keys (config file / CLI)."""
    kwargs: dict = {}
    attack_kwargs: dict = {}
    for key, value in values.items():
        if key in _STR_KEYS:
            kwargs[key] = value
        elif key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key == "id":
            kwargs["experiment_id"] = value
        elif key == "mode":
            kwargs["mode"] = CalibrationMode(value)
        elif key in _LIST_KEYS:
            parts = [p for p in str(value).split(",") if p != ""]
            caster = int if key == "avg_samples" else float
            kwargs[_LIST_KEYS[key]] = tuple(caster(p) for p in parts)
        elif key in _ATTACK_FLOAT_KEYS:
            attack_kwargs[key] = float(value)
        elif key in _ATTACK_INT_KEYS:
            attack_kwargs[key] = int(value)
        else:
            raise ValueError(f"unknown experiment key {key!r}")
    if attack_kwargs:
        kwargs["attack_config"] = replace(AttackConfig(), **attack_kwargs)
    if "kind" not in kwargs:
        raise ValueError("experiment spec needs a kind")
    return ExperimentSpec(**kwargs)


def default_out_path(spec: ExperimentSpec) -> str:
    base = os.environ.get(OUT_DIR_ENV, ".")
    return os.path.join(base, f"{spec.experiment_id}.csv")


def _resolve(spec: ExperimentSpec) -> tuple[Dataset | None, Classifier | None]:
    if spec.kind == "calibration_curve":
        return None, None
    dataset = load_dataset(spec.dataset)
    if not spec.model:
        raise ValueError("experiment needs a model checkpoint (set model=PATH)")
    model = Classifier.load(spec.model)
    if model.input_dim != dataset.n:
        raise ValueError(f"model expects n={model.input_dim}, dataset has n={dataset.n}")
    return dataset, model


def _select_pool(spec: ExperimentSpec, dataset: Dataset,
                 model: Classifier) -> tuple[np.ndarray, list[AttackGoal]]:
    """Correctly classified examples, shuffled by the root seed; targeted
    goals draw a wrong class uniformly per image."""
    predictions = model.predict(dataset.pixels)
    correct = np.flatnonzero(predictions == dataset.labels)
    if len(correct) == 0:
        raise ValueError("no correctly classified examples to attack")
    order = derive_rng(spec.seed, spec.experiment_id, "pool").permutation(len(correct))
    chosen = correct[order][:spec.images]
    target_rng = derive_rng(spec.seed, spec.experiment_id, "targets")
    goals = []
    for idx in chosen:
        label = int(dataset.labels[idx])
        if spec.goal == "targeted":
            wrong = [c for c in range(dataset.num_classes) if c != label]
            goals.append(AttackGoal.targeted(int(target_rng.choice(wrong))))
        else:
            goals.append(AttackGoal.untargeted(label))
    return dataset.pixels[chosen], goals


def _run_attack_cell(spec: ExperimentSpec, model: Classifier, pool: np.ndarray,
                     goals: list[AttackGoal], sigma2: float, avg_samples: int,
                     cell_key: tuple) -> tuple[float, float, float]:
    """Attack every pool image in its own stream; returns (asr, mean L2 over
    successes, mean queries)."""
    cfg = replace(spec.attack_config, avg_samples=avg_samples)
    noise = None
    if sigma2 > 0.0:
        noise = NoiseModel.isotropic(sigma2, model.num_classes)
    ss = _seed_sequence(spec.seed, spec.experiment_id, *cell_key)
    children = ss.spawn(2 * len(pool))
    successes, l2s, queries = 0, [], []
    for j, (x0, goal) in enumerate(zip(pool, goals)):
        attack_seed = int(children[2 * j].generate_state(1)[0])
        if spec.attack == "whitebox":
            result = whitebox_attack(model, noise, x0, goal, cfg, seed=attack_seed,
                                     avg_samples=avg_samples)
        else:
            oracle = QueryOracle(model, noise, rng=np.random.default_rng(children[2 * j + 1]))
            attack_fn = zoo_attack if spec.attack == "zoo" else ql_attack
            result = attack_fn(oracle, x0, goal, cfg, seed=attack_seed)
        if result.success:
            successes += 1
            l2s.append(result.l2_distortion)
        queries.append(result.queries)
    asr = successes / len(pool)
    mean_l2 = float(np.mean(l2s)) if l2s else 0.0
    return asr, mean_l2, float(np.mean(queries))


def run_experiment(spec: ExperimentSpec, write: bool = True):
    """Execute the grid; returns the rows and writes the schema-tagged CSV.

    Cell order (and therefore row order) is deterministic: the outer grid in
    declaration order, repeats innermost.
    """
    if spec.kind == "calibration_curve":
        rows = [CalibrationRow(spec.experiment_id, k, d, spec.mode.value,
                               calibrate_variance(k, d, spec.mode))
                for k in spec.k_grid for d in spec.delta_grid]
        if write:
            write_rows_csv(spec.out or default_out_path(spec), rows, CALIBRATION_SCHEMA)
        return rows

    dataset, model = _resolve(spec)
    rows: list[ResultRow] = []

    if spec.kind in ("asr_vs_variance", "adaptive_averaging"):
        pool, goals = _select_pool(spec, dataset, model)
        avg_grid = spec.avg_samples_grid if spec.kind == "adaptive_averaging" else (1,)
        for gi, sigma2 in enumerate(spec.sigma2_grid):
            for gj, avg in enumerate(avg_grid):
                for rep in range(spec.repeats):
                    t0 = time.perf_counter()
                    asr, mean_l2, mean_q = _run_attack_cell(
                        spec, model, pool, goals, sigma2, avg, (gi, gj, rep))
                    noise = NoiseModel.isotropic(sigma2, model.num_classes) if sigma2 > 0 else None
                    acc_seed = int(_seed_sequence(spec.seed, spec.experiment_id,
                                                  "acc", gi, gj, rep).generate_state(1)[0])
                    accuracy = evaluate_accuracy(model, dataset, noise, seed=acc_seed)
                    rows.append(ResultRow(spec.experiment_id, spec.attack, spec.goal,
                                          sigma2, avg, rep, asr, accuracy, mean_l2,
                                          mean_q, time.perf_counter() - t0))
    elif spec.kind == "accuracy_vs_variance":
        for gi, sigma2 in enumerate(spec.sigma2_grid):
            for rep in range(spec.repeats):
                t0 = time.perf_counter()
                noise = NoiseModel.isotropic(sigma2, model.num_classes) if sigma2 > 0 else None
                acc_seed = int(_seed_sequence(spec.seed, spec.experiment_id,
                                              "acc", gi, rep).generate_state(1)[0])
                accuracy = evaluate_accuracy(model, dataset, noise, seed=acc_seed)
                rows.append(ResultRow(spec.experiment_id, "", spec.goal, sigma2, 1,
                                      rep, None, accuracy, None, None,
                                      time.perf_counter() - t0))
    elif spec.kind == "grad_error_vs_variance":
        pool, _ = _select_pool(spec, dataset, model)
        probe = pool[0]
        coords = range(dataset.n)
        for gi, sigma2 in enumerate(spec.sigma2_grid):
            for rep in range(spec.repeats):
                t0 = time.perf_counter()
                noise = NoiseModel.isotropic(sigma2, model.num_classes)
                div_seed = int(_seed_sequence(spec.seed, spec.experiment_id,
                                              "div", gi, rep).generate_state(1)[0])
                summary = gradient_l2_divergence(model, noise, probe, coords,
                                                 spec.attack_config.h, n_repeats=1,
                                                 seed=div_seed)
                rows.append(ResultRow(spec.experiment_id, "", spec.goal, sigma2, 1,
                                      rep, None, None, summary.mean, None,
                                      time.perf_counter() - t0))
    if write:
        write_rows_csv(spec.out or default_out_path(spec), rows, RESULT_SCHEMA)
    return rows

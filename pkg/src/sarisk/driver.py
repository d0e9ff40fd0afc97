"""Run orchestration: JSON configuration, replication batches, CSV output.

A run configuration names a model, a list of confidence levels and step
budgets, the importance-sampling mode, and a replication count.  For every
(n_steps, alpha) cell the driver executes the requested replications with
independent, pre-assigned seed streams (execution order cannot change any
number), aggregates them into one summary row, and, when replications and an
IS mode are present, adds variance-reduction ratios measured against a
matching batch of plain runs.

The summary CSV is byte-identical for a fixed (config, seed); wall times are
therefore only written to the optional per-replication detail CSV.
"""
from __future__ import annotations

import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .is_esscher import run_two_phase_esscher
from .is_translation import run_two_phase
from .loss_models import MODEL_BUILDERS, build_model
from .naive_estimator import NaiveReport, run_naive
from .sa_engine import StepSchedule

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "run_replication",
    "run_table",
    "CSV_COLUMNS",
]

IS_MODES = ("none", "translation", "esscher")
PHASE2_MODES = ("adaptive", "frozen")

CSV_COLUMNS = ("model", "alpha", "n_steps", "seed", "estimator", "var_hat",
               "cvar_hat", "sigma_n", "ci_low", "ci_high", "tail_hits",
               "wall_time_ms", "theta_norm", "mu_norm", "vr_var", "vr_cvar")


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


@dataclass
class RunConfig:
    model: str
    model_params: dict = field(default_factory=dict)
    alphas: tuple[float, ...] = (0.95, 0.99, 0.995)
    n_steps: tuple[int, ...] = (10_000, 100_000, 500_000)
    phase1_steps: int = 15_000
    is_mode: str = "translation"
    phase2_mode: str = "adaptive"
    replications: int = 1
    seed: int = 12345
    workers: int = 1
    psi: str = "identity"
    ci_level: float = 0.95
    step: StepSchedule = field(default_factory=StepSchedule)
    output: str | None = None
    detail_output: str | None = None


_KNOWN_KEYS = {
    "model", "model_params", "alphas", "n_steps", "phase1_steps", "is_mode",
    "phase2_mode", "replications", "seed", "workers", "psi", "ci_level",
    "step", "output", "detail_output",
}


def parse_config(doc: str | dict) -> RunConfig:
    """Validate a JSON run configuration and fill the documented defaults.

    Unknown keys produce a warning, not an error, so configs written for a
    newer revision still run.
    """
    if isinstance(doc, str):
        try:
            data = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    else:
        data = dict(doc)
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        warnings.warn(f"ignoring unknown config keys: {sorted(unknown)}", stacklevel=2)
        for key in unknown:
            data.pop(key)

    if "model" not in data:
        raise ConfigError("field 'model' is required")
    model = data["model"]
    if model not in MODEL_BUILDERS:
        raise ConfigError(f"field 'model': unknown model {model!r}, "
                          f"known: {sorted(MODEL_BUILDERS)}")

    alphas = tuple(float(a) for a in data.get("alphas", (0.95, 0.99, 0.995)))
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ConfigError(f"field 'alphas': levels must be in the open interval "
                              f"(0, 1), got {a}")
    n_steps = tuple(int(n) for n in data.get("n_steps", (10_000, 100_000, 500_000)))
    for n in n_steps:
        if n < 1:
            raise ConfigError(f"field 'n_steps': must be >= 1, got {n}")
    replications = int(data.get("replications", 1))
    if replications < 1:
        raise ConfigError(f"field 'replications': must be >= 1, got {replications}")
    phase1_steps = int(data.get("phase1_steps", 15_000))
    if phase1_steps < 1:
        raise ConfigError(f"field 'phase1_steps': must be >= 1, got {phase1_steps}")
    is_mode = data.get("is_mode", "translation")
    if is_mode not in IS_MODES:
        raise ConfigError(f"field 'is_mode': must be one of {IS_MODES}, got {is_mode!r}")
    phase2_mode = data.get("phase2_mode", "adaptive")
    if phase2_mode not in PHASE2_MODES:
        raise ConfigError(f"field 'phase2_mode': must be one of {PHASE2_MODES}, "
                          f"got {phase2_mode!r}")
    if is_mode == "esscher" and model != "nig_call":
        raise ConfigError("field 'is_mode': esscher tilting requires the nig_call model")
    if is_mode == "translation" and model == "nig_call":
        raise ConfigError("field 'is_mode': the nig_call model uses esscher or none")
    psi = data.get("psi", "identity")
    if psi not in ("identity", "square"):
        raise ConfigError(f"field 'psi': must be 'identity' or 'square', got {psi!r}")
    ci_level = float(data.get("ci_level", 0.95))
    if not 0.0 < ci_level < 1.0:
        raise ConfigError(f"field 'ci_level': must be in (0, 1), got {ci_level}")
    step_cfg = data.get("step", {})
    try:
        step = StepSchedule(gamma1=float(step_cfg.get("gamma1", 1.0)),
                            exponent=float(step_cfg.get("exponent", 0.75)),
                            offset=float(step_cfg.get("offset", 100.0)))
    except ValueError as exc:
        raise ConfigError(f"field 'step': {exc}") from exc
    workers = int(data.get("workers", 1))
    if workers < 1:
        raise ConfigError(f"field 'workers': must be >= 1, got {workers}")

    return RunConfig(
        model=model, model_params=dict(data.get("model_params", {})),
        alphas=alphas, n_steps=n_steps, phase1_steps=phase1_steps,
        is_mode=is_mode, phase2_mode=phase2_mode, replications=replications,
        seed=int(data.get("seed", 12345)), workers=workers, psi=psi,
        ci_level=ci_level, step=step, output=data.get("output"),
        detail_output=data.get("detail_output"))


def run_replication(model_id: str, model_params: dict, psi: str, estimator: str,
                    alpha: float, n_steps: int, phase1_steps: int,
                    phase2_mode: str, step: StepSchedule, ci_level: float,
                    seed_words: tuple[int, ...]) -> NaiveReport:
    """One replication, rebuilt from plain values so it can run in a worker
    process.  seed_words deterministically identifies its random stream."""
    model = build_model(model_id, model_params, psi=psi)
    rng = np.random.default_rng(np.random.SeedSequence(seed_words))
    frozen = phase2_mode == "frozen"
    if estimator == "none":
        return run_naive(model, alpha, n_steps, schedule=step, rng=rng,
                         ci_level=ci_level)
    if estimator == "translation":
        return run_two_phase(model, alpha, n_steps, phase1_steps=phase1_steps,
                             schedule=step, rng=rng, frozen=frozen,
                             ci_level=ci_level)
    if estimator == "esscher":
        return run_two_phase_esscher(model, alpha, n_steps,
                                     phase1_steps=phase1_steps, schedule=step,
                                     rng=rng, frozen=frozen, ci_level=ci_level)
    raise ValueError(f"unknown estimator {estimator!r}")


def _cell_seed_words(config_seed: int, cell_index: int, estimator: str,
                     replication: int) -> tuple[int, ...]:
    # Purely positional seed derivation: scheduling cannot change any stream.
    est_code = {"none": 0, "translation": 1, "esscher": 2}[estimator]
    return (config_seed, cell_index, est_code, replication)


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        if math.isnan(v):
            return "n/a"
        return f"{v:.6f}"
    return str(v)


def _mean(values) -> float:
    return float(np.mean(values))


def _sample_var(values) -> float:
    return float(np.var(values, ddof=1))


def run_table(config: RunConfig):
    """Execute the configured grid and return (summary_csv, detail_csv).

    One summary row per (n_steps, alpha): replication means of the estimates,
    a confidence interval (the single run's tail-variance interval for one
    replication, a replication-spread interval otherwise), and
    naive-to-IS variance ratios when both batches exist.  The detail CSV has
    one row per replication, including wall times.
    """
    estimators = [config.is_mode]
    if config.is_mode != "none" and config.replications > 1:
        estimators.append("none")  # paired plain batch for the variance ratios

    cells = [(n, a) for n in config.n_steps for a in config.alphas]
    tasks = []  # (cell_idx, estimator, replication, seed_words)
    for ci, (n, a) in enumerate(cells):
        for est in estimators:
            for r in range(config.replications):
                tasks.append((ci, est, r,
                              _cell_seed_words(config.seed, ci, est, r)))

    def _run(task):
        ci, est, r, words = task
        n, a = cells[ci]
        rep = run_replication(config.model, config.model_params, config.psi,
                              est, a, n, config.phase1_steps,
                              config.phase2_mode, config.step,
                              config.ci_level, words)
        return (ci, est, r, rep)

    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            raw = list(pool.map(_run_task, [
                (t, config.model, config.model_params, config.psi, cells,
                 config.phase1_steps, config.phase2_mode, config.step,
                 config.ci_level) for t in tasks]))
    else:
        raw = [_run(t) for t in tasks]

    by_cell: dict[tuple[int, str], list[tuple[int, NaiveReport]]] = {}
    for ci, est, r, rep in raw:
        by_cell.setdefault((ci, est), []).append((r, rep))
    for key in by_cell:
        by_cell[key].sort(key=lambda item: item[0])

    from ._mathx import norm_ppf
    summary = io.StringIO()
    detail = io.StringIO()
    header = ",".join(CSV_COLUMNS)
    summary.write(header + "\n")
    detail.write(header + "\n")

    for ci, (n, a) in enumerate(cells):
        main = [rep for _, rep in by_cell[(ci, config.is_mode)]]
        base = [rep for _, rep in by_cell.get((ci, "none"), [])] \
            if config.is_mode != "none" else []
        vr_var = vr_cvar = None
        if base and len(main) > 1:
            v_is, v_na = _sample_var([r.var_hat for r in main]), \
                _sample_var([r.var_hat for r in base])
            c_is, c_na = _sample_var([r.cvar_hat for r in main]), \
                _sample_var([r.cvar_hat for r in base])
            vr_var = v_na / v_is if v_is > 0 else None
            vr_cvar = c_na / c_is if c_is > 0 else None
        var_hat = _mean([r.var_hat for r in main])
        cvar_hat = _mean([r.cvar_hat for r in main])
        sigma_n = _mean([r.sigma_n for r in main])
        if len(main) == 1:
            ci_low, ci_high = main[0].ci_low, main[0].ci_high
        else:
            z = norm_ppf(0.5 + 0.5 * config.ci_level)
            half = z * math.sqrt(_sample_var([r.cvar_hat for r in main])
                                 / len(main))
            ci_low, ci_high = cvar_hat - half, cvar_hat + half
        row = {
            "model": config.model, "alpha": f"{a:g}", "n_steps": n,
            "seed": config.seed, "estimator": config.is_mode,
            "var_hat": var_hat, "cvar_hat": cvar_hat, "sigma_n": sigma_n,
            "ci_low": ci_low, "ci_high": ci_high,
            "tail_hits": main[0].n_tail_hits,
            "wall_time_ms": None,  # kept out of the summary for determinism
            "theta_norm": _mean([r.theta_norm for r in main])
            if main[0].theta_norm is not None else None,
            "mu_norm": _mean([r.mu_norm for r in main])
            if main[0].mu_norm is not None else None,
            "vr_var": vr_var, "vr_cvar": vr_cvar,
        }
        summary.write(",".join(_fmt(row[c]) for c in CSV_COLUMNS) + "\n")
        for est in estimators:
            for r_idx, rep in by_cell[(ci, est)]:
                drow = {
                    "model": config.model, "alpha": f"{a:g}", "n_steps": n,
                    "seed": f"{config.seed}/{r_idx}", "estimator": est,
                    "var_hat": rep.var_hat, "cvar_hat": rep.cvar_hat,
                    "sigma_n": rep.sigma_n, "ci_low": rep.ci_low,
                    "ci_high": rep.ci_high, "tail_hits": rep.n_tail_hits,
                    "wall_time_ms": rep.wall_time_ms,
                    "theta_norm": rep.theta_norm, "mu_norm": rep.mu_norm,
                    "vr_var": None, "vr_cvar": None,
                }
                detail.write(",".join(_fmt(drow[c]) for c in CSV_COLUMNS) + "\n")

    return summary.getvalue(), detail.getvalue()


def _run_task(packed):
    """Top-level worker entry (must be picklable)."""
    (task, model_id, model_params, psi, cells, phase1_steps, phase2_mode,
     step, ci_level) = packed
    ci, est, r, words = task
    n, a = cells[ci]
    rep = run_replication(model_id, model_params, psi, est, a, n,
                          phase1_steps, phase2_mode, step, ci_level, words)
    return (ci, est, r, rep)

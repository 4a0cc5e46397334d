"""Seeded synthetic experiments certifying the recovery bound.

Every trial draws its own generator from ``SeedSequence([seed, trial_index])``
so trials are independent of each other and of execution order; running
them serially or in a process pool gives identical records.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.fft import dct
from scipy.linalg import hadamard

from .audit import audit_solution_chain
from .bounds import a_priori_certificate, cq_constant, gamma_of_error
from .core import (
    Dictionary,
    LqCertifyError,
    Observation,
    RecoveryProblem,
    SparseSignal,
    l2_norm,
    normalize_columns,
)
from .solvers import ORACLE_MAX_N, SolverConfig, oracle_global, solve_constrained

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DICTIONARY_KINDS = ("gaussian", "two_ortho_spikes_dct", "two_ortho_spikes_hadamard")
AMPLITUDE_MODELS = ("unit", "uniform", "gaussian")
BOUND_SLACK = 1e-9


class ConfigError(LqCertifyError, ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    trials: int
    m: int
    n: int
    N: int
    q_list: tuple
    epsilon: float
    sigma: float
    dictionary_kind: str = "two_ortho_spikes_hadamard"
    amplitude_model: str = "unit"
    output_path: str = "results"
    gamma_mode: str = "ex_post"
    oracle_max_support: int = 0
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "q_list", tuple(float(q) for q in self.q_list))
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.trials < 1 or self.m < 1 or self.n < 1 or self.N < 1:
            raise ConfigError("trials, m, n and N must be positive")
        if self.N > self.n:
            raise ConfigError(f"N={self.N} exceeds n={self.n}")
        if self.m > self.n:
            raise ConfigError(f"m={self.m} exceeds n={self.n}")
        if not self.q_list or any(not (0 < q <= 1) for q in self.q_list):
            raise ConfigError("q_list must be nonempty with values in (0, 1]")
        if self.epsilon < 0 or self.sigma < 0:
            raise ConfigError("epsilon and sigma must be nonnegative")
        if self.sigma < self.epsilon:
            warnings.warn("sigma < epsilon: outside the regime covered by the bound",
                          RuntimeWarning, stacklevel=2)
        if self.dictionary_kind not in DICTIONARY_KINDS:
            raise ConfigError(f"dictionary_kind must be one of {DICTIONARY_KINDS}")
        if self.dictionary_kind.startswith("two_ortho") and self.n != 2 * self.m:
            raise ConfigError("two-ortho dictionaries need n = 2m")
        if self.dictionary_kind == "two_ortho_spikes_hadamard" and self.m & (self.m - 1):
            raise ConfigError("Hadamard dictionaries need m to be a power of two")
        if self.amplitude_model not in AMPLITUDE_MODELS:
            raise ConfigError(f"amplitude_model must be one of {AMPLITUDE_MODELS}")
        if self.gamma_mode not in ("ex_post", "worst_case"):
            raise ConfigError("gamma_mode must be 'ex_post' or 'worst_case'")
        if self.oracle_max_support and self.n > ORACLE_MAX_N:
            raise ConfigError(f"oracle comparison needs n <= {ORACLE_MAX_N}")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise OSError(f"{path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config fields {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q_list"] = list(self.q_list)
        return d


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    q: float
    M: float
    N: int
    gamma: Optional[float]
    threshold: float
    admissible: bool
    error_l2: float
    bound_value: Optional[float]
    bound_satisfied: bool
    residual: float
    objective: float
    oracle_gap: Optional[float]
    chain_all_pass: bool
    converged: bool
    support_split_pass: bool
    noise_l2: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial_index)]))


def build_dictionary(kind: str, m: int, n: int, rng=None) -> Dictionary:
    if kind == "two_ortho_spikes_hadamard":
        return normalize_columns(np.hstack([np.eye(m), hadamard(m) / math.sqrt(m)]))
    if kind == "two_ortho_spikes_dct":
        return normalize_columns(np.hstack([np.eye(m), dct(np.eye(m), norm="ortho", axis=0)]))
    if kind == "gaussian":
        if rng is None:
            raise ValueError("gaussian dictionaries need a generator")
        return normalize_columns(rng.standard_normal((m, n)))
    raise ConfigError(f"unknown dictionary kind {kind!r}")


def _amplitudes(rng, model, N):
    signs = rng.choice([-1.0, 1.0], size=N)
    if model == "unit":
        return signs
    if model == "uniform":
        return signs * rng.uniform(0.5, 1.5, size=N)
    a = rng.standard_normal(N)
    # a Gaussian draw of exactly zero would break the sparsity count
    return np.where(a == 0.0, 1.0, a)


def generate_instance(config: ExperimentConfig, trial_index: int, dictionary=None):
    """Draw ``(A, x0, observation, problems)`` for one trial.

    The noise is uniform in direction with norm ``epsilon * u``,
    ``u ~ U(0, 1]``, so ``||w||_2 <= epsilon`` always holds.
    """
    rng = trial_rng(config.seed, trial_index)
    A = dictionary
    if config.dictionary_kind == "gaussian":
        A = build_dictionary("gaussian", config.m, config.n, rng)
    elif A is None:
        A = build_dictionary(config.dictionary_kind, config.m, config.n)
    support = np.sort(rng.choice(config.n, size=config.N, replace=False))
    values = np.zeros(config.n)
    values[support] = _amplitudes(rng, config.amplitude_model, config.N)
    x0 = SparseSignal(values, zero_tol=0.0)
    direction = rng.standard_normal(config.m)
    direction /= l2_norm(direction)
    scale = 1.0 - rng.random()  # in (0, 1]
    w = direction * (config.epsilon * scale)
    y_clean = A.entries @ values
    obs = Observation(y_clean + w, epsilon=config.epsilon, y_clean=y_clean, noise=w)
    problems = [RecoveryProblem(A, obs, config.sigma, q) for q in config.q_list]
    return A, x0, obs, problems


def _solver_config(config: ExperimentConfig, trial_index: int) -> SolverConfig:
    seed = int(np.random.SeedSequence([int(config.seed), int(trial_index), 1]).generate_state(1, np.uint64)[0])
    return SolverConfig(**{**config.solver, "seed": seed})


def run_trial(config: ExperimentConfig, trial_index: int, dictionary=None) -> list:
    A, x0, obs, problems = generate_instance(config, trial_index, dictionary)
    M = A.coherence
    N = x0.sparsity
    scfg = _solver_config(config, trial_index)
    records = []
    for prob in problems:
        q = prob.q
        try:
            res = solve_constrained(prob, scfg, hint=x0.values)
        except (LqCertifyError, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.warning("trial %d q=%g: solver failed (%s)", trial_index, q, exc)
            records.append(_failed_record(trial_index, q, M, N, obs))
            continue
        e = res.x_star - x0.values
        err = l2_norm(e)
        gamma = None
        if q < 1.0 and np.any(e) and config.gamma_mode == "ex_post":
            gamma = gamma_of_error(e, q, N)
        if gamma is not None:
            cert = cq_constant(q, M, N, gamma, config.epsilon, config.sigma)
        elif q < 1.0:
            cert = a_priori_certificate(q, M, N, config.epsilon, config.sigma)
            gamma = cert.gamma
        else:
            cert = cq_constant(1.0, M, N, 1.0, config.epsilon, config.sigma)
        trace = audit_solution_chain(A, x0, res, q, config.epsilon, config.sigma)
        oracle_gap = None
        if config.oracle_max_support:
            orc = oracle_global(prob, config.oracle_max_support, seed=scfg.seed)
            oracle_gap = res.objective - orc.objective
        satisfied = bool(cert.admissible and err <= cert.bound_value + BOUND_SLACK)
        records.append(TrialRecord(
            trial_index=trial_index, q=q, M=M, N=N, gamma=gamma,
            threshold=cert.threshold, admissible=cert.admissible, error_l2=err,
            bound_value=cert.bound_value, bound_satisfied=satisfied,
            residual=res.residual, objective=res.objective, oracle_gap=oracle_gap,
            chain_all_pass=trace.all_pass, converged=res.diagnostics.converged,
            support_split_pass=trace.link("support_split").passed,
            noise_l2=l2_norm(obs.noise),
        ))
    return records


def _failed_record(trial_index, q, M, N, obs):
    return TrialRecord(trial_index, q, M, N, None, math.nan, False, math.nan, None, False,
                       math.nan, math.nan, None, False, False, False, l2_norm(obs.noise))


def _run_chunk(args):
    config, indices = args
    dictionary = None
    if config.dictionary_kind != "gaussian":
        dictionary = build_dictionary(config.dictionary_kind, config.m, config.n)
    out = []
    for i in indices:
        out.extend(run_trial(config, i, dictionary))
    return out


def resolve_workers(workers: Optional[int] = None) -> int:
    """``None`` reads ``LQ_CERTIFY_THREADS``; 0 means one worker per CPU."""
    if workers is None:
        workers = int(os.environ.get("LQ_CERTIFY_THREADS", "0") or 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def run_trials(config: ExperimentConfig, workers: Optional[int] = None) -> list:
    workers = resolve_workers(workers)
    indices = list(range(config.trials))
    if workers == 1:
        records = _run_chunk((config, indices))
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [r for part in pool.map(_run_chunk, [(config, c) for c in chunks])
                       for r in part]
    return sorted(records, key=lambda r: (r.trial_index, r.q))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TrialRecord.columns())
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in TrialRecord.columns()])
    return buf.getvalue()


def read_records_csv(path) -> list:
    def parse(name, text):
        if text == "":
            return None
        if text in ("true", "false"):
            return text == "true"
        if name in ("trial_index", "N"):
            return int(text)
        return float(text)

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [TrialRecord(**{k: parse(k, v) for k, v in row.items()}) for row in reader]


def _quantiles(values):
    if not values:
        return None
    qs = np.quantile(np.asarray(values, dtype=float), [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(("min", "q25", "median", "q75", "max"), (float(v) for v in qs)))


def _mean(values):
    return float(np.mean(values)) if values else None


def summarize(records) -> dict:
    """Aggregate records; the result does not depend on the input order."""
    records = sorted(records, key=lambda r: (r.trial_index, r.q))
    if not records:
        raise ValueError("cannot summarize an empty record collection")
    out = {"schema_version": SCHEMA_VERSION, "records": len(records), "by_q": {}}
    for q in sorted({r.q for r in records}):
        rs = [r for r in records if r.q == q]
        failed = [r for r in rs if not r.converged]
        admissible = [r for r in rs if r.admissible and r.converged]
        certified = [r for r in admissible if r.chain_all_pass]
        gammas = [r.gamma for r in rs if r.gamma is not None]
        ratios = [r.error_l2 / r.bound_value for r in admissible if r.bound_value]
        out["by_q"][_fmt(q)] = {
            "trials": len(rs),
            "solver_failures": len(failed),
            "admissible": len(admissible),
            "certified": len(certified),
            "bound_satisfaction_rate": (
                sum(r.bound_satisfied for r in certified) / len(certified) if certified else None
            ),
            "admissible_satisfaction_rate": (
                sum(r.bound_satisfied for r in admissible) / len(admissible) if admissible else None
            ),
            "support_split_failures": sum(not r.support_split_pass for r in rs if r.converged),
            "chain_failures": sum(not r.chain_all_pass for r in rs if r.converged),
            "gamma_mean": _mean(gammas),
            "gamma_min": min(gammas) if gammas else None,
            "gamma_max": max(gammas) if gammas else None,
            "gamma_gt2_fraction": (sum(g > 2 for g in gammas) / len(gammas)) if gammas else None,
            "tightness_mean": _mean(ratios),
            "tightness_quantiles": _quantiles(ratios),
            "error_l2_mean": _mean([r.error_l2 for r in rs if r.converged]),
        }
    if 1.0 in {r.q for r in records}:
        base = {r.trial_index: r for r in records if r.q == 1.0 and r.converged}
        paired = {}
        for q in sorted({r.q for r in records if r.q < 1.0}):
            diffs = [r.error_l2 - base[r.trial_index].error_l2 for r in records
                     if r.q == q and r.converged and r.trial_index in base]
            paired[_fmt(q)] = {
                "pairs": len(diffs),
                "mean_error_difference": _mean(diffs),
                "fraction_lq_smaller": (sum(d < 0 for d in diffs) / len(diffs)) if diffs else None,
            }
        out["paired_vs_l1"] = paired
    return out


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return float(f"{obj:.17g}")
    return obj


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None, write: bool = True):
    """Run all trials, then write ``records.csv`` and ``summary.json``."""
    records = run_trials(config, workers)
    summary = summarize(records)
    summary["config"] = config.to_dict()
    if write:
        out = Path(config.output_path)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "records.csv").write_text(records_to_csv(records))
            (out / "summary.json").write_text(
                json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise OSError(f"{out}: cannot write results ({exc.strerror or exc})") from exc
    return records, summary

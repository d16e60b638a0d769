"""Experiment harness: config parsing, grid expansion, Monte-Carlo phase runs,
LD-bound tabulation, and deterministic CSV emission.

Seeding: the master seed expands to per-(grid point, trial) seeds through one
fixed 64-bit mixer,

    trial_seed = mix64(master + mix64(point_index * 10**6 + trial_index)),

with mix64 the splitmix64 finalizer; estimator-internal streams derive from
the trial seed the same way.  Output is written in (point, trial) order, so a
(config, seed) pair reproduces the CSV byte for byte regardless of the worker
count (LDGAP_THREADS caps parallelism; default = logical cores).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import LdgapError, ParameterError, ResourceGuardError
from .estimators import (
    EstimatorConfig,
    bikmeans,
    cluster_project_hc,
    derive_seed,
    exact_kmeans,
    lloyd_multi,
    sparse_exhaustive_it,
    sparse_two_step,
)
from .ldbounds import mmse_lower_bound, threshold_curve
from .models import (
    BICLUSTERING,
    CLUSTERING,
    SPARSE,
    ModelSpec,
    estimate_sigma2,
    realized_separation,
    sample_prior,
)
from .partitions import clustering_error

CSV_SCHEMA = 1
RESULT_COLUMNS = (
    "model", "n", "p", "K", "L", "s", "delta2_target", "delta2_realized_mean",
    "estimator", "trials", "mean_err", "std_err", "exact_recovery_rate",
    "comp_threshold", "stat_threshold", "seed",
)

ESTIMATORS = (
    "exact_kmeans", "lloyd_multi", "cluster_project_hc",
    "sparse_two_step", "sparse_exhaustive", "bikmeans_exhaustive",
    "bikmeans_alternating",
)


def mix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def trial_seed(master: int, point_index: int, trial_index: int) -> int:
    return mix64((int(master) & 0xFFFFFFFFFFFFFFFF) + mix64(point_index * 10 ** 6 + trial_index))


@dataclass
class ExperimentConfig:
    model: str = CLUSTERING
    n: list = field(default_factory=lambda: [100])
    p: list = field(default_factory=lambda: [50])
    K: list = field(default_factory=lambda: [2])
    L: list = field(default_factory=list)
    s: list = field(default_factory=list)
    delta2: list = field(default_factory=lambda: [1.0])
    estimator: str = "lloyd_multi"
    trials: int = 10
    seed: int = 0
    out: Optional[str] = None
    format: str = "csv"
    backend: str = "single_linkage"
    restarts: int = 5
    sigma2: str = "1"
    degree: list = field(default_factory=lambda: [1, 2])
    with_sw: bool = False
    with_empirical: bool = False
    empirical_train: int = 20000
    empirical_test: int = 20000

    def __post_init__(self):
        if self.model not in (CLUSTERING, SPARSE, BICLUSTERING):
            raise ParameterError(f"unknown model {self.model!r}")
        if self.estimator not in ESTIMATORS:
            raise ParameterError(f"unknown estimator {self.estimator!r}; "
                                 f"choose from {ESTIMATORS}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.format not in ("csv", "json-lines"):
            raise ParameterError("format must be csv or json-lines")
        for name in ("n", "p", "K", "L", "s"):
            setattr(self, name, [int(v) for v in getattr(self, name)])
        self.delta2 = [str(v) for v in self.delta2]
        self.degree = [int(v) for v in self.degree]
        if not self.n or not self.p or not self.K or not self.delta2:
            raise ParameterError("grid lists must be nonempty")


_LIST_KEYS = {"n", "p", "K", "L", "s", "delta2", "degree"}
_INT_KEYS = {"trials", "seed", "restarts", "empirical_train", "empirical_test"}
_BOOL_KEYS = {"with_sw", "with_empirical"}


def parse_config(path: Optional[str], overrides: Optional[list[str]] = None) -> ExperimentConfig:
    """Flat key-value text file plus `key=value` flag overrides; flags win.
    Grid lists are comma-separated."""
    raw: dict[str, str] = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParameterError(f"{path}:{lineno}: expected key = value")
                key, val = line.split("=", 1)
                raw[key.strip()] = val.strip()
    for item in overrides or []:
        if "=" not in item:
            raise ParameterError(f"override {item!r} must be key=value")
        key, val = item.split("=", 1)
        raw[key.strip()] = val.strip()

    kwargs = {}
    valid = {f.name for f in fields(ExperimentConfig)}
    for key, val in raw.items():
        if key not in valid:
            raise ParameterError(f"unknown config key {key!r}")
        if key in _LIST_KEYS:
            kwargs[key] = [v.strip() for v in val.split(",") if v.strip()]
        elif key in _INT_KEYS:
            kwargs[key] = int(val)
        elif key in _BOOL_KEYS:
            kwargs[key] = val.lower() in ("1", "true", "yes")
        else:
            kwargs[key] = val
    return ExperimentConfig(**kwargs)


def grid_points(cfg: ExperimentConfig) -> list[dict]:
    pts = []
    Ls = cfg.L or [None]
    ss = cfg.s or [None]
    for n in cfg.n:
        for p in cfg.p:
            for K in cfg.K:
                for L in Ls:
                    for s in ss:
                        for d2 in cfg.delta2:
                            pts.append(dict(n=n, p=p, K=K, L=L, s=s, delta2=d2))
    return pts


def build_spec(cfg: ExperimentConfig, pt: dict) -> ModelSpec:
    sigma2 = Fraction(cfg.sigma2) if cfg.sigma2 != "auto" else Fraction(1)
    d2 = Fraction(pt["delta2"])
    if cfg.model == CLUSTERING:
        return ModelSpec.clustering(pt["n"], pt["p"], pt["K"],
                                    delta_bar2=d2, sigma2=sigma2)
    if cfg.model == SPARSE:
        if pt["s"] is None:
            raise ParameterError("sparse model needs the s grid")
        rho = Fraction(pt["s"], pt["p"])
        return ModelSpec.sparse(pt["n"], pt["p"], pt["K"], rho,
                                delta_bar2=d2, sigma2=sigma2)
    if pt["L"] is None:
        raise ParameterError("biclustering needs the L grid")
    return ModelSpec.biclustering(pt["n"], pt["p"], pt["K"], pt["L"],
                                  delta_bar2=d2, sigma2=sigma2)


def run_estimator(name: str, Y: np.ndarray, spec: ModelSpec,
                  cfg: ExperimentConfig, seed: int, sigma2_value: float):
    K = spec.K if spec.model_kind == CLUSTERING else 2 * spec.K
    est_cfg = EstimatorConfig(K=K, L=spec.L, split_seed=seed,
                              lowdim_backend=cfg.backend, restarts=cfg.restarts)
    if name == "exact_kmeans":
        return exact_kmeans(Y, K)
    if name == "lloyd_multi":
        return lloyd_multi(Y, K, cfg.restarts, seed)
    if name == "cluster_project_hc":
        return cluster_project_hc(Y, K, est_cfg)
    if name == "sparse_two_step":
        s_budget = int(spec.s_high) if spec.model_kind == SPARSE else Y.shape[1]
        return sparse_two_step(Y, K, max(1, min(s_budget, Y.shape[1])), est_cfg,
                               sigma2=sigma2_value, seed=seed)
    if name == "sparse_exhaustive":
        s_budget = int(spec.s_high) if spec.model_kind == SPARSE else Y.shape[1]
        return sparse_exhaustive_it(Y, K, max(1, min(s_budget, Y.shape[1])),
                                    seed=seed, sigma2=sigma2_value)
    if name == "bikmeans_exhaustive":
        return bikmeans(Y, K, 2 * spec.L, mode="exhaustive")
    if name == "bikmeans_alternating":
        return bikmeans(Y, K, 2 * spec.L, mode="alternating",
                        restarts=cfg.restarts, seed=seed)
    raise ParameterError(f"unknown estimator {name!r}")


def run_point(cfg: ExperimentConfig, point_index: int, pt: dict) -> dict:
    spec = build_spec(cfg, pt)
    errs, recov, d2s = [], [], []
    failed = 0
    for t in range(cfg.trials):
        seed = trial_seed(cfg.seed, point_index, t)
        state, obs, truth = sample_prior(spec, seed)
        sigma2_value = float(spec.sigma2) if cfg.sigma2 != "auto" \
            else estimate_sigma2(obs.Y)
        try:
            est = run_estimator(cfg.estimator, obs.Y, spec, cfg,
                                derive_seed(seed, 0xE57), sigma2_value)
        except (ResourceGuardError, LdgapError):
            failed += 1
            continue
        err = float(clustering_error(est.rows, truth.rows))
        errs.append(err)
        recov.append(1.0 if err == 0.0 else 0.0)
        try:
            d2s.append(realized_separation(obs.X, truth.rows, float(spec.sigma2)))
        except LdgapError:
            pass
    th = threshold_curve(spec)
    done = len(errs)
    mean_err = float(np.mean(errs)) if done else math.nan
    std_err = float(np.std(errs, ddof=1) / math.sqrt(done)) if done > 1 else \
        (0.0 if done == 1 else math.nan)
    if done:
        assert 0.0 <= mean_err <= 1.0
        assert all(0.0 <= r <= 1.0 for r in recov)
    return dict(
        model=cfg.model, n=pt["n"], p=pt["p"], K=pt["K"],
        L=pt["L"] if pt["L"] is not None else "",
        s=pt["s"] if pt["s"] is not None else "",
        delta2_target=float(Fraction(pt["delta2"])),
        delta2_realized_mean=float(np.mean(d2s)) if d2s else math.nan,
        estimator=cfg.estimator, trials=done,
        mean_err=mean_err, std_err=std_err,
        exact_recovery_rate=float(np.mean(recov)) if done else math.nan,
        comp_threshold=th.comp_threshold, stat_threshold=th.stat_threshold,
        seed=cfg.seed,
    )


def _worker(args):
    cfg_kwargs, point_index, pt = args
    cfg = ExperimentConfig(**cfg_kwargs)
    return point_index, run_point(cfg, point_index, pt)


def _config_kwargs(cfg: ExperimentConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(ExperimentConfig)}


def worker_count() -> int:
    env = os.environ.get("LDGAP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_phase(cfg: ExperimentConfig) -> list[dict]:
    pts = grid_points(cfg)
    workers = min(worker_count(), len(pts))
    rows: list[Optional[dict]] = [None] * len(pts)
    if workers <= 1 or len(pts) == 1:
        for i, pt in enumerate(pts):
            rows[i] = run_point(cfg, i, pt)
    else:
        kwargs = _config_kwargs(cfg)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, row in pool.map(_worker, [(kwargs, i, pt) for i, pt in enumerate(pts)]):
                rows[i] = row
    return rows  # already in deterministic (point) order


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    lines = [f"#schema={CSV_SCHEMA}", ",".join(RESULT_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in RESULT_COLUMNS))
    return "\n".join(lines) + "\n"


def rows_to_jsonl(rows: list[dict]) -> str:
    import json

    out = []
    for row in rows:
        out.append(json.dumps({c: row[c] for c in RESULT_COLUMNS}, sort_keys=True))
    return "\n".join(out) + "\n"


def write_rows(rows: list[dict], cfg: ExperimentConfig, path: Optional[str]) -> str:
    text = rows_to_csv(rows) if cfg.format == "csv" else rows_to_jsonl(rows)
    target = path or cfg.out
    if target:
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def read_csv(path: str) -> list[dict]:
    """Parse a cmd_phase CSV; raises ParameterError with the line number on
    malformed input."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = [(no, ln) for no, ln in enumerate(lines, start=1) if not ln.startswith("#")]
    if not body:
        raise ParameterError(f"{path}:1: missing header row")
    header = body[0][1].split(",")
    rows = []
    for no, ln in body[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise ParameterError(f"{path}:{no}: expected {len(header)} fields")
        rows.append(dict(zip(header, parts)))
    if not rows:
        raise ParameterError(f"{path}: no data rows")
    return rows


# ---------------------------------------------------------------------------
# LD-bound tabulation
# ---------------------------------------------------------------------------

def run_ldbound(cfg: ExperimentConfig) -> list[dict]:
    from .ldbounds import empirical_lowdeg_mmse, sw_correlation_sum

    rows = []
    for i, pt in enumerate(grid_points(cfg)):
        spec = build_spec(cfg, pt)
        for D in cfg.degree:
            rep = mmse_lower_bound(spec, D)
            row = dict(
                model=cfg.model, n=pt["n"], p=pt["p"], K=pt["K"],
                L=pt["L"] if pt["L"] is not None else "",
                s=pt["s"] if pt["s"] is not None else "",
                delta2_target=float(Fraction(pt["delta2"])), D=D,
                zeta=rep.zeta,
                zeta_prime=rep.zeta_prime if rep.zeta_prime is not None else "",
                mmse_lower=rep.mmse_lower, variance_x=rep.variance_x,
                flags=";".join(rep.regime_flags) +
                      (";clamped" if rep.clamped else "") +
                      (";vacuous" if rep.vacuous else ""),
                sw_sum="", empirical_mmse="", empirical_se="",
            )
            if cfg.with_sw:
                try:
                    row["sw_sum"] = sw_correlation_sum(spec, D)
                except ResourceGuardError as exc:
                    row["flags"] += f";sw-guard:{exc}"
            if cfg.with_empirical:
                try:
                    mse, se = empirical_lowdeg_mmse(
                        spec, D, cfg.empirical_train, cfg.empirical_test,
                        trial_seed(cfg.seed, i, D))
                    row["empirical_mmse"] = mse
                    row["empirical_se"] = se
                except (ResourceGuardError, ParameterError) as exc:
                    row["flags"] += f";empirical-guard:{exc}"
            rows.append(row)
    return rows


LDBOUND_COLUMNS = (
    "model", "n", "p", "K", "L", "s", "delta2_target", "D", "zeta", "zeta_prime",
    "mmse_lower", "variance_x", "sw_sum", "empirical_mmse", "empirical_se", "flags",
)


def ldbound_table(rows: list[dict]) -> str:
    lines = [f"#schema={CSV_SCHEMA}", ",".join(LDBOUND_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in LDBOUND_COLUMNS))
    return "\n".join(lines) + "\n"

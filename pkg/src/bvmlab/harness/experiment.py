"""Replicated convergence experiments.

RNG streams
-----------
Streams are keyed by position, never by execution order:

* design for sample size ``n``: ``SeedSequence(seed, spawn_key=(n, 0))``
* replicate ``r`` at size ``n``, purpose ``j``:
  ``SeedSequence(seed, spawn_key=(n, 1, r, j))`` with ``j = 0`` response
  noise, ``j = 1`` posterior Monte Carlo, ``j = 2`` moment constant.

The three experiments share these streams, so for equal ``seed`` they see
the same designs and noise.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .. import gprior, pmom
from ..errors import NumericalError
from ..regression import calibrate_beta0, event_sn, event_sn_tilde, fit, generate_design, simulate_response
from .config import ExperimentConfig

MAX_FAILURE_FRACTION = 0.10

REPORT_COLUMNS = (
    "experiment",
    "n",
    "p",
    "replicate",
    "status",
    "h2_estimate",
    "h2_se",
    "tail_prob",
    "tail_degenerate",
    "t_n",
    "jensen_bound",
    "jensen_se",
    "s_n_member",
    "q_proj",
    "q_resid",
    "q_t",
    "q_t_se",
    "q_t_target",
    "shift_quadform",
    "det_ratio_1",
    "det_ratio_2",
)


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    wall_times: dict = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.rows if r["status"] != "ok")


def design_seed(seed: int, n: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(n, 0))


def replicate_seed(seed: int, n: int, rep: int, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(n, 1, rep, purpose))


@lru_cache(maxsize=16)
def _design(seed: int, n: int, p: int, mode: str) -> np.ndarray:
    X = generate_design(n, p, mode, design_seed(seed, n))
    X.setflags(write=False)
    return X


def _truth(cfg: ExperimentConfig, X: np.ndarray) -> np.ndarray:
    if cfg.beta0_mode == "ones":
        return np.ones(X.shape[1])
    return calibrate_beta0(X, cfg.target_for(X.shape[0]))


def _blank_row(cfg, n, p, rep) -> dict:
    row = dict.fromkeys(REPORT_COLUMNS)
    row.update(experiment=cfg.experiment, n=n, p=p, replicate=rep, status="ok")
    return row


def _gprior_row(cfg, row, data, n, p, rep):
    hyper = cfg.gprior_hyper()
    s0sq = cfg.sigma0**2
    post = gprior.build_omega_posterior(hyper, data, K=cfg.omega_nodes)
    rule = cfg.threshold_rule()
    tail, degenerate = gprior.tail_prob_at_rule(post, rule)
    mc_seed = replicate_seed(cfg.seed, n, rep, 1)
    h2 = gprior.bvm_hellinger(data, hyper, post, cfg.mc_samples, mc_seed, target_sigma2=s0sq)
    if cfg.experiment == "gprior_fixed":
        jensen, jensen_se = gprior.jensen_upper_bound(post, data), 0.0
        member = event_sn(data, s0sq, cfg.l1, cfg.l2)
    else:
        est = gprior.jensen_upper_bound_mc(post, data, s0sq, cfg.mc_samples, mc_seed)
        jensen, jensen_se = est.value, est.std_error
        member = event_sn_tilde(data, s0sq, cfg.l1, cfg.l2)
    row.update(
        h2_estimate=h2.value,
        h2_se=h2.std_error,
        tail_prob=tail,
        tail_degenerate=degenerate,
        t_n=rule.t_n(n, p),
        jensen_bound=jensen,
        jensen_se=jensen_se,
        s_n_member=member,
    )


def _pmom_row(cfg, row, data, n, p, rep):
    pcfg = cfg.pmom_config()
    model = pmom.build_pmom_model(data, pcfg, m=cfg.q_samples, seed=replicate_seed(cfg.seed, n, rep, 2))
    h2 = pmom.pmom_bvm_hellinger(model, data, pcfg, cfg.mc_samples, replicate_seed(cfg.seed, n, rep, 1))
    diag = pmom.closeness_diagnostics(model, data, pcfg)
    beta0 = _truth(cfg, data.X)
    row.update(
        h2_estimate=h2.value,
        h2_se=h2.std_error,
        s_n_member=event_sn(data, pcfg.sigma2, cfg.l1, cfg.l2),
        q_t=model.Q.value,
        q_t_se=model.Q.std_error,
        q_t_target=float(np.prod(beta0 ** (2 * pcfg.r))),
        shift_quadform=diag.shift_quadform,
        det_ratio_1=diag.det_ratio_1,
        det_ratio_2=diag.det_ratio_2,
    )


def run_replicate(cfg: ExperimentConfig, n: int, rep: int) -> tuple[dict, float]:
    """One report row and its wall time.  Numerical failures become a status code."""
    start = time.perf_counter()
    p = cfg.p_of(n)
    row = _blank_row(cfg, n, p, rep)
    try:
        X = _design(cfg.seed, n, p, cfg.design)
        beta0 = _truth(cfg, X)
        Y = simulate_response(X, beta0, cfg.sigma0, replicate_seed(cfg.seed, n, rep, 0))
        data = fit(X, Y)
        row.update(q_proj=data.q_proj, q_resid=data.q_resid)
        if cfg.experiment == "pmom":
            _pmom_row(cfg, row, data, n, p, rep)
        else:
            _gprior_row(cfg, row, data, n, p, rep)
        bad = [k for k, v in row.items() if isinstance(v, float) and not math.isfinite(v)]
        if bad:
            raise NumericalError("non-finite estimate", {"columns": bad})
    except NumericalError:
        row = _failed(cfg, n, p, rep, "numerical_error")
    except np.linalg.LinAlgError:
        row = _failed(cfg, n, p, rep, "linalg_error")
    except FloatingPointError:
        row = _failed(cfg, n, p, rep, "floating_point_error")
    return row, time.perf_counter() - start


def _failed(cfg, n, p, rep, code):
    row = _blank_row(cfg, n, p, rep)
    row["status"] = code
    return row


def _run_task(args):
    cfg, n, rep = args
    return run_replicate(cfg, n, rep)


def default_workers() -> int:
    env = os.environ.get("BVM_THREADS", "").strip()
    if env:
        try:
            value = int(env)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ConvergenceReport:
    """Run every ``(n, replicate)`` cell; output does not depend on ``workers``."""
    cfg.validate()
    tasks = [(cfg, n, rep) for n in cfg.n_schedule for rep in range(cfg.replicates)]
    workers = max(1, min(workers or default_workers(), len(tasks)))
    if workers == 1:
        results = [_run_task(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (8 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=chunk))
    results.sort(key=lambda item: (item[0]["n"], item[0]["replicate"]))
    report = ConvergenceReport(cfg)
    for row, wall in results:
        report.rows.append(row)
        report.wall_times[(row["n"], row["replicate"])] = wall
    if report.n_failed > MAX_FAILURE_FRACTION * len(report.rows):
        codes = sorted({r["status"] for r in report.rows if r["status"] != "ok"})
        raise NumericalError(
            "too many failed replicates",
            {"failed": report.n_failed, "rows": len(report.rows), "codes": codes},
        )
    return report

"""Phase-transition sweeps: synthetic data, sketch, decode, compare with a baseline."""
import csv
import json
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .core import GaussianMixture, InvalidParameter, NumericalFailure
from .decoders import DecoderOptions, decode_diracs, decode_gmm, decode_pca
from .evaluation import (
    baseline_em,
    baseline_exact_pca,
    baseline_lloyd,
    clustering_risk,
    gmm_negative_log_likelihood,
    match_components,
    pca_risk,
    second_moment,
)
from .frequencies import quadratic_scheme, sample_plain_fourier, sample_weighted_fourier
from .kernels import lambda_for_separation, separation_gmm
from .sketching import sketch_dataset

CSV_HEADER = ["d", "k", "m", "trial", "success", "risk", "baseline_risk", "runtime"]
TASKS = ("kmeans", "kmedians", "gmm", "pca")
DEFAULT_METRIC = {"kmeans": "risk_ratio", "kmedians": "risk_ratio", "gmm": "mean_error", "pca": "excess_risk"}


@dataclass
class ExperimentGrid:
    task: str
    d_values: List[int]
    k_values: List[int]
    m_values: List[int] = field(default_factory=list)
    m_factors: List[float] = field(default_factory=list)  # m = round(f * k * d)
    n: int = 10000
    trials: int = 20
    lambda_rule: Dict[str, float] = field(default_factory=lambda: {"lambda": 1.0})
    success_metric: Optional[str] = None
    seed: int = 0
    # synthetic data
    data_radius: Optional[float] = None
    separation: float = 4.0
    cluster_std: float = 0.5
    noise: float = 0.05
    # decoding
    restarts: int = 8
    baseline_restarts: int = 5
    decoder_radius: Optional[float] = None
    enforce_constraints: bool = False
    risk_factor: float = 2.0
    mean_tol: float = 0.1
    pca_tol: float = 0.05

    def __post_init__(self):
        if self.task not in TASKS:
            raise InvalidParameter(f"task must be one of {TASKS}")
        if not self.d_values or not self.k_values or not (self.m_values or self.m_factors):
            raise InvalidParameter("d_values, k_values and m_values (or m_factors) must be nonempty")
        if self.trials < 1:
            raise InvalidParameter("trials must be >= 1")
        if self.success_metric is None:
            self.success_metric = DEFAULT_METRIC[self.task]
        if set(self.lambda_rule) - {"lambda", "epsilon"} or len(self.lambda_rule) != 1:
            raise InvalidParameter('lambda_rule must be {"lambda": x} or {"epsilon": e}')

    @classmethod
    def from_file(cls, path) -> "ExperimentGrid":
        with open(path) as fh:
            return cls(**json.load(fh))

    def sketch_sizes(self, d, k):
        sizes = list(self.m_values) + [max(1, int(round(f * k * d))) for f in self.m_factors]
        return list(dict.fromkeys(sizes))

    def lam(self, k):
        if "lambda" in self.lambda_rule:
            return float(self.lambda_rule["lambda"])
        return lambda_for_separation(float(self.lambda_rule["epsilon"]), k)

    def cells(self):
        for d in self.d_values:
            for k in self.k_values:
                for m in self.sketch_sizes(d, k):
                    for t in range(self.trials):
                        yield d, k, m, t


def _seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0])


def _ball(rng, d, R):
    g = rng.standard_normal(d)
    return R * rng.random() ** (1.0 / d) * g / np.linalg.norm(g)


def separated_points(rng, k, d, radius, sep, max_tries=100000):
    """k points in the radius-ball with pairwise distance >= sep (rejection sampling)."""
    pts = []
    for _ in range(max_tries):
        c = _ball(rng, d, radius)
        if all(np.linalg.norm(c - q) >= sep for q in pts):
            pts.append(c)
            if len(pts) == k:
                return np.array(pts)
    raise NumericalFailure("could not place separated centers; enlarge data_radius")


def make_blobs(rng, n, k, d, radius, sep, std):
    C = separated_points(rng, k, d, radius, sep)
    labels = rng.integers(k, size=n)
    return C[labels] + std * rng.standard_normal((n, d)), C


def make_low_rank(rng, n, k, d, noise):
    U, _ = np.linalg.qr(rng.standard_normal((d, k)))
    scales = np.linspace(2.0, 1.0, k)
    Z = rng.uniform(-1.0, 1.0, size=(n, k)) * scales
    return Z @ U.T + noise * rng.uniform(-1.0, 1.0, size=(n, d))


def run_trial(grid: ExperimentGrid, d: int, k: int, m: int, trial: int, timing: bool = False):
    """One row of the results table."""
    t0 = time.perf_counter()
    data_rng = np.random.default_rng(_seed(grid.seed, d, k, trial))
    freq_seed = _seed(grid.seed, d, k, m, trial, 1)
    opts = DecoderOptions(restarts=grid.restarts, seed=_seed(grid.seed, d, k, m, trial, 2),
                          enforce_constraints=grid.enforce_constraints)
    if grid.task in ("kmeans", "kmedians"):
        R = grid.data_radius or 5.0
        X, _ = make_blobs(data_rng, grid.n, k, d, R, grid.separation, grid.cluster_std)
        lam = grid.lam(k)
        freq = sample_weighted_fourier(lam, d, m, freq_seed)
        y = sketch_dataset(X, freq)
        eps = grid.lambda_rule.get("epsilon")
        h = decode_diracs(y, freq, k, (eps, grid.decoder_radius or R + 2 * grid.cluster_std), opts).model
        p = 2 if grid.task == "kmeans" else 1
        risk = clustering_risk(X, h, p)
        base = clustering_risk(X, baseline_lloyd(X, k, grid.baseline_restarts, _seed(grid.seed, d, k, trial, 3)), p)
        success = risk <= grid.risk_factor * base
    elif grid.task == "gmm":
        lam = grid.lam(k)
        eps = separation_gmm(lam, k)
        R = grid.data_radius or 1.25 * eps * k ** (1.0 / d)
        M = separated_points(data_rng, k, d, R, 2 * eps)
        X = M[data_rng.integers(k, size=grid.n)] + data_rng.standard_normal((grid.n, d))
        cov = np.eye(d)
        freq = sample_plain_fourier(lam, cov, m, freq_seed)
        y = sketch_dataset(X, freq)
        h = decode_gmm(y, freq, k, (eps, grid.decoder_radius or R + 1.0), opts).model
        truth = GaussianMixture(M, np.full(k, 1.0 / k), cov)
        _, dist = match_components(truth, h)
        risk = gmm_negative_log_likelihood(X, h)
        base = gmm_negative_log_likelihood(X, baseline_em(X, k, cov, grid.baseline_restarts, _seed(grid.seed, d, k, trial, 3)))
        success = bool(np.all(dist <= grid.mean_tol))
    else:
        X = make_low_rank(data_rng, grid.n, k, d, grid.noise)
        freq = quadratic_scheme(d, m, freq_seed)
        y = sketch_dataset(X, freq)
        _, sub = decode_pca(y, freq, k).model
        risk = pca_risk(X, sub)
        base = pca_risk(X, baseline_exact_pca(X, k))
        success = (risk - base) <= grid.pca_tol * np.trace(second_moment(X))
    runtime = time.perf_counter() - t0 if timing else None
    return {"d": d, "k": k, "m": m, "trial": trial, "success": int(bool(success)),
            "risk": float(risk), "baseline_risk": float(base), "runtime": runtime}


def _format_row(row):
    out = []
    for key in CSV_HEADER:
        v = row[key]
        out.append("" if v is None else (repr(float(v)) if isinstance(v, float) else str(v)))
    return out


def _done_keys(path):
    if not os.path.exists(path) or os.path.getsize(path) == 0:
        return set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise InvalidParameter(f"{path} exists with an unexpected header")
        return {tuple(int(x) for x in r[:4]) for r in reader if len(r) == len(CSV_HEADER)}


def _trial_star(args):
    return run_trial(*args)


def run_experiment(grid: ExperimentGrid, out_path, jobs: int = 1, timing: bool = False):
    """Run all missing trials, appending one CSV row per finished trial.

    Rows are written in grid order by a single writer, each followed by fsync, so an
    interrupted run resumes where it stopped.
    """
    done = _done_keys(out_path)
    todo = [c for c in grid.cells() if c not in done]
    new_file = not os.path.exists(out_path) or os.path.getsize(out_path) == 0
    rows = []
    with open(out_path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new_file:
            writer.writerow(CSV_HEADER)
            fh.flush()
        args = [(grid, d, k, m, t, timing) for d, k, m, t in todo]
        if jobs > 1 and len(args) > 1:
            # spawn: forking after the OpenMP runtime has started is unsafe
            ctx = multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
                results = pool.map(_trial_star, args)
                for row in results:
                    writer.writerow(_format_row(row))
                    fh.flush()
                    os.fsync(fh.fileno())
                    rows.append(row)
        else:
            for a in args:
                row = run_trial(*a)
                writer.writerow(_format_row(row))
                fh.flush()
                os.fsync(fh.fileno())
                rows.append(row)
    return rows


def read_results(path):
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


def success_rates(rows):
    """{(d, k, m): fraction of successful trials}."""
    acc = {}
    for r in rows:
        key = (int(r["d"]), int(r["k"]), int(r["m"]))
        acc.setdefault(key, []).append(int(r["success"]))
    return {key: sum(v) / len(v) for key, v in sorted(acc.items())}

"""Seedable Monte Carlo harness for the block-coordinate estimators.

Three built-in designs mirror the standard evaluation setups:

* ``scenario1`` — five equally sized communities with fixed coefficients,
  estimator accuracy tracked per coordinate (bias, Monte Carlo SD, average
  plug-in SE, Wald coverage) plus covariance/precision losses;
* ``scenario2`` — many small communities (coordinates outnumber the sample
  size), the hard-thresholded estimator compared against dense baselines;
* ``scenario3`` — the scenario-1 matrix perturbed by a scaled Wishart draw,
  so the true covariance no longer has the block structure and losses are
  measured against the dense truth and its inverse.

Reproducibility: every random quantity derives from the scenario seed
through counter-based generators keyed by (stream, replicate), so results
are bitwise identical for any worker count and any evaluation order.
"""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import blocks
from .blocks import Partition, UniformBlock, expand, inverse, is_positive_definite, make_uniform_block
from .estimation import (
    estimate_from_data,
    exact_variance_theta,
    normal_quantile,
    sample_covariance,
    theta_names,
    theta_vector,
)
from .singletons import select_lambda_dense, soft_threshold_dense, hard_threshold_dense
from .thresholding import ThresholdConfig, hard_threshold_theta, resolve_lambda

__all__ = [
    "ScenarioSpec",
    "SimReport",
    "sample_mvn",
    "wishart_perturbation",
    "frobenius_ub",
    "spectral_ub",
    "scenario1_coords",
    "scenario2_coords",
    "run_scenario",
]

# Fixed coefficients of the five-community design: diagonal coefficients and
# the symmetric block coefficient matrix.
SCENARIO1_A = (0.016, 0.214, 0.749, 0.068, 0.100)
SCENARIO1_B = (
    (6.731, -1.690, 0.696, -2.936, 1.913),
    (-1.690, 5.215, 3.815, -1.010, 0.703),
    (0.696, 3.815, 4.328, -3.357, -0.269),
    (-2.936, -1.010, -3.357, 6.788, 0.000),
    (1.913, 0.703, -0.269, 0.000, 3.954),
)

_STREAM_DATA = 1
_STREAM_TRUTH2 = 2
_STREAM_WISHART = 3
_STREAM_SELECT = 5
_STREAM_BASELINE = 6


def _rng(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _derived_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def frobenius_ub(x: UniformBlock, y: UniformBlock) -> float:
    """Frobenius loss between two coordinate sets (closed form, no expansion)."""
    return blocks.frobenius_distance(x, y)


def spectral_ub(x: UniformBlock, y: UniformBlock) -> float:
    """Spectral loss between two coordinate sets via the K-level spectrum."""
    return blocks.spectral_distance(x, y)


def _dense_spectral(diff: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(blocks.symmetrize(diff))).max())


def sample_mvn(n: int, sigma, seed: int) -> np.ndarray:
    """Draw ``n`` zero-mean Gaussian rows with the given covariance.

    ``sigma`` may be dense or in block coordinates.  The draw is
    ``Z @ L^T`` with L the Cholesky factor, Z from a counter-based generator
    keyed by the seed; identical seeds give identical samples regardless of
    the execution schedule.  A non-positive-definite ``sigma`` raises.
    """
    dense = expand(sigma) if isinstance(sigma, UniformBlock) else np.asarray(sigma, dtype=float)
    try:
        chol = np.linalg.cholesky(dense)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    return _mvn_from_factor(n, chol, _rng(seed, _STREAM_DATA, 0))


def _mvn_from_factor(n: int, chol: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, chol.shape[0]))
    return z @ chol.T


def wishart_perturbation(p: int, sigma_scale: float, seed: int) -> np.ndarray:
    """Scaled Gram matrix ``sigma * G^T G`` with G a p x p standard normal draw.

    Has a Wishart distribution with p degrees of freedom and scale matrix
    ``sigma * I``; expectation ``sigma * p * I``.  ``sigma = 0`` gives zeros.
    """
    if sigma_scale < 0:
        raise ValueError("scale must be nonnegative")
    if sigma_scale == 0.0:
        return np.zeros((p, p))
    g = _rng(seed, _STREAM_WISHART, 0).standard_normal((p, p))
    return blocks.symmetrize(sigma_scale * (g.T @ g))


def scenario1_coords(p_ind: int = 30) -> UniformBlock:
    """Five equal communities of size ``p_ind`` with the fixed coefficients."""
    part = Partition((p_ind,) * 5)
    return make_uniform_block(np.array(SCENARIO1_A), np.array(SCENARIO1_B), part)


def scenario2_coords(k: int, p_ind: int = 10, seed: int = 0) -> UniformBlock:
    """Randomly generated many-community truth, rescaled until positive definite.

    Diagonal coefficients are Uniform(0.5, 1.5); the block coefficient matrix
    has positive Uniform(0.3, 1)/K diagonal entries and sparse off-diagonal
    support (each entry nonzero with probability 0.2, magnitude
    Uniform(0.3, 1)/K with random sign).  B is shrunk by 0.9 until the
    matrix passes the positive definiteness check.
    """
    rng = _rng(seed, _STREAM_TRUTH2, k)
    part = Partition((p_ind,) * k)
    a = rng.uniform(0.5, 1.5, size=k)
    b = np.zeros((k, k))
    iu = np.triu_indices(k, 1)
    support = rng.random(iu[0].shape[0]) < 0.2
    mags = rng.uniform(0.3, 1.0, size=iu[0].shape[0]) / k
    signs = rng.choice([-1.0, 1.0], size=iu[0].shape[0])
    b[iu] = support * mags * signs
    b = b + b.T
    np.fill_diagonal(b, rng.uniform(0.3, 1.0, size=k) / k)
    coords = make_uniform_block(a, b, part)
    for _ in range(200):
        if is_positive_definite(coords).is_pd:
            return coords
        b = b * 0.9
        coords = make_uniform_block(a, b, part)
    raise RuntimeError("could not rescale the generated truth to positive definite")


@dataclass(frozen=True)
class ScenarioSpec:
    """Configuration of one Monte Carlo run.

    ``kind`` is one of scenario1 / scenario2 / scenario3 / custom.  For
    ``custom`` supply ``truth`` in block coordinates; a positive
    ``sigma_perturb`` adds a Wishart draw to any truth (making it dense, as
    in scenario3).  ``baselines`` choose the dense competitors evaluated
    alongside: any of "sample", "soft", "hard".
    """

    kind: str
    n: int
    replicates: int
    seed: int = 0
    p_ind: int | None = None
    k_communities: int = 30
    sigma_perturb: float = 0.0
    level: float = 0.95
    centered: bool = True
    baselines: tuple[str, ...] = ("sample", "soft", "hard")
    baseline_splits: int = 20
    baseline_grid: int = 20
    threshold: ThresholdConfig | None = None
    truth: UniformBlock | None = None

    def __post_init__(self):
        if self.kind not in ("scenario1", "scenario2", "scenario3", "custom"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.n < 2 or self.replicates < 1:
            raise ValueError("need n >= 2 and at least one replicate")
        if self.sigma_perturb < 0:
            raise ValueError("sigma_perturb must be nonnegative")
        if self.kind == "scenario3" and self.sigma_perturb <= 0:
            raise ValueError("scenario3 requires a positive sigma_perturb")
        if not 0 < self.level < 1:
            raise ValueError("level must be strictly between 0 and 1")
        if self.kind == "custom" and self.truth is None:
            raise ValueError("custom scenarios require an explicit truth")
        for name in self.baselines:
            if name not in ("sample", "soft", "hard"):
                raise ValueError(f"unknown baseline {name!r}")

    def resolved_p_ind(self) -> int:
        if self.p_ind is not None:
            return self.p_ind
        return 10 if self.kind == "scenario2" else 30

    @staticmethod
    def from_dict(doc: dict) -> "ScenarioSpec":
        """Build a spec from a parsed scenario file."""
        doc = dict(doc)
        thr = doc.pop("threshold", None)
        if thr is not None:
            thr = ThresholdConfig(
                lam=thr.get("lambda"),
                c_constant=thr.get("c_constant"),
                auto=bool(thr.get("auto", False)),
                splits=int(thr.get("splits", 50)),
                grid_size=int(thr.get("grid_size", 20)),
                seed=int(thr.get("seed", 0)),
                exempt_diagonal=bool(thr.get("exempt_diagonal", False)),
            )
        truth = doc.pop("truth", None)
        if truth is not None:
            part = Partition(tuple(int(v) for v in truth["partition"]))
            truth = make_uniform_block(truth["a"], truth["b"], part)
        known = {f.name for f in dataclasses.fields(ScenarioSpec)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown scenario fields: {sorted(extra)}")
        if "baselines" in doc:
            doc["baselines"] = tuple(doc["baselines"])
        return ScenarioSpec(threshold=thr, truth=truth, **doc)


@dataclass
class SimReport:
    """Aggregated Monte Carlo results.

    ``parameters`` holds one record per coordinate (truth, relative and
    absolute bias, Monte Carlo SD, average plug-in SE, empirical coverage,
    all in the customary x100 scaling); ``losses`` the mean matrix-norm
    losses per method.  Timings are kept in memory only so that emitted
    reports are bitwise reproducible.
    """

    kind: str
    n: int
    replicates: int
    seed: int
    level: float
    partition: tuple[int, ...]
    sigma_perturb: float
    parameters: list[dict]
    losses: dict[str, dict[str, float | int | None]]
    lambda_summary: dict | None
    meta: dict
    timings: dict = field(default_factory=dict, repr=False)

    def to_dict(self, include_timings: bool = False) -> dict:
        doc = {
            "kind": self.kind,
            "n": self.n,
            "replicates": self.replicates,
            "seed": self.seed,
            "level": self.level,
            "partition": list(self.partition),
            "sigma_perturb": self.sigma_perturb,
            "parameters": self.parameters,
            "losses": self.losses,
            "lambda_summary": self.lambda_summary,
            "meta": self.meta,
        }
        if include_timings:
            doc["timings"] = self.timings
        return doc


def _resolve_truth(spec: ScenarioSpec):
    """Truth coordinates, dense truth, and dense inverse for the run."""
    if spec.kind in ("scenario1", "scenario3"):
        ub = scenario1_coords(spec.resolved_p_ind())
    elif spec.kind == "scenario2":
        ub = scenario2_coords(spec.k_communities, spec.resolved_p_ind(), spec.seed)
    else:
        ub = spec.truth
    sigma = spec.sigma_perturb
    dense = expand(ub)
    if sigma > 0:
        dense = dense + wishart_perturbation(dense.shape[0], sigma, spec.seed)
        ub_truth = None
    else:
        ub_truth = ub
        check = is_positive_definite(ub)
        if not check.is_pd:
            raise ValueError(
                f"truth is not positive definite (min eigenvalue {check.min_eigenvalue:.6g})"
            )
    eigs = np.linalg.eigvalsh(dense)
    if eigs.min() <= 0:
        raise ValueError(f"truth is not positive definite (min eigenvalue {eigs.min():.6g})")
    return ub.partition, ub_truth, dense, sigma


def _replicate_worker(spec, partition, ub_truth, dense_truth, dense_inv, chol, z_level):
    """Build the per-replicate closure; all captured state is read-only."""
    k = partition.count
    theta0 = theta_vector(ub_truth.a, ub_truth.b) if ub_truth is not None else None
    iu = np.triu_indices(k)
    prec_truth = inverse(ub_truth) if ub_truth is not None else None

    def one(rep: int) -> dict:
        rng = _rng(spec.seed, _STREAM_DATA, rep)
        x = _mvn_from_factor(spec.n, chol, rng)
        theta = estimate_from_data(x, partition, centered=spec.centered)
        out: dict = {"rep": rep}

        var_a, var_b = exact_variance_theta(
            theta.coords.a, theta.coords.b, partition, theta.n_eff
        )
        se = np.sqrt(np.maximum(theta_vector(var_a, var_b), 0.0))
        est = theta.theta()
        out["theta"] = est
        out["se"] = se
        if theta0 is not None:
            out["cover"] = np.abs(est - theta0) <= z_level * se

        losses: dict[str, tuple] = {}
        if spec.kind == "scenario2":
            cfg = spec.threshold if spec.threshold is not None else ThresholdConfig(auto=True, splits=20)
            cfg = dataclasses.replace(cfg, seed=_derived_seed(spec.seed, _STREAM_SELECT, rep))
            lam, _ = resolve_lambda(x, partition, cfg, centered=spec.centered)
            est_coords = hard_threshold_theta(theta, lam, cfg.exempt_diagonal)
            out["lambda"] = lam
            out["kept_b"] = int(np.count_nonzero(est_coords.b[iu]))
        else:
            est_coords = theta.coords

        if ub_truth is not None:
            losses["uniform_block"] = (
                frobenius_ub(est_coords, ub_truth),
                spectral_ub(est_coords, ub_truth),
            )
            try:
                prec_est = inverse(est_coords)
                pd_ok = is_positive_definite(est_coords).is_pd
                if not pd_ok:
                    raise blocks.NotPositiveDefiniteError("not pd", -1.0)
                losses["uniform_block_precision"] = (
                    frobenius_ub(prec_est, prec_truth),
                    spectral_ub(prec_est, prec_truth),
                )
            except (blocks.SingularityError, blocks.NotPositiveDefiniteError):
                losses["uniform_block_precision"] = (np.nan, np.nan)
        else:
            est_dense = expand(est_coords)
            diff = est_dense - dense_truth
            losses["uniform_block"] = (
                float(np.linalg.norm(diff)),
                _dense_spectral(diff),
            )
            try:
                pd_ok = is_positive_definite(est_coords).is_pd
                if not pd_ok:
                    raise blocks.NotPositiveDefiniteError("not pd", -1.0)
                pdiff = expand(inverse(est_coords)) - dense_inv
                losses["uniform_block_precision"] = (
                    float(np.linalg.norm(pdiff)),
                    _dense_spectral(pdiff),
                )
            except (blocks.SingularityError, blocks.NotPositiveDefiniteError):
                losses["uniform_block_precision"] = (np.nan, np.nan)

        if spec.baselines:
            s = sample_covariance(x, centered=spec.centered)
            for name in spec.baselines:
                est_b = _baseline_estimate(name, x, s, spec, rep)
                diff = est_b - dense_truth
                losses[name] = (float(np.linalg.norm(diff)), _dense_spectral(diff))
        out["losses"] = losses
        return out

    return one


def _baseline_estimate(name: str, x, s, spec: ScenarioSpec, rep: int) -> np.ndarray:
    if name == "sample":
        return s
    cfg = ThresholdConfig(
        auto=True,
        splits=spec.baseline_splits,
        grid_size=spec.baseline_grid,
        seed=_derived_seed(spec.seed, _STREAM_BASELINE, rep),
    )
    lam, _, _ = select_lambda_dense(x, cfg, mode=name, centered=spec.centered)
    if name == "soft":
        return soft_threshold_dense(s, lam, preserve_diagonal=True)
    return hard_threshold_dense(s, lam, preserve_diagonal=True)


def run_scenario(spec: ScenarioSpec, threads: int = 1) -> SimReport:
    """Run all replicates and aggregate the summary statistics.

    The aggregation is a deterministic fold over replicate index order, so
    reports are identical for any ``threads`` value.
    """
    t0 = time.perf_counter()
    partition, ub_truth, dense_truth, sigma = _resolve_truth(spec)
    chol = np.linalg.cholesky(dense_truth)
    dense_inv = None
    if ub_truth is None:
        dense_inv = np.linalg.inv(dense_truth)
        dense_inv = blocks.symmetrize(dense_inv)
    names = theta_names(partition.count)
    z_level = normal_quantile((1.0 + spec.level) / 2.0)

    one = _replicate_worker(spec, partition, ub_truth, dense_truth, dense_inv, chol, z_level)
    reps = range(spec.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, reps))
    else:
        results = [one(r) for r in reps]
    results.sort(key=lambda r: r["rep"])  # fold order fixed by replicate index

    q = partition.n_params
    thetas = np.vstack([r["theta"] for r in results])
    ses = np.vstack([r["se"] for r in results])
    parameters: list[dict] = []
    if ub_truth is not None:
        theta0 = theta_vector(ub_truth.a, ub_truth.b)
        covers = np.vstack([r["cover"] for r in results])
        mean_est = thetas.mean(axis=0)
        mcsd = thetas.std(axis=0, ddof=1) if spec.replicates > 1 else np.zeros(q)
        ase = ses.mean(axis=0)
        cp = covers.mean(axis=0) * 100.0
        for j, name in enumerate(names):
            abs_bias = abs(mean_est[j] - theta0[j])
            rec = {
                "name": name,
                "truth": float(theta0[j]),
                "estimate_mean": float(mean_est[j]),
                "arb_pct": (float(abs_bias / abs(theta0[j]) * 100.0) if theta0[j] != 0.0 else None),
                "abs_bias_x100": float(abs_bias * 100.0),
                "mcsd_x100": float(mcsd[j] * 100.0),
                "ase_x100": float(ase[j] * 100.0),
                "cp_pct": float(cp[j]),
            }
            parameters.append(rec)

    losses: dict[str, dict] = {}
    method_names = list(results[0]["losses"].keys())
    for name in method_names:
        fr = np.array([r["losses"][name][0] for r in results])
        sp = np.array([r["losses"][name][1] for r in results])
        ok = np.isfinite(fr)
        entry = {
            "frobenius_mean": float(fr[ok].mean()) if ok.any() else None,
            "spectral_mean": float(sp[ok].mean()) if ok.any() else None,
            "frobenius_median": float(np.median(fr[ok])) if ok.any() else None,
            "failures": int((~ok).sum()),
        }
        losses[name] = entry

    lambda_summary = None
    if spec.kind == "scenario2":
        lams = np.array([r["lambda"] for r in results])
        kept = np.array([r["kept_b"] for r in results])
        lambda_summary = {
            "lambda_mean": float(lams.mean()),
            "lambda_median": float(np.median(lams)),
            "kept_b_upper_mean": float(kept.mean()),
        }

    report = SimReport(
        kind=spec.kind,
        n=spec.n,
        replicates=spec.replicates,
        seed=spec.seed,
        level=spec.level,
        partition=tuple(partition.sizes),
        sigma_perturb=float(sigma if spec.kind == "scenario3" else spec.sigma_perturb),
        parameters=parameters,
        losses=losses,
        lambda_summary=lambda_summary,
        meta={
            "p": partition.total,
            "K": partition.count,
            "q": q,
            "centered": spec.centered,
            "truth_is_uniform_block": ub_truth is not None,
        },
        timings={"total_s": time.perf_counter() - t0},
    )
    return report

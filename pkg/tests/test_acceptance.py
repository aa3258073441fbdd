"""Acceptance criteria, one test per criterion with a printed verdict line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
PASS/FAIL lines and timings.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np

from ubcov import (
    ScenarioSpec,
    add,
    block_stats,
    estimate_theta,
    eigenvalues,
    exact_variance_theta,
    expand,
    frobenius_ub,
    inverse,
    is_positive_definite,
    make_uniform_block,
    multiply,
    plugin_covariance,
    plugin_precision,
    run_scenario,
    sample_mvn,
    scenario1_coords,
    scenario2_coords,
    spectral_ub,
)
from ubcov.cli import main as cli_main
from ubcov.thresholding import ThresholdConfig, select_lambda

from conftest import random_coords, random_pd_coords


def _verdict(num: int, ok: bool, detail: str, elapsed: float) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num} {status}: {detail} [{elapsed:.2f}s]")


def test_criterion_1_exact_se_reproduction():
    """Deterministic standard errors reproduce the reference values."""
    t0 = time.perf_counter()
    truth = scenario1_coords(30)
    var_a, var_b = exact_variance_theta(truth.a, truth.b, truth.partition, n=100)
    se_a33 = 100 * math.sqrt(var_a[2])
    se_b11 = 100 * math.sqrt(var_b[0, 0])
    se_b12 = 100 * math.sqrt(var_b[0, 1])
    elapsed = time.perf_counter() - t0
    ok = (
        abs(se_a33 - 2.0) <= 0.05
        and abs(se_b11 - 95.7) <= 0.5
        and abs(se_b12 - 61.8) <= 0.7
        and elapsed < 1.0
    )
    _verdict(1, ok, f"SEx100 a33={se_a33:.3f} b11={se_b11:.2f} b12={se_b12:.2f}", elapsed)
    assert abs(se_a33 - 2.0) <= 0.05
    assert abs(se_b11 - 95.7) <= 0.5
    assert abs(se_b12 - 61.8) <= 0.7
    assert elapsed < 1.0


def test_criterion_2_scenario1_monte_carlo():
    """1000 replicates at n=100, p=150: coverage, SD/SE agreement, bias."""
    t0 = time.perf_counter()
    spec = ScenarioSpec(kind="scenario1", n=100, replicates=1000, seed=0, baselines=())
    report = run_scenario(spec)
    cps = np.array([r["cp_pct"] for r in report.parameters])
    rel = np.array(
        [abs(r["mcsd_x100"] - r["ase_x100"]) / r["ase_x100"] for r in report.parameters]
    )
    arbs = np.array([r["arb_pct"] for r in report.parameters if r["arb_pct"] is not None])
    ase_b11 = next(r["ase_x100"] for r in report.parameters if r["name"] == "b[1,1]")
    elapsed = time.perf_counter() - t0
    ok = (
        cps.min() >= 92.0
        and cps.max() <= 98.0
        and rel.max() < 0.10
        and arbs.max() < 5.0
        and abs(ase_b11 - 95.7) <= 2.0
        and elapsed < 600.0
    )
    _verdict(
        2, ok,
        f"CP in [{cps.min():.1f},{cps.max():.1f}], max|MCSD-ASE|/ASE={rel.max():.3f}, "
        f"max ARB={arbs.max():.2f}%, ASEx100(b11)={ase_b11:.1f}",
        elapsed,
    )
    assert cps.min() >= 92.0 and cps.max() <= 98.0
    assert rel.max() < 0.10
    assert arbs.max() < 5.0
    assert abs(ase_b11 - 95.7) <= 2.0
    assert elapsed < 600.0


def test_criterion_3_algebra_oracle_suite():
    """1000 random instances: coordinate algebra matches dense oracles."""
    t0 = time.perf_counter()
    gen = np.random.default_rng(33)
    worst_op = worst_eig = 0.0
    pd_agree = True
    for trial in range(1000):
        x = random_coords(gen, k_max=5, size_max=6)
        y = random_coords(gen, x.partition)
        dx, dy = expand(x), expand(y)

        ds = dx + dy
        worst_op = max(worst_op, np.linalg.norm(expand(add(x, y)) - ds) / max(np.linalg.norm(ds), 1e-12))
        dp = dx @ dy
        worst_op = max(worst_op, np.linalg.norm(expand(multiply(x, y)) - dp) / max(np.linalg.norm(dp), 1e-12))

        ev = np.sort(eigenvalues(x))
        dev = np.sort(np.linalg.eigvalsh(dx))
        worst_eig = max(worst_eig, np.abs(ev - dev).max())

        pd_inst = random_pd_coords(gen, x.partition, margin=0.02)
        dinv = np.linalg.inv(expand(pd_inst))
        worst_op = max(
            worst_op,
            np.linalg.norm(expand(inverse(pd_inst)) - dinv) / np.linalg.norm(dinv),
        )

        # boundary-straddling positive definiteness agreement
        dense_min = np.linalg.eigvalsh(dx).min()
        eps = 1e-6 * max(abs(dense_min), 1.0) * (1 if trial % 2 else -1)
        shifted = make_uniform_block(x.a - dense_min + eps, x.b, x.partition)
        dense_pd = np.linalg.eigvalsh(expand(shifted)).min() > 0
        pd_agree = pd_agree and (is_positive_definite(shifted).is_pd == dense_pd)

    elapsed = time.perf_counter() - t0
    ok = worst_op < 1e-10 and worst_eig < 1e-9 and pd_agree and elapsed < 30.0
    _verdict(
        3, ok,
        f"worst op rel err {worst_op:.2e}, worst eig err {worst_eig:.2e}, pd agree {pd_agree}",
        elapsed,
    )
    assert worst_op < 1e-10
    assert worst_eig < 1e-9
    assert pd_agree
    assert elapsed < 30.0


def test_criterion_4_precision_round_trip():
    """plugin_precision times plugin_covariance is the identity, 500 instances."""
    t0 = time.perf_counter()
    gen = np.random.default_rng(44)
    worst = 0.0
    for _ in range(500):
        coords = random_pd_coords(gen, margin=0.02)
        theta = estimate_theta(block_stats(expand(coords), coords.partition, n=50))
        prod = multiply(plugin_precision(theta), plugin_covariance(theta))
        dev = max(np.abs(prod.a - 1.0).max(), np.abs(prod.b).max())
        worst = max(worst, dev)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10
    _verdict(4, ok, f"worst identity deviation {worst:.2e} over 500 instances", elapsed)
    assert worst < 1e-10


def test_criterion_5_norm_closed_forms():
    """Coordinate norms match dense norms on 1000 random pairs."""
    t0 = time.perf_counter()
    gen = np.random.default_rng(55)
    worst_f = worst_s = 0.0
    for _ in range(1000):
        x = random_coords(gen)
        y = random_coords(gen, x.partition)
        diff = expand(x) - expand(y)
        fro = np.linalg.norm(diff)
        spec_norm = np.abs(np.linalg.eigvalsh(diff)).max()
        worst_f = max(worst_f, abs(frobenius_ub(x, y) - fro) / max(fro, 1e-12))
        worst_s = max(worst_s, abs(spectral_ub(x, y) - spec_norm) / max(spec_norm, 1e-12))
    elapsed = time.perf_counter() - t0
    ok = worst_f < 1e-10 and worst_s < 1e-9
    _verdict(5, ok, f"worst rel err frobenius {worst_f:.2e}, spectral {worst_s:.2e}", elapsed)
    assert worst_f < 1e-10
    assert worst_s < 1e-9


def test_criterion_6_consistency_trend():
    """Median loss of the rate-thresholded estimator decreases in n."""
    t0 = time.perf_counter()
    k, p_ind, seed = 50, 10, 0
    truth = scenario2_coords(k, p_ind, seed=seed)
    x0 = sample_mvn(30, truth, seed=seed)
    sel = select_lambda(
        x0, truth.partition, ThresholdConfig(auto=True, splits=20, grid_size=20, seed=seed)
    )
    c_const = sel.lam / math.sqrt(math.log(k) / 30)
    medians = []
    for n in (30, 60, 120, 240):
        spec = ScenarioSpec(
            kind="scenario2", n=n, replicates=100, seed=seed,
            k_communities=k, p_ind=p_ind, baselines=(),
            threshold=ThresholdConfig(c_constant=c_const),
        )
        report = run_scenario(spec)
        medians.append(report.losses["uniform_block"]["frobenius_median"])
    elapsed = time.perf_counter() - t0
    decreasing = all(b < a for a, b in zip(medians, medians[1:]))
    _verdict(
        6, decreasing,
        "median losses " + " > ".join(f"{m:.3f}" for m in medians) + f" (C={c_const:.3f})",
        elapsed,
    )
    assert decreasing


def test_criterion_7_misspecification_robustness():
    """Block estimator beats dense soft thresholding under perturbation."""
    t0 = time.perf_counter()
    results = {}
    for sigma in (0.1, 0.5):
        spec = ScenarioSpec(
            kind="scenario3", n=50, replicates=200, seed=0,
            sigma_perturb=sigma, baselines=("soft",),
            baseline_splits=20, baseline_grid=20,
        )
        report = run_scenario(spec)
        results[sigma] = (
            report.losses["uniform_block"]["frobenius_mean"],
            report.losses["soft"]["frobenius_mean"],
        )
    elapsed = time.perf_counter() - t0
    ok = all(ub < soft for ub, soft in results.values())
    detail = ", ".join(
        f"sigma={s}: {ub:.1f} < {soft:.1f}" for s, (ub, soft) in results.items()
    )
    _verdict(7, ok, detail, elapsed)
    for sigma, (ub, soft) in results.items():
        assert ub < soft, f"sigma={sigma}: {ub} !< {soft}"


def test_criterion_8_simulate_determinism(tmp_path):
    """Identical seed and config give bitwise-identical reports, any threads."""
    t0 = time.perf_counter()
    scenario = {
        "kind": "scenario1", "n": 24, "replicates": 10, "seed": 5, "p_ind": 5,
        "baselines": ["sample", "soft"], "baseline_splits": 5, "baseline_grid": 6,
    }
    scen_path = tmp_path / "scenario.json"
    scen_path.write_text(json.dumps(scenario))
    outputs = []
    for tag, threads in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / f"report_{tag}.json"
        code = cli_main([
            "simulate", "--scenario", str(scen_path), "--out", str(out),
            "--threads", str(threads), "--no-figures",
        ])
        assert code == 0
        outputs.append(out.read_bytes())
    elapsed = time.perf_counter() - t0
    ok = outputs[0] == outputs[1] == outputs[2]
    _verdict(8, ok, "repeat and threads 1 vs 8 bitwise identical", elapsed)
    assert outputs[0] == outputs[1]
    assert outputs[0] == outputs[2]

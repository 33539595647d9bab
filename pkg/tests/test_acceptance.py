"""Acceptance criteria, one test (or parameter row) per check.

Run ``pytest tests/test_acceptance.py`` and read the "acceptance criteria"
section at the end of the output: one PASS/FAIL line per criterion, with the
individual checks listed underneath when a criterion has several.
"""

import math
import time

import numpy as np
import pytest

from conftest import record
from kimflow.bounds import (eta_inf, lambda_inf, lambda_T, lhat, theta_integral,
                            theta_integral_quadrature)
from kimflow.flow import FlowConfig, integrate
from kimflow.harness.cli import main
from kimflow.harness.cli import preset_text
from kimflow.harness.config import loads_config
from kimflow.harness.experiments import run
from kimflow.measures import Gaussian
from kimflow.ou import EvolvedScore, ThetaProfile

TIGHT = 1 - math.exp(-10)


def preset(name, **overrides):
    return loads_config(preset_text(name), source=f"preset:{name}").with_overrides(**overrides)


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


@pytest.mark.parametrize("name", ["gaussian_shift_l2", "gaussian_shift_l2_d3"])
def test_c1_tight_l2(name):
    rep, secs = timed(run, preset(name))
    ok = (0.9995 * TIGHT <= rep.empirical <= 1.0005 * TIGHT
          and rep.bound == pytest.approx(1.0, abs=1e-12)
          and 0.999 <= rep.slack <= 1.0 and rep.passed and secs < 30)
    record(1, ok, f"{name}: L2={rep.empirical:.8f} bound={rep.bound:.6g} slack={rep.slack:.6f} ({secs:.1f}s)")
    assert ok


def test_c2_gaussian_scale():
    rep, secs = timed(run, preset("gaussian_scale_l2"))
    ok = (abs(rep.empirical - 1.0) <= 0.01
          and abs(rep.bound - 1.5) <= 0.015
          and rep.bound == pytest.approx(math.sqrt(rep.fi), rel=1e-15)
          and abs(rep.slack - 2 / 3) <= 0.01 and rep.passed and secs < 30)
    record(2, ok, f"L2={rep.empirical:.5f} bound={rep.bound:.5f} slack={rep.slack:.4f} "
                  f"(n={rep.n}, {secs:.1f}s)")
    assert ok


def test_c3_fisher_decay_saturation():
    rep, secs = timed(run, preset("gaussian_shift_decay"))
    t, est, se, env = (np.array([r[i] for r in rep.rows]) for i in range(4))
    exact = np.exp(-2 * t)
    tol = np.maximum(3 * se, 1e-12 * exact)
    ok = (len(t) == 10 and np.all(np.abs(est - exact) <= tol)
          and np.all(np.abs(est - env) <= tol) and secs < 60)
    record(3, ok, f"max |FI - e^(-2t)| = {np.abs(est - exact).max():.2e}, "
                  f"max |FI - envelope| = {np.abs(est - env).max():.2e} ({secs:.1f}s)")
    assert ok


def test_c4_theta_random_mixtures():
    cfg = preset("theta_random_mixtures")
    rep, secs = timed(run, cfg)
    tc = cfg.theta_check
    ok = (rep.summary["targets"] == 5 and tc["probes"] == 200 and len(tc["times"]) == 8
          and tc["max_dim"] <= 3 and tc["max_components"] <= 4
          and rep.summary["max_violation"] <= 1e-8 and secs < 60)
    record(4, ok, f"max violation {rep.summary['max_violation']:.3e} over 5 mixtures ({secs:.1f}s)")
    assert ok


def test_c5_mixture_stability_across_seeds():
    reps = [run(preset("mixture_l2", seed=s)) for s in (0, 1, 2)]
    slacks = np.array([r.slack for r in reps])
    ok = all(r.passed for r in reps) and np.all(slacks < 1) and slacks.max() / slacks.min() - 1 <= 0.10
    record(5, ok, "slack by seed: " + ", ".join(f"{s:.5f}" for s in slacks))
    assert ok


GRID = [(a, L) for a in (0.5, 1.0, 2.0) for L in (0.0, 0.3, 1.0)]


def profile(a, L):
    return ThetaProfile.slc(a) if L == 0 else ThetaProfile.perturbed(a, L)


@pytest.mark.parametrize("a,L", GRID)
def test_c6_lambda_T_vs_lambda_inf(a, L):
    p = profile(a, L)
    (lt, secs) = timed(lambda_T, p, 20.0)
    li = lambda_inf(p)
    rel = abs(lt - li) / li
    ok = rel <= 1e-5 and secs < 10
    record(6, ok, f"lambda_T(20) vs lambda_inf, alpha={a}, L={L}: {lt:.8g} vs {li:.8g} (rel {rel:.2e})")
    assert ok


def test_c6_phi_closed_vs_quadrature():
    worst = 0.0
    for a, L in GRID:
        p = profile(a, L)
        for v in (1e-3, 0.05, 0.5, 2.0, 8.0, 20.0):
            c, q = theta_integral(p, v), theta_integral_quadrature(p, v)
            worst = max(worst, abs(c - q) / max(abs(q), 1e-300))
    ok = worst <= 1e-6
    record(6, ok, f"closed-form Phi vs quadrature, worst rel {worst:.2e}")
    assert ok


def test_c6_eta_inf_equals_lambda_inf():
    worst = max(abs(eta_inf(profile(a, L)) - lambda_inf(profile(a, L))) / lambda_inf(profile(a, L))
                for a, L in GRID)
    ok = worst <= 1e-14
    record(6, ok, f"eta_inf vs lambda_inf, worst rel {worst:.1e}")
    assert ok


def test_c7_lhat_regimes():
    t0 = time.perf_counter()
    small = lhat(1.0, 0.1, 0.1)       # R_V^2 L_V = 1e-3
    large = lhat(1.0, 10.0, 10.0)     # R_V^2 L_V = 1e3
    secs = time.perf_counter() - t0
    r_small = abs(small / (0.1 / 2) - 1)
    r_large = abs(large / (10.0**2 * 10.0**2 / 4) - 1)
    ok = r_small <= 0.05 and r_large <= 0.15 and secs < 1
    record(7, ok, f"small regime off by {r_small:.2%}, large regime off by {r_large:.2%} ({secs*1e3:.1f} ms)")
    assert ok


def test_c8_linf_tight():
    rep, secs = timed(run, preset("gaussian_shift_linf"))
    target = rep.constant * math.sqrt(rep.fi_inf)
    ok = abs(rep.linf - target) <= 1e-3 and rep.constant == 1.0 and rep.passed and secs < 30
    record(8, ok, f"Linf={rep.linf:.6f} vs eta_inf*sqrt(FI_inf)={target:.6f} ({secs:.1f}s)")
    assert ok


def test_c9_rk4_order():
    score = EvolvedScore(Gaussian([1.0], np.eye(1)))
    steps = np.array([100, 200, 400])
    errs = [abs(integrate(score, [0.0], FlowConfig(T=10, steps=int(n))).terminal[0] - TIGHT) for n in steps]
    slope = np.polyfit(np.log(10.0 / steps), np.log(errs), 1)[0]
    ok = 3.6 <= slope <= 4.4
    record(9, ok, f"rk4 log-error slope {slope:.3f}")
    assert ok


@pytest.mark.parametrize("kind,name", [("stability_l2", "mixture_l2"), ("fi_decay", "gaussian_shift_decay"),
                                       ("theta_check", "theta_random_mixtures")])
def test_c9_byte_determinism(kind, name, tmp_path):
    codes = [main([kind, "--preset", name, "--out", str(tmp_path / d)]) for d in ("a", "b")]
    same = all((tmp_path / "a" / f"{kind}.{ext}").read_bytes() == (tmp_path / "b" / f"{kind}.{ext}").read_bytes()
               for ext in ("json", "csv"))
    ok = codes == [0, 0] and same
    record(9, ok, f"{name}: two runs byte-identical = {same}")
    assert ok

"""Acceptance gate: one pass/fail line per criterion, tolerances pinned."""

import json
import math
import time

import numpy as np
import pytest

from hcm import analytic
from hcm.cli import main
from hcm.engine import HcmConfig, resolve, run_batch
from hcm.experiments import (
    ACCEPTANCE_WINDOW,
    REFERENCE_TARGETS,
    figs1_curves,
    reproduce,
)
from hcm.gaussian import GaussianState, coherent, fidelity_gaussian
from hcm.heralding import filter_from_rule, herald

IDEAL = dict(eta_dh=1.0, eta_input=1.0, eta_verify=1.0)


def test_criterion_1_analytic_identities(report):
    t0 = time.perf_counter()
    worst = 0.0
    for n in (2, 3, 4, 5):
        for t in np.linspace(1 / n, 1, 12)[1:-1]:
            g = analytic.derive_gains(n, float(t))
            lam = analytic.feedforward_scale(float(t))
            errs = [
                (g.g_nla / g.g_dla) ** 2 - t,
                g.g_nla * g.g_dla - math.sqrt(n),
                g.tap_transmission - 1 / g.g_dla**2,
                g.g_nla_prime**2 - t * (g.g_dla**2 - 1) / (1 - t),
                math.sqrt(t) + lam * g.g_nla_prime**2 * math.sqrt(1 - t) - math.sqrt(n),
            ]
            for a in (0.5, 1.115 + 1.095j, -2.0 + 0.3j):
                m1 = analytic.clone_moments_ideal(g, a)
                m2 = analytic.equivalent_concatenation_moments(g, a)
                errs += [m1.mean.x - m2.mean.x, m1.mean.p - m2.mean.p,
                         m1.variance_x - m2.variance_x, m1.variance_p - m2.variance_p]
            worst = max(worst, max(abs(e) for e in errs))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 1.0
    assert report(1, ok, f"40 grid points, max deviation {worst:.2e} (tol 1e-12), {dt:.3f} s (< 1 s)")


def test_criterion_2_two_clone_reproduction(report):
    t0 = time.perf_counter()
    cfg = HcmConfig(2, 0.6, 1.115 + 1.095j, seed=2024, **IDEAL)
    p = resolve(cfg).success_probability()
    cfg = HcmConfig(2, 0.6, 1.115 + 1.095j, seed=2024, shots=math.ceil(1.02e6 / p), **IDEAL)
    res = run_batch(cfg)
    dt = time.perf_counter() - t0
    f = res.fidelities
    enough = min(res.accepted) >= 1_000_000
    close = all(abs(x.value - 0.7078) <= 0.003 for x in f)
    sig = min((x.value - 2 / 3) / x.std_dev for x in f)

    lossy = run_batch(HcmConfig(2, 0.6, 1.115 + 1.095j, eta_dh=0.9, shots=4_000_000, seed=2024))
    in_band = all(0.69 <= x.value <= 0.71 for x in lossy.fidelities)
    ok = enough and close and sig > 5 and in_band and dt < 60
    vals = ", ".join(f"{x.value:.4f}+-{x.std_dev:.4f}" for x in f)
    lv = ", ".join(f"{x.value:.4f}" for x in lossy.fidelities)
    assert report(2, ok, f"ideal F = [{vals}] (0.7078 +- 0.003), {sig:.1f} sd above 2/3 (> 5), "
                         f"{min(res.accepted)} accepted, {dt:.1f} s (< 60 s); "
                         f"eta_dh=0.9 F = [{lv}] in [0.69, 0.71]")


@pytest.fixture(scope="module")
def fig3a(tmp_path_factory):
    t0 = time.perf_counter()
    _, summary = reproduce("fig3a", tmp_path_factory.mktemp("fig3a"))
    return summary, time.perf_counter() - t0


def test_criterion_3_multi_clone_limits(report, fig3a):
    summary, dt = fig3a
    band = REFERENCE_TARGETS["band"]
    ok, parts = dt < 300, []
    for n in (3, 4, 5):
        s = summary["n_clones"][str(n)]
        ref = REFERENCE_TARGETS["fig3a"][n]
        lo, hi = ACCEPTANCE_WINDOW
        good = (s["mean_fidelity"] > n / (2 * n - 1) and lo <= s["acceptance_rate"] <= hi
                and abs(s["mean_fidelity"] - ref) <= band)
        ok = ok and good
        parts.append(f"N={n} F={s['mean_fidelity']:.4f} > {n / (2 * n - 1):.4f}, "
                     f"ref {ref}+-{band}, acc {s['acceptance_rate']:.3f}")
    assert report(3, ok, "; ".join(parts) + f"; {dt:.0f} s (< 300 s)")


def test_criterion_4_three_clones_beyond_two_clone_limit(report, fig3a):
    s = fig3a[0]["three_clone"]
    fs = s["fidelities"]
    ok = all(f > 2 / 3 for f in fs)
    vals = ", ".join(f"{f:.4f}+-{e:.4f}" for f, e in zip(fs, s["fidelity_std"]))
    assert report(4, ok, f"N=3 clones F = [{vals}], each > 2/3; acc {s['acceptance_rate']:.2e}")


def _grid():
    cases = []
    # g' is kept where 1e6 samples still give hundreds of accepted shots
    for g in (1.05, 1.1, 1.15, 1.2):
        for a0 in (0.0 + 0.3j, 0.5, 0.3 + 0.3j, -0.8 + 0.6j, 1.2 - 0.4j):
            cases.append((g, a0, "rect" if a0 in (0.5, 1.2 - 0.4j) else "radial"))
    return cases


def test_criterion_5_oracle_equivalence(report):
    rng = np.random.default_rng(20240515)
    n, worst, min_contain, fails = 1_000_000, 0.0, 1.0, []
    for g, a0, geometry in _grid():
        beta = 3.0
        filt = filter_from_rule(g, a0, beta, geometry=geometry)
        while analytic.containment_fraction(a0, filt) < 0.98:
            beta += 0.25
            filt = filter_from_rule(g, a0, beta, geometry=geometry)
        am = a0 + math.sqrt(0.5) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        acc = am[herald(filt, am, rng.random(n))]
        k = acc.size
        p = analytic.success_probability(a0, filt)
        m, c = analytic.postfilter_moments(a0, filt)
        z = [(k / n - p) / math.sqrt(p * (1 - p) / n)]
        for comp, mu, var in ((acc.real, m.real, c[0, 0]), (acc.imag, m.imag, c[1, 1])):
            z.append((comp.mean() - mu) / math.sqrt(comp.var(ddof=1) / k))
            d = comp - comp.mean()
            v = d.var(ddof=1)
            z.append((v - var) / math.sqrt((np.mean(d**4) - v * v) / k))
        if geometry == "radial":
            inside = np.mean(np.abs(acc) <= filt.cutoff)
        else:
            inside = np.mean((np.abs(acc.real) <= filt.cutoff_re) & (np.abs(acc.imag) <= filt.cutoff_im))
        min_contain = min(min_contain, inside)
        worst = max(worst, max(abs(x) for x in z))
        if max(abs(x) for x in z) > 3 or inside < 0.98:
            fails.append(f"g'={g} a0={a0}")
    ok = not fails
    assert report(5, ok, f"20 configs x 1e6 samples: max |z| = {worst:.2f} (<= 3), "
                         f"min containment {min_contain:.4f} (>= 0.98)"
                         + (f"; failing: {fails}" if fails else ""))


def test_criterion_6_fidelity_formula_checks(report):
    s = GaussianState(np.array([0.7, -1.2]), np.array([[1.3, 0.2], [0.2, 0.9]]))
    same = fidelity_gaussian(s, s)
    mp = fidelity_gaussian(coherent(0.8, 0.3), GaussianState(coherent(0.8, 0.3).mean, 3.0 * np.eye(2)))
    fmax = analytic.fidelity_max(2)
    curves, g = figs1_curves()
    i1 = int(np.flatnonzero(np.isclose(g, 1.0))[0])
    peaks = all(f[i1] == f.max() for f in curves.values())
    near = (g >= 0.9 - 1e-12) & (g <= 1.1 + 1e-12)
    flat = float(np.ptp(curves[0.0][near]))
    ok = same == 1.0 and mp == 0.5 and abs(fmax - 0.828427) <= 1e-6 and peaks and flat <= 1e-3
    assert report(6, ok, f"F(identical) = {same!r}, M&P = {mp!r}, F_max(2) = {fmax:.7f}, "
                         f"S1 peaks at g=1: {peaks}, alpha=0 spread {flat:.1e} (<= 1e-3)")


def _simulate(tmp_path, name, threads, shots, capsys):
    cfg = {"n_clones": 2, "t_s": 0.6, "alpha_in": {"re": 1.115, "im": 1.095}, "eta_dh": 0.9,
           "shots": shots, "seed": 42}
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    t0 = time.perf_counter()
    code = main(["simulate", "--config", str(p), "--out", str(tmp_path / name),
                 "--threads", str(threads)])
    dt = time.perf_counter() - t0
    capsys.readouterr()
    assert code == 0
    return (tmp_path / name / "stats.json").read_bytes(), dt


def test_criterion_7_reproducibility_and_performance(report, tmp_path, capsys):
    # shots counts each quadrature run, so 5e7 per run is 1e8 raw shots end to end
    big1, dt = _simulate(tmp_path, "big1", 1, 50_000_000, capsys)
    big8, _ = _simulate(tmp_path, "big8", 8, 50_000_000, capsys)
    a, _ = _simulate(tmp_path, "a", 1, 1_000_000, capsys)
    b, _ = _simulate(tmp_path, "b", 1, 1_000_000, capsys)
    ok = big1 == big8 and a == b and dt < 120
    assert report(7, ok, f"stats.json identical across runs: {a == b}, threads 1 vs 8: "
                         f"{big1 == big8}; 5e7 shots per quadrature in {dt:.1f} s (< 120 s, 1 CPU)")

"""Acceptance gate: one test per criterion, each at its stated tolerance.

Scenario-backed criteria run the packaged experiment runner once (results are
cached across criteria); the remaining criteria exercise the module API
directly.  Every test prints a single pass line; run with ``pytest -v -s
tests/test_acceptance.py`` to see them.
"""

import json
import math
import time

import numpy as np
import pytest

from bcns.experiments.config import load_config
from bcns.experiments.runner import run

_CACHE: dict[str, tuple[int, dict, object]] = {}


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    def _run(name):
        if name not in _CACHE:
            out = tmp_path_factory.mktemp(name.replace("-", "_"))
            status = run(load_config(name), out)
            blob = json.loads((out / "summary.json").read_text())
            _CACHE[name] = (status, blob, out)
        return _CACHE[name]

    return _run


def _assertions(blob):
    return {a["name"]: a for a in blob["assertions"]}


def _report(num, text):
    print(f"\n[criterion {num:02d}] {text}: PASS")


def test_criterion_01_harmonic_analysis_suite():
    """64^2 grid: partition, orthogonality, reconstruction, products, projections."""
    from bcns.datagen import admissible_noise
    from bcns.littlewood_paley import block, build_partition
    from bcns.operators import bony_R, bony_T, curlfree_Q, divergence, leray_P
    from bcns.spectral_core import GridSpec, lp_norm

    start = time.perf_counter()
    grid = GridSpec(2, 64, 2 * np.pi)
    part = build_partition(grid, 0)
    rng = np.random.default_rng(2024)

    mask = part.resolved_mode_mask()
    assert np.abs(part.coverage[mask] - 1.0).max() <= 1e-10

    f = admissible_noise(grid, rng, part)
    base = lp_norm(f, 2)
    total = np.zeros(grid.shape)
    for j in part.shell_indices:
        bj = block(f, j, part)
        total += bj.data
        for jp in part.shell_indices:
            if abs(j - jp) >= 2:
                assert lp_norm(block(bj, jp, part), 2) <= 1e-12 * base
    assert np.abs(total - f.data).max() <= 1e-10 * np.abs(f.data).max()

    g = admissible_noise(grid, rng, part)
    prod = f.data * g.data
    rec = bony_T(f, g, part).data + bony_T(g, f, part).data + bony_R(f, g, part).data
    assert math.sqrt(((rec - prod) ** 2).sum()) <= 1e-10 * math.sqrt((prod**2).sum())

    u = admissible_noise(grid, rng, part, ncomp=2)
    P, Q = leray_P(u), curlfree_Q(u)
    scale = np.abs(u.data).max()
    assert np.abs(P.data + Q.data - u.data).max() <= 1e-12 * scale
    assert np.abs(leray_P(P).data - P.data).max() <= 1e-12 * scale
    assert np.abs(curlfree_Q(P).data).max() <= 1e-12 * scale
    assert lp_norm(divergence(P), 2) <= 1e-12 * lp_norm(u, 2)

    elapsed = time.perf_counter() - start
    assert elapsed <= 60.0
    _report(1, f"harmonic-analysis suite ({elapsed:.1f}s)")


def test_criterion_02_multiplier_and_product_constants(scenario):
    """Empirical constants stable across shells (<= 3x) and grids (<= 20%)."""
    status, blob, _ = scenario("operator-verify")
    checks = _assertions(blob)
    assert status == 0, blob["failed_checks"]
    for name in (
        "gradient_spread_across_j",
        "paraproduct_spread_across_j",
        "remainder_spread_across_j",
        "product_spread_across_j",
        "composition_spread_across_j",
    ):
        assert checks[name]["value"] <= 3.0
    for name in (
        "gradient_spread_across_grids",
        "paraproduct_spread_across_grids",
        "remainder_spread_across_grids",
        "product_spread_across_grids",
        "composition_spread_across_grids",
    ):
        assert checks[name]["value"] <= 0.2
    assert blob["metrics"]["runtime_seconds"] <= 300.0
    _report(2, "multiplier/paraproduct/product/composition constants")


def test_criterion_03_linear_solver_exactness():
    """Per-mode flow vs RK4 reference, regime boundary, semigroup property."""
    from bcns.datagen import admissible_noise
    from bcns.etd import PairPropagator, pair_eigenvalues, pair_matrix
    from bcns.littlewood_paley import build_partition
    from bcns.operators import lame_semigroup
    from bcns.spectral_core import GridSpec

    # dt-halved RK4 reference on representative wavenumbers (unit couplings)
    for k in (0.25, 1.0, 1.9999, 2.0, 2.0001, 3.0, 8.0):
        M = pair_matrix(k, 1.0, 1.0)
        y0 = np.array([0.8, -0.45])
        t_end = 2.0

        def rk4(n):
            y = y0.copy()
            h = t_end / n
            for _ in range(n):
                k1 = M @ y
                k2 = M @ (y + 0.5 * h * k1)
                k3 = M @ (y + 0.5 * h * k2)
                k4 = M @ (y + h * k3)
                y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            return y

        ref, ref2 = rk4(8192), rk4(16384)
        assert np.abs(ref - ref2).max() <= 1e-10
        prop = PairPropagator(np.array([k]), 1.0, 1.0)
        F = prop.matfunc("exp", t_end)
        got = np.array([F[0][0] * y0[0] + F[1][0] * y0[1], F[2][0] * y0[0] + F[3][0] * y0[1]])
        assert np.abs(got - ref2).max() <= 1e-8

    for k in (0.5, 1.0, 1.999999):
        assert abs(pair_eigenvalues(k, 1.0, 1.0)[0].imag) > 0
    for k in (2.000001, 2.5, 7.0):
        lp_, lm = pair_eigenvalues(k, 1.0, 1.0)
        assert lp_.imag == 0.0 and lm.imag == 0.0

    grid = GridSpec(2, 64, 2 * np.pi)
    part = build_partition(grid, 0)
    rng = np.random.default_rng(5)
    u = admissible_noise(grid, rng, part, ncomp=2)
    two_step = lame_semigroup(lame_semigroup(u, 0.4, 1.0, -0.5), 0.8, 1.0, -0.5)
    one_step = lame_semigroup(u, 1.2, 1.0, -0.5)
    assert np.abs(two_step.data - one_step.data).max() <= 1e-12 * np.abs(u.data).max()
    _report(3, "linear solver exactness")


def test_criterion_04_estimate_checks(scenario):
    """20 randomized problems: ratios finite, max stable across resolutions."""
    status, blob, _ = scenario("linear-estimates")
    assert status == 0, blob["failed_checks"]
    checks = _assertions(blob)
    for kind in ("transport", "viscous", "coupled"):
        assert checks[f"{kind}_ratios_finite"]["passed"]
        assert checks[f"{kind}_max_ratio_spread"]["value"] <= 0.2
    _report(4, "a priori estimate ratio stability")


def test_criterion_05_decay_reproduction(scenario):
    """Low-frequency norm decays like <t>^{-3/2} (d=3, p=2), linear and
    small-amplitude nonlinear."""
    status, blob, _ = scenario("linear-decay")
    assert status == 0, blob["failed_checks"]
    lin = blob["metrics"]["linear_fit"]
    assert abs(lin["exponent"] - (-1.5)) <= 0.15, lin
    assert lin["r2"] >= 0.99
    non = blob["metrics"]["nonlinear_fit"]
    assert abs(non["exponent"] - (-1.5)) <= 0.25, non
    assert blob["metrics"]["runtime_seconds"] <= 900.0
    _report(
        5,
        f"decay reproduction (linear {lin['exponent']:.3f}, nonlinear {non['exponent']:.3f})",
    )


def test_criterion_06_local_existence_by_iteration(scenario):
    """256^2 small data: contraction <= 0.9 from n=2, terminal <= 1e-6,
    limit matches the direct solver to 1e-4."""
    status, blob, _ = scenario("local-existence")
    assert status == 0, blob["failed_checks"]
    checks = _assertions(blob)
    assert checks["picard_contraction"]["value"] <= 0.9
    assert checks["picard_terminal"]["value"] <= 1e-6
    assert checks["picard_vs_direct"]["value"] <= 1e-4
    assert blob["metrics"]["runtime_seconds"] <= 600.0
    _report(6, "local existence by successive approximation")


def test_criterion_07_weighted_consistency(scenario):
    """Weighted pairs track the coordinate products to 1e-4 over T=1, d=2,3."""
    status, blob, _ = scenario("weighted-bounds")
    assert status == 0, blob["failed_checks"]
    checks = _assertions(blob)
    assert checks["consistency_d2"]["value"] <= 1e-4
    assert checks["consistency_d3"]["value"] <= 1e-4
    assert blob["metrics"]["runtime_seconds"] <= 600.0
    _report(
        7,
        "weighted consistency (d2 {:.2e}, d3 {:.2e})".format(
            checks["consistency_d2"]["value"], checks["consistency_d3"]["value"]
        ),
    )


def test_criterion_08_global_bound_shadow(scenario):
    """64^3 small data: bound functional stabilizes and scales linearly."""
    status, blob, _ = scenario("global-bounds")
    assert status == 0, blob["failed_checks"]
    checks = _assertions(blob)
    for name, a in checks.items():
        if name.startswith("stabilization_"):
            assert a["value"] <= 0.01, name
    assert checks["amplitude_agreement"]["value"] <= 0.3
    assert checks["sup_density_bound"]["value"] <= 0.5
    assert blob["metrics"]["runtime_seconds"] <= 1200.0
    _report(8, "global-bound shadow")


def test_criterion_09_effective_velocity_residuals(scenario):
    """Heat-equation residuals of both effective velocities <= 1e-3."""
    status, blob, _ = scenario("weighted-bounds")
    checks = _assertions(blob)
    assert checks["effective_velocity_residual"]["value"] <= 1e-3
    assert checks["weighted_effective_velocity_residual"]["value"] <= 1e-3
    _report(9, "effective-velocity residuals")


def test_criterion_10_determinism(tmp_path):
    """Identical config and seed give byte-identical results.csv."""
    out1, out2 = tmp_path / "one", tmp_path / "two"
    assert run(load_config("lp-verify"), out1) == 0
    assert run(load_config("lp-verify"), out2) == 0
    b1 = (out1 / "results.csv").read_bytes()
    b2 = (out2 / "results.csv").read_bytes()
    assert b1 == b2
    _report(10, "determinism of results.csv")

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from singular_mlap.analysis import (InsufficientPoints, LevelCountError, NonpositiveValues,
                                    classify_growth, delta_integrability_check,
                                    fit_boundary_exponent, gradient_energy, sandwich_check,
                                    sobolev_tau_probe)
from singular_mlap.mesh import DomainSpec, build_graded_mesh
from singular_mlap.regime import DecayLaw
from singular_mlap.scalar import ScalarProblem, SingularWeight, solve_scalar


def _profile(mesh, power, log_power=None):
    d = mesh.delta.copy()
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = d[pos] ** power
    if log_power is not None:
        out[pos] *= np.log(1 / d[pos]) ** log_power
    return out


def test_exact_power_law():
    mesh = build_graded_mesh("interval", 1024, 2.0)
    fit = fit_boundary_exponent(mesh, _profile(mesh, 0.75))
    assert fit.power == pytest.approx(0.75, abs=1e-10)
    assert fit.log_power is None
    assert fit.points_used >= 8 and fit.window[1] <= 0.1


def test_log_corrected_profile():
    mesh = build_graded_mesh("interval", 2048, 3.0)
    u = _profile(mesh, 1.0, 2 / 3)
    for ref in (None, 1.0):
        fit = fit_boundary_exponent(mesh, u, (1e-6, 1e-2), reference_power=ref)
        assert abs(fit.power - 1) <= 0.08
        assert fit.log_power is not None and abs(fit.log_power - 2 / 3) <= 0.15


def test_reference_power_log_test_on_pure_power():
    mesh = build_graded_mesh("interval", 1024, 2.6)
    fit = fit_boundary_exponent(mesh, 2.5 * _profile(mesh, 0.6), reference_power=0.6)
    assert fit.log_power is None and abs(fit.log_power_estimate) < 1e-8


def test_ball_layer():
    mesh = build_graded_mesh(DomainSpec("radial_ball", 3), 512, 2.0)
    fit = fit_boundary_exponent(mesh, 1.7 * _profile(mesh, 0.9))
    assert fit.power == pytest.approx(0.9, abs=1e-10)


def test_fit_errors():
    mesh = build_graded_mesh("interval", 64)
    with pytest.raises(InsufficientPoints):
        fit_boundary_exponent(mesh, _profile(mesh, 1.0))
    fine = build_graded_mesh("interval", 1024, 2.0)
    u = _profile(fine, 1.0)
    u[5] = -1.0
    with pytest.raises(NonpositiveValues):
        fit_boundary_exponent(fine, u)
    with pytest.raises(ValueError):
        fit_boundary_exponent(fine, _profile(fine, 1.0), (1e-4, 0.2))


@given(st.floats(0.1, 1.0), st.floats(0.01, 100.0))
def test_fit_recovers_exact_powers(alpha, scale):
    mesh = build_graded_mesh("interval", 512, 2.0)
    fit = fit_boundary_exponent(mesh, scale * _profile(mesh, alpha))
    assert abs(fit.power - alpha) <= 1e-6


def test_window_robustness_noisy_synthetic():
    """Under i.i.d. noise, halving delta_max moves the slope by less than twice
    the standard error of the halved fit in the large majority of draws."""
    mesh = build_graded_mesh("interval", 2048, 2.0)
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        u = _profile(mesh, 0.8) * np.exp(0.01 * rng.standard_normal(mesh.n + 1))
        full = fit_boundary_exponent(mesh, u)
        half = fit_boundary_exponent(mesh, u, (full.window[0], full.window[1] / 2))
        hits += abs(full.power - half.power) < 2 * half.power_stderr
    assert hits >= 45


def test_window_robustness_solver_output_absolute():
    mesh = build_graded_mesh("interval", 1024, 2.6)
    u, _ = solve_scalar(ScalarProblem(mesh, SingularWeight(q_exp=0.25), 1.5, 3.0))
    full = fit_boundary_exponent(mesh, u)
    half = fit_boundary_exponent(mesh, u, (full.window[0], full.window[1] / 2))
    assert abs(full.power - half.power) < 0.01
    assert abs(full.power - 11 / 14) < 0.05


# ---------------------------------------------------------------------------
# Growth classification and tau probe
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("values,expected", [
    ([1.0, 1.01, 1.011], True),
    ([1.0, 1.5, 2.25, 3.375], False),
    ([1.0, 1.7, 2.4, 3.1], False),          # linear growth in level, like a log
    ([1.0, 1.5, 1.9, 2.22], True),          # increments contract by 0.8
    ([1.0, 1.0, 1.0], True),
    ([1.0, math.inf, math.inf], False),
])
def test_classify_growth(values, expected):
    assert classify_growth(values) is expected


def test_classify_growth_needs_three_levels():
    with pytest.raises(LevelCountError):
        classify_growth([1.0, 2.0])


def _levels(grading, count=4, base=256):
    return [build_graded_mesh("interval", base * 2 ** k, grading, k + 1) for k in range(count)]


@pytest.mark.parametrize("grading", [1.0, 2.0])
def test_integrability_calibration(grading):
    meshes = _levels(grading)
    for a in (0.25, 0.5, 0.75, 0.9, 1.1, 1.5):
        assert delta_integrability_check(a, meshes) is (a < 1)
    assert delta_integrability_check(1.0, meshes) is False


def test_integrability_requires_positive_exponent():
    with pytest.raises(ValueError):
        delta_integrability_check(0.0, _levels(1.0, 3, 64))


def test_tau_probe_power_profile():
    """u ~ delta^0.7: |u'|^tau is integrable iff 0.3 tau < 1, i.e. tau < 3.33."""
    meshes = _levels(2 / 0.7)
    sols = [_profile(mh, 0.7) for mh in meshes]
    grid = np.arange(3.0, 6.01, 0.25)
    probe = sobolev_tau_probe(meshes, sols, grid)
    lo, hi = probe.bracket
    assert 3.0 <= lo < 10 / 3 <= hi <= 3.7
    assert probe.tau_grid[0] == 3.0
    for j, conv in enumerate(probe.convergent):
        if not conv:
            col = [row[j] for row in probe.energy_by_level]
            assert all(b >= a for a, b in zip(col, col[1:]))


def test_tau_probe_smooth_profile():
    meshes = _levels(2.0, 3, 128)
    sols = [np.sin(np.pi * mh.nodes) for mh in meshes]
    probe = sobolev_tau_probe(meshes, sols, np.arange(2.0, 12.01, 1.0))
    assert math.isinf(probe.tau_star_estimate) and all(probe.convergent)


def test_tau_probe_level_errors():
    meshes = _levels(1.0, 3, 64)
    sols = [_profile(mh, 1.0) for mh in meshes]
    with pytest.raises(LevelCountError):
        sobolev_tau_probe(meshes[:2], sols[:2], [2.0, 3.0])
    with pytest.raises(LevelCountError):
        sobolev_tau_probe([meshes[0], meshes[2], meshes[2]], sols, [2.0])
    with pytest.raises(ValueError):
        sobolev_tau_probe(meshes, sols, [3.0, 2.0])


def test_gradient_energy_linear():
    mesh = build_graded_mesh("interval", 64, 2.0)
    assert gradient_energy(mesh, mesh.delta, 3.0) == pytest.approx(1.0, rel=1e-12)


# ---------------------------------------------------------------------------
# Sandwich
# ---------------------------------------------------------------------------

def test_sandwich_exact_multiple():
    mesh = build_graded_mesh("interval", 128, 2.0)
    c_low, c_high, ok = sandwich_check(mesh, 3 * mesh.delta, DecayLaw(1.0))
    assert c_low == pytest.approx(3.0) and c_high == pytest.approx(3.0) and ok


def test_sandwich_mismatched_power_diverges():
    ratios = []
    for n in (256, 1024, 4096):
        mesh = build_graded_mesh("interval", n, 3.0)
        res = sandwich_check(mesh, _profile(mesh, 0.75), DecayLaw(1.0))
        ratios.append(res.c_high / res.c_low)
    assert ratios[0] < ratios[1] < ratios[2]
    assert not res.passed

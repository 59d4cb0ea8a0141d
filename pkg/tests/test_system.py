import math

import numpy as np
import pytest

from singular_mlap.analysis import sobolev_tau_probe
from singular_mlap.mesh import DomainSpec, build_graded_mesh, default_grading
from singular_mlap.regime import ExponentTuple, StructuralViolation, classify
from singular_mlap.scalar import ScalarProblem, SingularWeight, solve_scalar
from singular_mlap.system import (SystemSettings, SystemState, apply_T, contraction_ratios,
                                  fit_band, initial_band, scaling_factor, slack_epsilon,
                                  solve_system, u_problem, uniqueness_probe, write_history_csv)

CASE_III = ExponentTuple(2, 0.3, 0.2, 0.2, 0.3)
CASE_I = ExponentTuple(2, 0.2, 0.3, 1, 3)


def _mesh(e, n=512):
    pred = classify(e)
    return build_graded_mesh("interval", n, default_grading(min(pred.u_law.power, pred.v_law.power)))


@pytest.fixture(scope="module")
def case_three():
    mesh = _mesh(CASE_III)
    state, report = solve_system(CASE_III, mesh)
    return mesh, state, report


def test_case_three_converges(case_three):
    mesh, state, report = case_three
    assert report.converged and report.case_id == "III"
    assert max(report.residual_u, report.residual_v) <= 1e-6
    assert report.in_band
    assert all(r < 1 for r in report.contraction_ratios)


def test_fixed_point_is_stationary(case_three):
    mesh, state, _ = case_three
    again = apply_T(state, CASE_III, mesh)
    row = again.history[-1]
    assert max(row["du"], row["dv"]) <= 2e-7


def test_one_step_stays_in_band():
    mesh = _mesh(CASE_III)
    band = fit_band(CASE_III, mesh, initial_band(CASE_III, mesh))
    assert band.fitted
    state = apply_T(SystemState(band.u_upper.copy(), band.v_upper.copy()), CASE_III, mesh)
    assert band.contains(mesh, state.u, state.v)


def test_monotone_start():
    mesh = _mesh(CASE_III)
    band = fit_band(CASE_III, mesh, initial_band(CASE_III, mesh))
    start = SystemState(band.u_upper.copy(), band.v_lower.copy())
    nxt = apply_T(start, CASE_III, mesh)
    assert np.all(nxt.u <= start.u * (1 + 1e-8))


def test_decoupled_consistency_bitwise(case_three):
    mesh, state, _ = case_three
    settings = SystemSettings()
    perturbed = SystemState(state.u * 1.1, state.v * 0.9)
    step = apply_T(perturbed, CASE_III, mesh, settings)
    w = np.zeros(mesh.n + 1)
    w[mesh.free] = perturbed.v[mesh.free] ** (-CASE_III.q)
    prob = ScalarProblem(mesh, SingularWeight(q_exp=CASE_III.q, tabulated=w), CASE_III.p, CASE_III.m)
    direct, _ = solve_scalar(prob, settings.newton, initial=perturbed.u)
    assert np.array_equal(step.u, direct)
    np.testing.assert_array_equal(u_problem(CASE_III, mesh, perturbed.v, 1.0).weight.values(mesh),
                                  prob.weight.values(mesh))


def test_deltas_eventually_nonincreasing(case_three):
    _, state, _ = case_three
    d = [max(h["du"], h["dv"]) for h in state.history][-10:]
    assert all(b <= a for a, b in zip(d, d[1:]))


def test_zero_coupling_limit():
    e = ExponentTuple(2, 0.3, 1e-6, 0.2, 0.3)
    mesh = _mesh(e)
    state, _ = solve_system(e, mesh)
    alone, _ = solve_scalar(ScalarProblem(mesh, SingularWeight(), 0.3, 2.0))
    assert np.max(np.abs(state.u - alone)) <= 1e-3


def test_case_one_fitted_rate():
    from singular_mlap.analysis import fit_boundary_exponent
    mesh = _mesh(CASE_I, 1024)
    state, report = solve_system(CASE_I, mesh)
    fit = fit_boundary_exponent(mesh, state.v, reference_power=0.75)
    assert abs(fit.power - 0.75) <= 0.05 and fit.log_power is None


def test_radial_ball_solve():
    mesh = build_graded_mesh(DomainSpec("radial_ball", 3), 256, 2.0)
    state, report = solve_system(CASE_III, mesh)
    assert report.converged and report.in_band
    assert max(report.residual_u, report.residual_v) <= 1e-6
    assert state.u[-1] == 0 and np.all(state.u[:-1] > 0)


def test_not_covered_and_violations():
    mesh = build_graded_mesh("interval", 64)
    with pytest.raises(ValueError):
        solve_system(ExponentTuple(2, 1, 0.4, 0.1, 2.5), mesh)
    with pytest.raises(StructuralViolation):
        solve_system(ExponentTuple(2, 2, 1, 0.1, 3), mesh)


def test_iteration_cap_reported():
    mesh = _mesh(CASE_III, 128)
    state, report = solve_system(CASE_III, mesh, SystemSettings(max_outer=2), raise_on_failure=False)
    assert not report.converged and report.iterations == 2


def test_uniqueness_identical_starts(case_three):
    mesh, state, _ = case_three
    a = apply_T(state, CASE_III, mesh)
    b = apply_T(state, CASE_III, mesh)
    assert np.max(np.abs(a.u - b.u)) <= 1e-7 * a.u.max()


def test_uniqueness_probe_case_three():
    mesh = _mesh(CASE_III, 256)
    rep = uniqueness_probe(CASE_III, mesh)
    assert rep.converged and rep.distance <= 1e-4
    assert rep.decreasing
    # two Jacobi steps contract log M by q r / ((m-1+p)(m-1+s)); here m = 2
    assert scaling_factor(CASE_III) == pytest.approx(CASE_III.coupling_factor)
    assert max(rep.two_step_ratios[2:]) <= CASE_III.coupling_factor + 0.1


def test_slack_epsilon_capped():
    assert slack_epsilon(ExponentTuple(2, 0.5, 0.5, 0.2, 0.5)) == 0.25


def test_smooth_case_all_tau_converge():
    meshes, sols = [], []
    for k in range(3):
        mesh = build_graded_mesh("interval", 256 * 2 ** k, 2.0, k + 1)
        state, _ = solve_system(CASE_III, mesh)
        meshes.append(mesh)
        sols.append(state.u)
    probe = sobolev_tau_probe(meshes, sols, np.arange(2.0, 12.01, 0.5))
    assert math.isinf(probe.tau_star_estimate)


def test_history_csv(tmp_path, case_three):
    _, state, report = case_three
    write_history_csv(tmp_path / "h.csv", state.history)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "iter,du,dv,residual_u,residual_v"
    assert len(lines) == report.iterations + 1
    assert contraction_ratios(state.history) == report.contraction_ratios

import math

import numpy as np
import pytest

from varidual import (ApproximationSchedule, ConstraintSpec, GridDomain, SolveConfig, build_approximant,
                      catalog, default_pair, ekeland_schedule, extract_dual, grad_k,
                      minimize_approximant, write_schedule_csv)
from varidual.errors import InfeasibleStart, UsageError
from varidual.solver import default_cache_box
from oracles import active_set_obstacle

FREE = ConstraintSpec()


def unit(h=0.01, N=100, k=1):
    return GridDomain(1, k, h, N)


def obstacle_problem():
    d = GridDomain(1, 1, 0.02, 50)
    psi = d.field(lambda x: 0.5 - 4 * (x - 0.5) ** 2)
    g = d.zeros()
    return d, g, ConstraintSpec.obstacle(psi, g), psi


@pytest.fixture(scope="module")
def quadratic_schedule():
    d = unit()
    g = d.field(lambda x: x)
    spec = catalog("quadratic")
    sch = ApproximationSchedule(2, 20)
    pair = default_pair(spec, 20)
    return sch, ekeland_schedule(spec, pair, sch, d, g, FREE)


# dual spacing below delta_20 keeps F_20 strictly convex at grid scale; at the
# default spacing F_j' has plateaus and the minimiser is only unique to ~1e-6
FINE = (12.0, 2e-4, 1e-4)


@pytest.fixture(scope="module")
def obstacle_runs():
    d, g, c, psi = obstacle_problem()
    spec = catalog("quadratic")
    sch = ApproximationSchedule(2, 20)
    pair = default_pair(spec, 20, FINE)
    warm = ekeland_schedule(spec, pair, sch, d, g, c, SolveConfig(warm_start=True))
    cold = ekeland_schedule(spec, pair, sch, d, g, c, SolveConfig(warm_start=False))
    return warm, cold


# -- inner solver ------------------------------------------------------------------------

def test_quadratic_dirichlet_affine_solution():
    d = unit()
    g = d.field(lambda x: x)
    start = d.field(lambda x: x + 0.3 * np.sin(np.pi * x))
    rep = minimize_approximant(catalog("quadratic"), d, g, FREE, u0=start)
    assert rep.converged
    assert np.max(np.abs(rep.u_j.values - d.coords[0])) <= 1e-8
    assert abs(rep.f_j - 0.5) <= 1e-8


def test_obstacle_matches_active_set_oracle():
    d, g, c, psi = obstacle_problem()
    rep = minimize_approximant(catalog("quadratic"), d, g, c)
    ref = active_set_obstacle(50, 0.02, psi.values)
    assert rep.converged
    assert np.max(np.abs(rep.u_j.values - ref)) <= 1e-6


def test_log_barrier_affine_solution():
    d = unit()
    g = d.field(lambda x: 0.5 * x)
    start = d.field(lambda x: 0.5 * x + 0.05 * np.sin(np.pi * x))
    rep = minimize_approximant(catalog("log_barrier"), d, g, FREE, u0=start)
    assert rep.converged
    assert np.max(np.abs(rep.u_j.values - 0.5 * d.coords[0])) <= 1e-7
    assert rep.f_j == pytest.approx(-math.log(0.75), abs=1e-10)


def test_objective_nonincreasing_per_iteration():
    d, g, c, _ = obstacle_problem()
    a = build_approximant(default_pair(catalog("quadratic"), 8), 8, ApproximationSchedule(2, 8),
                          default_cache_box(d, g, c))
    rep = minimize_approximant(a, d, g, c)
    tr = np.array(rep.trace)
    assert np.all(np.diff(tr) <= 1e-13 * (1 + np.abs(tr[:-1])))


def test_infeasible_start():
    d = unit()
    g = d.field(lambda x: 2.0 * x)
    with pytest.raises(InfeasibleStart):
        minimize_approximant(catalog("log_barrier"), d, g, FREE)


def test_iteration_cap_flags_nonconvergence():
    d = unit()
    g = d.field(lambda x: x * x)
    rep = minimize_approximant(catalog("minimal_surface"), d, g, FREE, SolveConfig(max_inner_iters=1))
    assert not rep.converged and rep.iters == 1 and rep.residual > 0


def test_deterministic_reports():
    d, g, c, _ = obstacle_problem()
    r1 = minimize_approximant(catalog("quadratic"), d, g, c)
    r2 = minimize_approximant(catalog("quadratic"), d, g, c)
    assert np.array_equal(r1.u_j.values, r2.u_j.values) and r1.trace == r2.trace


@pytest.mark.parametrize("kwargs", [dict(grad_tol=0), dict(backtrack=1.0), dict(armijo_c=0),
                                    dict(init_step="newton"), dict(max_inner_iters=0)])
def test_solve_config_validation(kwargs):
    with pytest.raises(UsageError):
        SolveConfig(**kwargs)


# -- schedule --------------------------------------------------------------------------

def test_quadratic_schedule_monotone_with_gap_bound(quadratic_schedule):
    sch, reps = quadratic_schedule
    f = [r.f_j for r in reps]
    assert all(b >= a - 1e-7 for a, b in zip(f, f[1:]))
    for r in reps:
        assert r.converged and r.monotone_ok
        assert 0.5 - r.f_j <= sch.mu(r.j) + r.j * sch.delta(r.j) + 1e-6
        assert r.gap == pytest.approx(0.5 - r.f_j, abs=1e-8)
        assert r.eps_j >= 0 and r.ekeland_distance is not None


def test_quadratic_dual_is_identity_map(quadratic_schedule):
    _, reps = quadratic_schedule
    last = reps[-1]
    np.testing.assert_allclose(last.sigma_j.tensors, grad_k(last.u_j).tensors, atol=1e-5)


def test_dual_bounded_by_j(quadratic_schedule, obstacle_runs):
    for r in list(quadratic_schedule[1]) + list(obstacle_runs[0]):
        assert np.max(np.abs(r.sigma_j.tensors)) <= r.j * (1 + 1e-6)


def test_fenchel_residual_small(quadratic_schedule):
    for r in quadratic_schedule[1]:
        assert r.fenchel_max <= 1e-6


def test_minimal_surface_slope_two():
    d = unit(h=0.02, N=50)
    g = d.field(lambda x: 2 * x)
    spec = catalog("minimal_surface")
    sch = ApproximationSchedule(2, 20)
    reps = ekeland_schedule(spec, default_pair(spec, 20), sch, d, g, FREE)
    f = [r.f_j for r in reps]
    assert all(b >= a - 1e-7 for a, b in zip(f, f[1:]))
    last = reps[-1]
    assert np.max(np.abs(last.u_j.values - 2 * d.coords[0])) <= 1e-6
    s = last.sigma_j.tensors[:, 0]
    assert np.max(np.abs(s - 2 / math.sqrt(5))) <= 1e-3
    assert np.max(np.abs(s)) < 1.0
    assert reps[0].gap is None


def test_warm_start_agrees_and_is_cheaper(obstacle_runs):
    warm, cold = obstacle_runs
    assert np.max(np.abs(warm[-1].u_j.values - cold[-1].u_j.values)) <= 1e-7
    assert sum(r.iters for r in warm) < sum(r.iters for r in cold)


def test_extract_dual_matches_report(obstacle_runs):
    last = obstacle_runs[0][-1]
    d = last.u_j.dom
    g = d.zeros()
    _, _, c, _ = obstacle_problem()
    a = build_approximant(default_pair(catalog("quadratic"), 20, FINE), 20, ApproximationSchedule(2, 20),
                          default_cache_box(d, g, c))
    assert np.array_equal(extract_dual(a, last.u_j).tensors, last.sigma_j.tensors)


def test_schedule_csv(tmp_path, quadratic_schedule):
    _, reps = quadratic_schedule
    write_schedule_csv(reps, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "j,f_j,iters,residual,ekeland_distance"
    assert len(lines) == 20
    assert [int(l.split(",")[0]) for l in lines[1:]] == list(range(2, 21))

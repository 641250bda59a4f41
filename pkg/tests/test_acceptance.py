"""Acceptance suite: one group of checks per criterion, summarised at the end of the run."""
import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest

from varidual import (ApproximationSchedule, ConstraintSpec, Field, GradientField, GridDomain, JumpField,
                      SampledConvexFunction, biconjugate, biconjugate_error_bound, build_approximant,
                      bv_representation_check, catalog, certify, check_demi_coercivity, conjugate,
                      convergence_report, default_pair, divergence_residual, duality_gap,
                      ekeland_schedule, el_inequality_test, equiintegrability_profile, extract_dual,
                      grad_k, grid_axis, integrability_report, legendre, minimize_approximant,
                      recession, sample)
from varidual.approximation import DEFAULT_RESOLUTION
from varidual.cli import main
from varidual.solver import default_cache_box
from varidual.verification import smooth_bump
from oracles import active_set_obstacle

KINDS = ["quadratic", "p_power", "minimal_surface", "log_barrier", "abs_value"]
FREE = ConstraintSpec()
SCHED = ApproximationSchedule(2, 20)
EPS = [0.1, 0.05, 0.025, 0.0125, 0.00625]


def spec(kind, m=1):
    if kind == "custom_sampled":
        x = grid_axis(-30.0, 30.0, 1e-3)
        return catalog(kind, {"sample": SampledConvexFunction([x], 0.5 * x * x + np.abs(x))})
    return catalog(kind, {"p": 3.0} if kind == "p_power" else None, m=m)


def crit(num, title):
    return pytest.mark.criterion(num, title)


def transforms(f, dual_axes):
    w = np.ones(f.m)
    fast = legendre.fast_transform(f.axes, f.values, f.finite, dual_axes, w)
    brute = legendre.brute_force_transform(f.axes, f.values, f.finite, dual_axes, w)
    return fast, brute


# -- 1 ----------------------------------------------------------------------------------------

C1 = crit(1, "conjugation oracle")


@C1
@pytest.mark.parametrize("kind", KINDS + ["custom_sampled"])
def test_c1_fast_equals_brute_1d(kind, record_property):
    s = spec(kind)
    for n in (11, 101, 2001):
        f = sample(s, [(-1.0, 1.0)], 2.0 / (n - 1))
        assert f.values.size == n
        (fv, fa), (bv, ba) = transforms(f, [np.linspace(-3.0, 3.0, n)])
        assert np.array_equal(fv, bv) and np.array_equal(fa, ba)
    record_property("measured", "bit-identical values and argmax up to 2001 nodes")


@C1
@pytest.mark.parametrize("kind", KINDS)
def test_c1_fast_equals_brute_2d(kind, record_property):
    f = sample(spec(kind, 2), [(-2.0, 2.0)] * 2, 0.02)
    assert f.values.shape == (201, 201)
    (fv, fa), (bv, ba) = transforms(f, [grid_axis(-3.0, 3.0, 0.03)] * 2)
    assert np.array_equal(fv, bv) and np.array_equal(fa, ba)
    record_property("measured", "bit-identical on 201^2 primal and dual grids")


@C1
@pytest.mark.parametrize("kind", KINDS)
def test_c1_biconjugate_within_error_bound(kind, record_property):
    worst = 0.0
    for m, (half, hp, zr, hd) in ((1, (4.0, 1e-3, 6.0, 5e-4)), (2, (3.0, 0.05, 4.0, 0.05))):
        s = spec(kind, m)
        pair = conjugate(sample(s, [(-half, half)] * m, hp), [(-zr, zr)] * m, hd)
        q = 0.6 if kind == "log_barrier" else (2.0 if m == 1 else 1.0)
        b = biconjugate(pair, [(-q, q)] * m, hp)
        x = b.nodes()
        err = s.values(x) - b.values.ravel()
        bound = biconjugate_error_bound(pair, s, x)
        assert np.all(err >= -1e-12)
        assert np.all(err <= 2 * bound + 1e-12)
        nz = bound > 0
        if nz.any():
            worst = max(worst, float(np.max(err[nz] / bound[nz])))
    record_property("measured", f"max err / bound = {worst:.3f} (allowed 2)")


# -- 2 ----------------------------------------------------------------------------------------

C2 = crit(2, "linear-growth certificate")


@C2
def test_c2_indicator_of_ball(record_property):
    x = grid_axis(-1.5, 1.5, 0.01)
    ind = SampledConvexFunction([x], np.where(np.abs(x) <= 1 + 1e-12, 0.0, np.inf))
    cert = check_demi_coercivity(conjugate(ind, [(-3, 3)], 0.01).dual, [0.0], 1.0)
    assert cert.ok and cert.c == 0.0
    record_property("measured", f"c = {cert.c!r}")


@C2
def test_c2_quadratic(record_property):
    s = spec("quadratic")
    dual = conjugate(sample(s, [(-4, 4)], 0.01), [(-3, 3)], 0.01).dual
    cert = check_demi_coercivity(dual, [0.0], 1.0, spec=s)
    assert cert.ok and abs(cert.c + 0.5) <= 1e-9
    record_property("measured", f"c = {cert.c!r}")


@C2
@pytest.mark.parametrize("m", [1, 2])
def test_c2_rejects_beyond_boundary_slope(m, record_property):
    s = spec("minimal_surface", m)
    h = 0.01 if m == 1 else 0.05
    dual = conjugate(sample(s, [(-1, 1)] * m, h), [(-3, 3)] * m, h).dual
    assert check_demi_coercivity(dual, [0.0] * m, 1.0).ok
    bad = check_demi_coercivity(dual, [0.0] * m, 1.1)
    assert not bad.ok and bad.witness is not None
    record_property("measured", f"verified slope {bad.min_boundary_slope:.12g}, r = 1.1 rejected")


# -- 3 ----------------------------------------------------------------------------------------

C3 = crit(3, "approximation chain")
COMPACT = {"quadratic": 2.0, "p_power": 2.0, "minimal_surface": 2.0, "log_barrier": 0.9,
           "abs_value": 2.0, "custom_sampled": 2.0}


@pytest.fixture(scope="module")
def chains():
    return {}


def chain_for(chains, kind):
    if kind not in chains:
        s = spec(kind)
        pair = default_pair(s, 20)
        r = COMPACT[kind]
        box = [(-r - 0.1, r + 0.1)]
        chains[kind] = (s, pair, [build_approximant(pair, j, SCHED, box) for j in SCHED.indices()])
    return chains[kind]


@C3
@pytest.mark.parametrize("kind", KINDS + ["custom_sampled"])
def test_c3_monotone_chain_and_lipschitz(chains, kind, record_property):
    s, pair, apps = chain_for(chains, kind)
    r = COMPACT[kind]
    pts = np.linspace(-r, r, 4001)[:, None]
    vals = [a.value(pts) for a in apps]
    F = s.values(pts)
    for lo, hi in zip(vals, vals[1:]):
        assert np.all(lo <= hi + 1e-12)
    assert np.all(vals[-1] <= F + 1e-12)
    worst = 0.0
    for a in apps:
        x = a.values.axes[0]
        v = a.values.values
        slope = np.abs(np.diff(v)) / np.diff(x)
        slack = 64 * np.finfo(float).eps * np.max(np.abs(v)) / np.min(np.diff(x))
        assert np.all(slope <= a.j + slack)
        worst = max(worst, float(np.max(slope)) / a.j)
    margin = min(float(np.min(hi - lo)) for lo, hi in zip(vals, vals[1:]))
    record_property("measured", f"min F_(j+1) - F_j = {margin:.3g}, max slope / j = {worst:.15f}")


@C3
@pytest.mark.xfail(strict=True, reason="F - mu_j <= F_j <= F - mu_j + j delta_j by construction, "
                   "so at j = 20 the sup gap is close to mu_20 = 1/19 = 0.0526 > 1e-2")
def test_c3_quadratic_value_gap_below_1e2(chains):
    s, pair, apps = chain_for(chains, "quadratic")
    pts = np.linspace(-1, 1, 2001)[:, None]
    gaps = [float(np.max(np.abs(a.value(pts) - s.values(pts)))) for a in apps]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-2


@C3
def test_c3_quadratic_value_gap_tracks_bound(chains, record_property):
    s, pair, apps = chain_for(chains, "quadratic")
    pts = np.linspace(-1, 1, 2001)[:, None]
    gaps = [float(np.max(np.abs(a.value(pts) - s.values(pts)))) for a in apps]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    mu, jd = SCHED.mu(20), 20 * SCHED.delta(20)
    assert mu - jd <= gaps[-1] <= mu + 1e-6
    record_property("measured", f"sup |F_20 - F| = {gaps[-1]:.6f} (monotone decreasing)")


@C3
def test_c3_quadratic_derivative_gap(chains, record_property):
    s, pair, apps = chain_for(chains, "quadratic")
    pts = np.linspace(-1, 1, 2001)[:, None]
    gaps = [float(np.max(np.abs(a.derivative(pts) - s.gradient(pts)))) for a in apps]
    floor = DEFAULT_RESOLUTION[1][2]
    assert all(b <= a + floor for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-2
    record_property("measured", f"sup |F_20' - F'| = {gaps[-1]:.2e}, monotone up to dual spacing {floor:g}")


@C3
def test_c3_minimal_surface_recession(chains, record_property):
    s, pair, apps = chain_for(chains, "minimal_surface")
    rows = convergence_report(s, pair, ApproximationSchedule(20, 20), np.linspace(-1, 1, 21)[:, None])
    rec = rows[-1]["recession"][0]
    assert abs(rec - float(recession(s, [1.0]))) <= 1e-3
    record_property("measured", f"F_20^inf(1) = {rec:.6f}")


# -- 4 ----------------------------------------------------------------------------------------

@crit(4, "f_j increases to f")
def test_c4_quadratic_schedule(record_property):
    d = GridDomain(1, 1, 0.01, 100)
    g = d.field(lambda x: x)
    s = spec("quadratic")
    reps = ekeland_schedule(s, default_pair(s, 20), SCHED, d, g, FREE)
    f = [r.f_j for r in reps]
    tol = 10 * 1e-8
    assert all(b >= a - tol for a, b in zip(f, f[1:]))
    assert all(r.converged for r in reps)
    bound = SCHED.mu(20) + 20 * SCHED.delta(20) + 1e-6
    assert 0.5 - f[-1] <= bound
    record_property("measured", f"f - f_20 = {0.5 - f[-1]:.6f} <= {bound:.6f}")


# -- 5 ----------------------------------------------------------------------------------------

C5 = crit(5, "obstacle oracle")


def obstacle_problem():
    d = GridDomain(1, 1, 0.02, 50)
    psi = d.field(lambda x: 0.5 - 4 * (x - 0.5) ** 2)
    g = d.zeros()
    return d, g, ConstraintSpec.obstacle(psi, g), psi


@pytest.fixture(scope="module")
def obstacle_run():
    d, g, c, psi = obstacle_problem()
    s = spec("quadratic")
    pair = default_pair(s, 20)
    reps = ekeland_schedule(s, pair, SCHED, d, g, c)
    a = build_approximant(pair, 20, SCHED, default_cache_box(d, g, c))
    direct = minimize_approximant(s, d, g, c)
    return dict(d=d, g=g, c=c, psi=psi, spec=s, pair=pair, reps=reps, a=a, direct=direct)


@C5
def test_c5_matches_active_set_oracle(obstacle_run, record_property):
    r = obstacle_run
    ref = active_set_obstacle(50, 0.02, r["psi"].values)
    err = float(np.max(np.abs(r["direct"].u_j.values - ref)))
    assert r["direct"].converged and err <= 1e-6
    record_property("measured", f"sup |u - u_QP| = {err:.2e}")


@C5
def test_c5_certificate(obstacle_run, record_property):
    r = obstacle_run
    last = r["reps"][-1]
    cert = certificate(r, last.u_j, last.sigma_j, r["c"], [x.sigma_j for x in r["reps"]])
    assert cert.passed, cert.failed()
    assert cert.el_min >= -cert.thresholds["el_min"] * cert.el_scale
    assert cert.div_min_pairing >= -cert.thresholds["div_residual"] * cert.div_scale
    record_property("measured", f"gap L1 {cert.duality_gap_L1:.2e}, el_min {cert.el_min:.2e}, "
                                f"one-sided pairing {cert.div_min_pairing:.2e}")


def certificate(run, u, sigma, c, sigmas=None, a=None, g=None):
    gap = duality_gap(run["pair"], a or run["a"], u, sigma)
    el = el_inequality_test(u, sigma, c, run["g"] if g is None else g, 200, 0)
    dv = divergence_residual(sigma, u.dom, 100, 0)
    integ = integrability_report(run["pair"], run["spec"], u, sigma)
    equi = equiintegrability_profile(sigmas or [sigma], [1.0, 10.0])
    return certify(gap, el, dv, integ, equi, obstacle=c.kind == "obstacle")


# -- 6 ----------------------------------------------------------------------------------------

C6 = crit(6, "duality relation")


@C6
@pytest.mark.parametrize("kind", KINDS)
def test_c6_young_nonnegative(kind, record_property):
    s = spec(kind)
    pair = default_pair(s, 20)
    d = GridDomain(1, 1, 0.01, 100)
    rng = np.random.default_rng(6)
    u = d.field(lambda x: 0.4 * np.sin(3 * x))
    lo = np.inf
    for _ in range(20):
        sigma = GradientField(rng.uniform(-5, 5, size=(d.n_stencils, 1)), d)
        lo = min(lo, duality_gap(pair, s, u, sigma).min)
    assert lo >= -1e-12
    record_property("measured", f"min node gap {lo:.3g}")


@C6
@pytest.mark.parametrize("kind", ["quadratic", "p_power", "minimal_surface", "log_barrier"])
def test_c6_fenchel_equality_at_gradients(kind, record_property):
    s = spec(kind)
    rng = np.random.default_rng(7)
    lim = 0.9 if kind == "log_barrier" else 3.0
    xi = rng.uniform(-lim, lim, size=(100, 1))
    z = s.gradient(xi)
    gap = s.conjugate_values(z) + s.values(xi) - (z * xi).sum(axis=1)
    assert np.all(gap >= -1e-12) and np.all(gap <= 1e-9)
    record_property("measured", f"max |gap| {np.max(np.abs(gap)):.2e}")


# -- 7 ----------------------------------------------------------------------------------------

C7 = crit(7, "divergence-free dual")


@pytest.fixture(scope="module")
def minimal_surface_run():
    d = GridDomain(1, 1, 0.02, 50)
    g = d.field(lambda x: 2 * x)
    s = spec("minimal_surface")
    pair = default_pair(s, 20)
    reps = ekeland_schedule(s, pair, SCHED, d, g, FREE)
    return dict(d=d, g=g, spec=s, pair=pair, reps=reps)


@C7
def test_c7_minimal_surface_residual(minimal_surface_run, record_property):
    last = minimal_surface_run["reps"][-1]
    rep = divergence_residual(last.sigma_j, n_test=100, seed=0)
    assert rep.n_test == 100 and rep.residual <= 1e-6 * rep.scale
    record_property("measured", f"residual {rep.residual:.2e} (scale {rep.scale:g})")


@C7
def test_c7_witness_detected(record_property):
    d = GridDomain(1, 1, 0.01, 100)
    rep = divergence_residual(GradientField(d.stencil_coords[:, :1].copy(), d), d, 100, 0)
    assert rep.residual > 0.1
    record_property("measured", f"sigma = x residual {rep.residual:.3f}")


# -- 8 ----------------------------------------------------------------------------------------

C8 = crit(8, "integrability conditions")


@C8
def test_c8_converged_runs(obstacle_run, minimal_surface_run, record_property):
    d = GridDomain(1, 1, 0.01, 100)
    s = spec("quadratic")
    pair = default_pair(s, 20)
    quad = minimize_approximant(s, d, d.field(lambda x: x), FREE)
    ir = integrability_report(pair, s, quad.u_j, quad.sigma_j)
    assert quad.converged and ir.finite and math.isfinite(ir.norm_pairing_L1)
    assert abs(ir.norm_Fstar_sigma_L1 - quad.f_j) <= 1e-6
    runs = [(obstacle_run["pair"], obstacle_run["spec"], r) for r in obstacle_run["reps"]]
    runs += [(minimal_surface_run["pair"], minimal_surface_run["spec"], r)
             for r in minimal_surface_run["reps"]]
    lb = spec("log_barrier")
    dl = GridDomain(1, 1, 0.02, 50)
    runs.append((default_pair(lb, 60), lb, minimize_approximant(lb, dl, dl.field(lambda x: 0.95 * x), FREE)))
    for pair_, s_, r in runs:
        assert r.converged
        rep = integrability_report(pair_, s_, r.u_j, r.sigma_j, closed_form=True)
        assert rep.finite and math.isfinite(rep.norm_pairing_L1)
    record_property("measured", f"quadratic |F*(sigma)|_L1 - f = {ir.norm_Fstar_sigma_L1 - quad.f_j:.2e}; "
                                f"{len(runs)} further runs finite")


# -- 9 ----------------------------------------------------------------------------------------

C9 = crit(9, "BV representation")


def step_field(jumps=((0.5, 1.0),)):
    d = GridDomain(1, 1, 0.01, 100)
    return JumpField(d.zeros(), list(jumps))


@C9
def test_c9_step_minimal_surface(record_property):
    t = bv_representation_check(step_field(), spec("minimal_surface"), EPS, [e / 100 for e in EPS])
    errs = [r["rel_error"] for r in t.rows]
    assert abs(t.target - 2.0) <= 1e-9
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 0.01 and t.passed
    record_property("measured", "energies " + ", ".join(f"{r['energy']:.4f}" for r in t.rows))


@C9
def test_c9_superlinear_jump_infinite(record_property):
    t = bv_representation_check(step_field(), spec("quadratic"), EPS[:3], [e / 100 for e in EPS[:3]])
    en = [r["energy"] for r in t.rows]
    assert t.infinite_target and not t.passed and en[0] < en[1] < en[2]
    record_property("measured", "energies " + ", ".join(f"{e:.1f}" for e in en) + " -> +inf target")


# -- 10 ----------------------------------------------------------------------------------------

C10 = crit(10, "counterexample battery")


@pytest.fixture(scope="module")
def quadratic_run():
    d = GridDomain(1, 1, 0.01, 100)
    g = d.field(lambda x: x)
    s = spec("quadratic")
    pair = default_pair(s, 20)
    reps = ekeland_schedule(s, pair, SCHED, d, g, FREE)
    a = build_approximant(pair, 20, SCHED, default_cache_box(d, g))
    return dict(d=d, g=g, spec=s, pair=pair, reps=reps, a=a)


@C10
def test_c10_reference_passes(quadratic_run):
    last = quadratic_run["reps"][-1]
    cert = certificate(quadratic_run, last.u_j, last.sigma_j, FREE, [r.sigma_j for r in quadratic_run["reps"]])
    assert cert.passed, cert.failed()


@C10
def test_c10_non_minimiser(obstacle_run, record_property):
    r = obstacle_run
    d = r["d"]
    u = Field(r["direct"].u_j.values + 0.01 * smooth_bump((d.coords[0] - 0.5) / 0.14), d)
    cert = certificate(r, u, extract_dual(r["spec"], u), r["c"], a=r["spec"])
    assert cert.failed() == ["el_inequality"]
    record_property("measured", f"flags failed {cert.failed()}")


def spike_family(d):
    out = []
    for j in range(2, 21):
        s = np.zeros((d.n_stencils, 1))
        s[d.n_stencils // 2, 0] = j
        out.append(GradientField(s, d))
    return out


@C10
def test_c10_spike_family(quadratic_run, record_property):
    last = quadratic_run["reps"][-1]
    cert = certificate(quadratic_run, last.u_j, last.sigma_j, FREE, spike_family(last.u_j.dom))
    assert cert.failed() == ["equi_integrability"]
    record_property("measured", f"flags failed {cert.failed()}")


def witness(run):
    d = run["d"]
    u = d.field(lambda x: 0.5 * x * x)
    return certificate(run, u, extract_dual(run["spec"], u), FREE, a=run["spec"], g=u)


@C10
def test_c10_non_solenoidal_detected(quadratic_run, record_property):
    cert = witness(quadratic_run)
    assert not cert.flags["divergence"]
    assert set(cert.failed()) == {"divergence", "el_inequality"}
    record_property("measured", f"flags failed {cert.failed()}")


@C10
@pytest.mark.xfail(strict=True, reason="unconstrained: the Euler-Lagrange test over +-phi is the "
                   "divergence pairing itself, so a non-solenoidal dual fails both flags")
def test_c10_non_solenoidal_exactly_divergence(quadratic_run):
    assert witness(quadratic_run).failed() == ["divergence"]


# -- 11 ----------------------------------------------------------------------------------------

def pipeline(configs_dir, out):
    for name in ("quadratic_dirichlet", "obstacle_parabola", "minimal_surface_slope2"):
        path = str(configs_dir / f"{name}.toml")
        d = str(out / name)
        assert main(["solve", "--config", path, "--out", d, "--dump-fields", "--svg"]) == 0
        assert main(["verify", "--config", path, "--out", d, "--svg"]) == 0
    assert main(["conjugate-table", "--config", str(configs_dir / "conjugate_minimal_surface.toml"),
                 "--out", str(out / "table"), "--svg"]) == 0
    assert main(["bv-demo", "--config", str(configs_dir / "bv_step.toml"), "--out", str(out / "bv"),
                 "--svg"]) == 0
    return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


@crit(11, "determinism")
def test_c11_byte_identical_pipeline(configs_dir, tmp_path, record_property):
    a = pipeline(configs_dir, tmp_path / "a")
    b = pipeline(configs_dir, tmp_path / "b")
    assert a.keys() == b.keys()
    assert {p.suffix for p in a} == {".csv", ".json", ".svg"}
    diff = [str(p) for p in a if a[p] != b[p]]
    assert not diff
    record_property("measured", f"{len(a)} CSV/JSON/SVG files byte-identical")

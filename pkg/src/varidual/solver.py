"""Projected gradient descent for the discrete constrained problems and the
j-schedule of regularised problems (near-minimisers u_j, duals sigma_j and
the nondecreasing values f_j).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .approximation import Approximant, build_approximant
from .convex_core import IntegrandSpec
from .discrete_problem import (Field, GradientField, apply_dirichlet, divergence_k, energy_value,
                               grad_k, project_constraint)
from .errors import InfeasibleStart, UsageError

ROUNDOFF = 1e-13   # relative slack of energy comparisons (summation roundoff)

__all__ = ["SolveConfig", "SolveReport", "minimize_approximant", "ekeland_schedule",
           "extract_dual", "write_schedule_csv", "default_cache_box"]


@dataclass(frozen=True)
class SolveConfig:
    """Inner solver settings.

    ``init_step`` is ``"bb"`` (Barzilai-Borwein step from the previous
    iterate, falling back to ``h^(2k)``) or ``"fixed"`` (always start the
    backtracking at ``h^(2k)``).
    """

    max_inner_iters: int = 20000
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    init_step: str = "bb"
    seed: int = 0
    warm_start: bool = True
    max_backtracks: int = 60

    def __post_init__(self):
        problems = []
        if not self.max_inner_iters >= 1:
            problems.append("max_inner_iters must be >= 1")
        if not self.grad_tol > 0:
            problems.append("grad_tol must be positive")
        if not 0 < self.armijo_c < 1:
            problems.append("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack < 1:
            problems.append("backtrack must lie in (0, 1)")
        if self.init_step not in ("bb", "fixed"):
            problems.append("init_step must be 'bb' or 'fixed'")
        if problems:
            raise UsageError("; ".join(problems))


@dataclass(eq=False)
class SolveReport:
    j: int | None
    u_j: Field
    sigma_j: GradientField
    f_j: float
    iters: int
    residual: float
    converged: bool
    ekeland_distance: float | None = None
    gap: float | None = None
    eps_j: float | None = None
    slow_path_hits: int = 0
    stalled: bool = False
    fenchel_max: float | None = None
    monotone_ok: bool = True
    trace: list = field(default_factory=list, repr=False)

    def csv_row(self):
        ek = "" if self.ekeland_distance is None else f"{self.ekeland_distance:.17g}"
        return [self.j if self.j is not None else "", f"{self.f_j:.17g}", self.iters,
                f"{self.residual:.17g}", ek]


def _objective(integrand, dom):
    """Energy and Euclidean gradient (on free nodes) of v -> sum F(grad v) h^n."""
    smooth = isinstance(integrand, Approximant)
    sign = (-1) ** dom.k

    def fun(v, need_grad=True):
        t = grad_k(v).tensors
        slow = 0
        if smooth:
            ins = integrand.inside(t)
            slow = int((~ins).sum())
            vals, der = integrand.smooth(t) if need_grad else (integrand.smooth(t)[0], None)
        else:
            vals = integrand.values(t)
            der = integrand.gradient(t) if need_grad else None
        if not np.all(np.isfinite(vals)):
            return math.inf, None, slow
        e = float(np.sum(vals) * dom.cell)
        if not need_grad:
            return e, None, slow
        g = sign * divergence_k(GradientField(der, dom)).values
        return e, g, slow

    return fun


def _residual(v, d, c, dom):
    step = project_constraint(Field(v.values - d, dom), c)
    r = (v.values - step.values)[dom.free]
    return math.sqrt(float(np.sum(r * r)) * dom.cell)


def minimize_approximant(a, dom, g, c, cfg=None, u0=None, u_ref=None, j=None):
    """Minimise sum F(grad_k v) h^n over the Dirichlet class of ``g`` intersected with ``c``.

    ``a`` is an :class:`Approximant` (the regularised problem) or an
    :class:`IntegrandSpec` (the original problem, which must be smooth on
    its domain). The descent direction is ``-G^T W F'(grad v)`` on free
    nodes, i.e. ``(-1)^(k+1) div_k F'(grad v)``. The iteration stops when the
    projected-gradient residual ``|v - P(v - d)|`` falls below
    ``cfg.grad_tol``, when the line search can no longer decrease the
    objective (reported as ``stalled``) or at the iteration cap.

    Steps satisfy the Armijo condition, or, once energy differences are at
    roundoff level (``ROUNDOFF * (1 + |E|)``), the approximate Armijo test
    ``phi'(t) <= (2c - 1) phi'(0)`` on the directional derivative. Energies
    are therefore nonincreasing up to that roundoff slack.
    """
    cfg = cfg or SolveConfig()
    start = u0 if u0 is not None else g
    v = project_constraint(apply_dirichlet(start, g), c)
    fun = _objective(a, dom)
    e, d, slow = fun(v)
    if not math.isfinite(e):
        raise InfeasibleStart("energy is +inf at the start point")
    free = dom.free
    d = np.where(free, d, 0.0)
    t0 = dom.h ** (2 * dom.k)
    t = t0
    trace = [e]
    residual = _residual(v, d, c, dom)
    iters = 0
    stalled = False
    prev_v = prev_d = None
    while residual > cfg.grad_tol and iters < cfg.max_inner_iters:
        if cfg.init_step == "bb" and prev_v is not None:
            s = (v.values - prev_v)[free]
            y = (d - prev_d)[free]
            sy = float(s @ y)
            t = float(s @ s) / sy if sy > 0 else t0
        else:
            t = t0
        accepted = False
        noise = ROUNDOFF * (1.0 + abs(e))
        for _ in range(cfg.max_backtracks):
            trial = project_constraint(Field(v.values - t * d, dom), c)
            step = (trial.values - v.values)[free]
            slope0 = float(d[free] @ step) * dom.cell
            et, dt, s_hits = fun(trial)
            if math.isfinite(et) and et <= e + cfg.armijo_c * slope0:
                accepted = True
                break
            # value differences at roundoff level: approximate Armijo test on
            # the directional derivative instead
            if math.isfinite(et) and slope0 < 0 and et <= e + noise:
                slope_t = float(np.where(free, dt, 0.0)[free] @ step) * dom.cell
                if slope_t <= (2 * cfg.armijo_c - 1) * slope0:
                    accepted = True
                    break
            t *= cfg.backtrack
        if not accepted or np.array_equal(trial.values, v.values):
            stalled = True
            break
        prev_v, prev_d = v.values, d
        v = trial
        e, d = et, dt
        slow += s_hits
        d = np.where(free, d, 0.0)
        trace.append(e)
        residual = _residual(v, d, c, dom)
        iters += 1
    sigma = extract_dual(a, v)
    f = energy_value(a, v)
    ek = None
    if u_ref is not None:
        diff = grad_k(u_ref).tensors - grad_k(v).tensors
        ek = float(np.sum(np.sqrt((diff ** 2 * dom.weights).sum(axis=1))) * dom.cell)
    return SolveReport(j=j, u_j=v, sigma_j=sigma, f_j=f, iters=iters, residual=residual,
                       converged=residual <= cfg.grad_tol, ekeland_distance=ek,
                       slow_path_hits=slow, stalled=stalled, trace=trace)


def extract_dual(a, u):
    """sigma = F_j'(grad_k u) node-wise (interpolated derivative cache)."""
    t = grad_k(u).tensors
    if isinstance(a, IntegrandSpec):
        der = a.gradient(t)
        if der is None:
            from .convex_core import derivative
            der = np.array([derivative(a, x) for x in t])
    else:
        der = a.derivative(t)
    return GradientField(der, u.dom)


def fenchel_residual(a, xi, sigma):
    """F_j*(sigma) + F_j(xi) - <sigma, xi> per node, with F_j* the discrete
    sup over the cache grid (1D only; None otherwise)."""
    if a.m != 1:
        return None
    from .legendre import Envelope1D
    env = Envelope1D(a.values.axes[0], a._vflat)
    fstar = env(sigma[:, 0])
    return fstar + a.value(xi) - sigma[:, 0] * xi[:, 0]


def default_cache_box(dom, g, c=None, margin=1.0):
    """Symmetric cache box covering twice the data gradients plus a margin."""
    r = float(np.abs(grad_k(g).tensors).max())
    if c is not None and c.kind == "obstacle":
        r = max(r, float(np.abs(grad_k(c.psi).tensors).max()))
    r = 2.0 * r + margin
    return [(-r, r)] * dom.m


def ekeland_schedule(spec, pair, schedule, dom, g, c, cfg=None, cache_box=None,
                     cache_spacing=None, reference=None, halt_on_failure=False):
    """Solve the regularised problems for j = j_start..j_end.

    For superlinear kinds the original discrete problem is solved directly
    (unless ``reference`` is given) and each report carries the gap f - f_j,
    the Ekeland distance to the reference minimiser and
    ``eps_j = sqrt(max(f - f_j, 0) + 10 grad_tol)``. With ``halt_on_failure``
    the schedule stops after the first non-converged solve.
    """
    cfg = cfg or SolveConfig()
    if cache_box is None:
        cache_box = default_cache_box(dom, g, c)
    if reference is None and spec is not None and spec.superlinear:
        reference = minimize_approximant(spec, dom, g, c, cfg)
    reports = []
    prev_u = None
    prev_f = -math.inf
    for j in schedule.indices():
        a = build_approximant(pair, j, schedule, cache_box, cache_spacing)
        u0 = prev_u if (cfg.warm_start and prev_u is not None) else None
        rep = minimize_approximant(a, dom, g, c, cfg, u0=u0,
                                   u_ref=reference.u_j if reference is not None else None, j=j)
        if dom.m == 1:
            xi = grad_k(rep.u_j).tensors
            rep.fenchel_max = float(np.max(fenchel_residual(a, xi, rep.sigma_j.tensors)))
        rep.monotone_ok = rep.f_j >= prev_f - 10 * cfg.grad_tol
        if reference is not None:
            rep.gap = reference.f_j - rep.f_j
            rep.eps_j = math.sqrt(max(rep.gap, 0.0) + 10 * cfg.grad_tol)
        prev_f = rep.f_j
        prev_u = rep.u_j
        reports.append(rep)
        if halt_on_failure and not rep.converged:
            break
    return reports


def write_schedule_csv(reports, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["j", "f_j", "iters", "residual", "ekeland_distance"])
        for r in reports:
            wr.writerow(r.csv_row())

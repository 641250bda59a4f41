"""Smooth, convex, globally Lipschitz approximations F_j of an integrand F.

``F_j = Phi_{delta_j} * Fbar_j - mu_j`` where ``Fbar_j`` is the biconjugate of
F truncated to dual slopes ``|z| <= j`` and ``Phi`` is the normalised C^inf
bump kernel. With ``delta_j = j^-3`` and ``mu_j = 1/(j-1)`` the sequence
increases to F; each member is j-Lipschitz.
"""
from __future__ import annotations

import hashlib
import json
import math
import weakref
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import legendre
from .convex_core import (SampledConvexFunction, grid_axis, metric_weights, norm,
                          recession_of, _normalise_box, _per_axis)
from .errors import CacheTooCoarse, GridTooSmall, UsageError

__all__ = [
    "DELTA_RULES", "MU_RULES", "ApproximationSchedule", "Approximant",
    "truncated_biconjugate", "mollify_point", "build_approximant",
    "approximant_value", "approximant_derivative", "convergence_report",
    "quadrature_rule", "default_pair", "DEFAULT_RESOLUTION",
]

DELTA_RULES = {
    "inverse_cube": lambda j: 1.0 / j ** 3,
    "inverse_square": lambda j: 1.0 / j ** 2,
}
MU_RULES = {
    "inverse_predecessor": lambda j: 1.0 / (j - 1),
    "inverse_square": lambda j: 1.0 / j ** 2,
}


@dataclass(frozen=True)
class ApproximationSchedule:
    """Index range and the (delta_j, mu_j) rules of the smoothing sequence."""

    j_start: int = 2
    j_end: int = 20
    delta_rule: str = "inverse_cube"
    mu_rule: str = "inverse_predecessor"
    quadrature_order: int = 9

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise UsageError("; ".join(errors))

    def problems(self):
        """List of invariant violations (empty when valid)."""
        out = []
        if self.delta_rule not in DELTA_RULES:
            out.append(f"unknown delta rule {self.delta_rule!r}")
        if self.mu_rule not in MU_RULES:
            out.append(f"unknown mu rule {self.mu_rule!r}")
        if self.j_start < 2:
            out.append(f"j_start={self.j_start}: mu_j = 1/(j-1) has a pole at j = 1, "
                       "the sequence starts at j = 2")
        if self.j_end < self.j_start:
            out.append("j_end must be >= j_start")
        if self.quadrature_order < 3:
            out.append("quadrature_order must be >= 3")
        if out:
            return out
        js = range(self.j_start, self.j_end + 1)
        for j in js:
            if not (self.delta(j) > 0 and self.mu(j) > 0):
                out.append(f"delta_j and mu_j must be positive (j={j})")
        for j in range(self.j_start, self.j_end):
            if self.delta(j + 1) >= self.delta(j) or self.mu(j + 1) >= self.mu(j):
                out.append(f"delta_j, mu_j must decrease (j={j})")
            if self.chain_margin(j) > 1e-15:
                out.append(f"mu_(j+1) + j*delta_j - mu_j > 0 at j={j}: monotone chain breaks")
        return out

    def delta(self, j):
        return DELTA_RULES[self.delta_rule](j)

    def mu(self, j):
        return MU_RULES[self.mu_rule](j)

    def chain_margin(self, j):
        """mu_{j+1} + j delta_j - mu_j; must be <= 0."""
        return self.mu(j + 1) + j * self.delta(j) - self.mu(j)

    def indices(self):
        return list(range(self.j_start, self.j_end + 1))


# -- truncated biconjugate -------------------------------------------------------

_ENVELOPES = weakref.WeakKeyDictionary()


def _restricted_dual(pair, j):
    dual = pair.dual
    w = metric_weights(dual.m)
    for d, a in enumerate(dual.axes):
        reach = j / math.sqrt(w[d])
        tol = 1e-9 * max(1.0, reach)
        if a[0] > -reach + tol or a[-1] < reach - tol:
            raise GridTooSmall(f"dual grid axis {d} spans [{a[0]}, {a[-1]}], "
                               f"needs the ball of radius {j}")
    z = dual.nodes()
    mask = (dual.finite & pair.trusted).ravel() & (norm(z) <= j * (1 + 1e-12))
    if not mask.any():
        raise GridTooSmall("no trusted dual node within the truncation radius")
    return mask


class _Envelope:
    """Fbar_j for one (pair, j): scattered and grid evaluation."""

    def __init__(self, pair, j):
        self.pair = pair
        self.j = j
        self.mask = _restricted_dual(pair, j)
        dual = pair.dual
        self.m = dual.m
        self.w = metric_weights(self.m)
        if self.m == 1:
            self.env = legendre.Envelope1D(dual.axes[0][self.mask], dual.values.ravel()[self.mask])
        else:
            self.z = dual.nodes()[self.mask]
            self.fz = dual.values.ravel()[self.mask]

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, self.m)
        if self.m == 1:
            return self.env(pts[:, 0])
        out = np.empty(pts.shape[0])
        zt = self.z * self.w
        block = max(1, 2 ** 22 // self.z.shape[0])
        for s in range(0, pts.shape[0], block):
            out[s:s + block] = (pts[s:s + block] @ zt.T - self.fz).max(axis=1)
        return out

    def on_grid(self, axes):
        dual = self.pair.dual
        vals, _ = legendre.fast_transform(dual.axes, dual.values, self.mask.reshape(dual.shape),
                                          axes, self.w)
        return vals


def _envelope(pair, j):
    cache = _ENVELOPES.setdefault(pair, {})
    if j not in cache:
        cache[j] = _Envelope(pair, j)
    return cache[j]


def truncated_biconjugate(pair, j, xi):
    """max over dual nodes |z| <= j of <xi, z> - F*(z).

    Only dual nodes whose maximiser is not on the primal box face take part,
    so box-truncation artifacts of F* do not leak in. ``xi`` may be a single
    point (returns a float) or a batch of shape (N, m).
    """
    if j < 1:
        raise UsageError("j must be >= 1")
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim <= 1
    vals = _envelope(pair, j)(xi.reshape(-1, pair.dual.m))
    return float(vals[0]) if single else vals


# -- mollification -----------------------------------------------------------------

def _bump(r2):
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@lru_cache(maxsize=None)
def quadrature_rule(m, order):
    """Tensor Gauss-Legendre nodes on [-1, 1]^m with bump-kernel weights.

    Weights are normalised to unit mass and the node set is symmetric, so
    constants and affine functions are reproduced up to rounding.
    """
    if order < 3:
        raise UsageError("quadrature_order must be >= 3")
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t - t[::-1])
    w = 0.5 * (w + w[::-1])
    grids = np.meshgrid(*([t] * m), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.ones(nodes.shape[0])
    for g in np.meshgrid(*([w] * m), indexing="ij"):
        wts = wts * g.ravel()
    wts = wts * _bump(norm(nodes) ** 2)
    keep = wts > 0
    nodes, wts = nodes[keep], wts[keep] / wts[keep].sum()
    nodes.setflags(write=False)
    wts.setflags(write=False)
    return nodes, wts


def mollify_point(fn, delta, xi, quadrature_order=9):
    """Quadrature of (Phi_delta * fn)(xi) = sum_a w_a fn(xi - delta t_a).

    ``fn`` maps an (N, m) array to N values. ``xi`` is one point or a batch.
    """
    if not delta > 0:
        raise UsageError("delta must be positive")
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim <= 1
    pts = xi.reshape(-1, xi.shape[-1] if xi.ndim else 1)
    m = pts.shape[1]
    nodes, wts = quadrature_rule(m, quadrature_order)
    shifted = (pts[:, None, :] - delta * nodes[None, :, :]).reshape(-1, m)
    vals = np.asarray(fn(shifted), dtype=float).reshape(pts.shape[0], -1)
    out = vals @ wts
    return float(out[0]) if single else out


# -- approximants -------------------------------------------------------------------

class Approximant:
    """Cached member F_j of the smoothing sequence.

    Node values live in ``values`` (a :class:`SampledConvexFunction` on the
    cache grid); ``derivative_cache`` holds central-difference Frobenius
    gradients per node. Off-node values use multilinear interpolation.
    """

    def __init__(self, j, delta, mu, quadrature_order, values, derivative_cache, source):
        self.j = j
        self.delta = delta
        self.mu = mu
        self.quadrature_order = quadrature_order
        self.values = values
        self.derivative_cache = derivative_cache
        self.lipschitz_bound = float(j)
        self.source = source
        self.m = values.m
        self._vflat = values.values
        self._lo = np.array([a[0] for a in values.axes])
        self._hi = np.array([a[-1] for a in values.axes])
        self._hermite = None

    def slow_value(self, pts):
        """Uncached F_j at arbitrary points (truncated biconjugate + quadrature)."""
        env = _envelope(self.source, self.j)
        return mollify_point(env, self.delta, np.asarray(pts, float).reshape(-1, self.m),
                             self.quadrature_order) - self.mu

    def slow_derivative(self, pts):
        pts = np.asarray(pts, float).reshape(-1, self.m)
        h = self.delta / 4.0
        w = metric_weights(self.m)
        out = np.empty_like(pts)
        for d in range(self.m):
            e = np.zeros(self.m)
            e[d] = h
            out[:, d] = (self.slow_value(pts + e) - self.slow_value(pts - e)) / (2 * h) / w[d]
        return out

    def inside(self, pts):
        pts = np.asarray(pts, float).reshape(-1, self.m)
        tol = 1e-12 * np.maximum(1.0, np.abs(self._hi))
        return np.all((pts >= self._lo - tol) & (pts <= self._hi + tol), axis=1)

    def _interp(self, table, pts):
        axes = self.values.axes
        if self.m == 1:
            return np.interp(pts[:, 0], axes[0], table)
        from scipy.interpolate import RegularGridInterpolator
        return RegularGridInterpolator(axes, table, method="linear", bounds_error=False,
                                       fill_value=None)(pts)

    def value(self, pts, with_flag=False):
        pts = np.asarray(pts, float).reshape(-1, self.m)
        ins = self.inside(pts)
        out = np.empty(pts.shape[0])
        if ins.any():
            out[ins] = self._interp(self._vflat, pts[ins])
        if (~ins).any():
            out[~ins] = self.slow_value(pts[~ins])
        return (out, ~ins) if with_flag else out

    def derivative(self, pts, with_flag=False):
        pts = np.asarray(pts, float).reshape(-1, self.m)
        ins = self.inside(pts)
        out = np.empty_like(pts)
        if ins.any():
            for d in range(self.m):
                out[ins, d] = self._interp(self.derivative_cache[..., d], pts[ins])
        if (~ins).any():
            out[~ins] = self.slow_derivative(pts[~ins])
        return (out, ~ins) if with_flag else out

    def smooth(self, pts):
        """C^1 surrogate (value, derivative) used by the descent solver.

        In 1D this is the cubic Hermite interpolant of the cached values and
        derivatives, so value and derivative are mutually consistent (line
        searches need that); it differs from the multilinear interpolant by
        O(cache_spacing^2). In higher dimension the multilinear value and the
        interpolated derivative are returned.
        """
        pts = np.asarray(pts, float).reshape(-1, self.m)
        if self.m != 1:
            return self.value(pts), self.derivative(pts)
        if self._hermite is None:
            from scipy.interpolate import CubicHermiteSpline
            self._hermite = CubicHermiteSpline(self.values.axes[0], self._vflat,
                                               self.derivative_cache[:, 0])
            self._dhermite = self._hermite.derivative()
        ins = self.inside(pts)
        val = np.empty(pts.shape[0])
        der = np.empty_like(pts)
        x = pts[ins, 0]
        val[ins] = self._hermite(x)
        der[ins, 0] = self._dhermite(x)
        if (~ins).any():
            val[~ins] = self.slow_value(pts[~ins])
            der[~ins] = self.slow_derivative(pts[~ins])
        return val, der

    def sidecar(self):
        """JSON-serialisable metadata for the cache dump."""
        src = self.source
        h = hashlib.sha256()
        for a in src.primal.axes + src.dual.axes:
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(np.ascontiguousarray(src.primal.values).tobytes())
        h.update(np.ascontiguousarray(src.dual.values).tobytes())
        return {"j": self.j, "delta": self.delta, "mu": self.mu,
                "quadrature_order": self.quadrature_order, "source_hash": h.hexdigest()}

    def dump(self, csv_path, json_path):
        self.values.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_approximant(pair, j, schedule, cache_box, cache_spacing=None):
    """Tabulate F_j on a cache grid.

    ``cache_spacing`` defaults to delta_j / 4, the coarsest spacing allowed.
    """
    if not schedule.j_start <= j <= schedule.j_end:
        raise UsageError(f"j={j} outside schedule [{schedule.j_start}, {schedule.j_end}]")
    delta, mu = schedule.delta(j), schedule.mu(j)
    m = pair.dual.m
    if cache_spacing is None:
        cache_spacing = delta / 4.0
    sp = _per_axis(cache_spacing, m)
    if max(sp) > delta / 4.0 * (1 + 1e-12):
        raise CacheTooCoarse(f"cache spacing {max(sp)} > delta_j/4 = {delta / 4.0}")
    box = _normalise_box(cache_box, m)
    axes = [grid_axis(lo, hi, h) for (lo, hi), h in zip(box, sp)]
    env = _envelope(pair, j)
    order = schedule.quadrature_order
    if m == 1:
        vals = mollify_point(env, delta, axes[0][:, None], order) - mu
    else:
        nodes, wts = quadrature_rule(m, order)
        vals = np.zeros(tuple(len(a) for a in axes))
        for t, wt in zip(nodes, wts):
            shifted = [a - delta * t[d] for d, a in enumerate(axes)]
            vals += wt * env.on_grid(shifted)
        vals -= mu
    cache = SampledConvexFunction(axes, vals)
    w = metric_weights(m)
    deriv = np.empty(vals.shape + (m,))
    for d in range(m):
        if len(axes[d]) > 1:
            deriv[..., d] = np.gradient(vals, axes[d], axis=d) / w[d]
        else:
            deriv[..., d] = 0.0
    return Approximant(j, delta, mu, order, cache, deriv, pair)


def approximant_value(a, xi, with_flag=False):
    """F_j at xi: cache interpolation inside the cache box, slow path outside."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim <= 1
    out, flag = a.value(xi, with_flag=True)
    if single:
        return (float(out[0]), bool(flag[0])) if with_flag else float(out[0])
    return (out, flag) if with_flag else out


def approximant_derivative(a, xi, with_flag=False):
    """F_j' at xi (interpolated derivative cache)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim <= 1
    out, flag = a.derivative(xi, with_flag=True)
    if single:
        return (out[0], bool(flag[0])) if with_flag else out[0]
    return (out, flag) if with_flag else out


def convergence_report(spec, pair, schedule, compact_set, probe_rays=None,
                       cache_box=None, cache_spacing=None):
    """Per-j sup errors of F_j and F_j' on a compact set, and F_j^inf on rays.

    Returns a list of dicts with keys ``j``, ``sup_value_gap``,
    ``sup_derivative_gap``, ``recession`` (list aligned with ``probe_rays``).
    """
    pts = np.atleast_2d(np.asarray(compact_set, dtype=float))
    if pts.shape[1] != spec.m:
        raise UsageError("compact set dimension mismatch")
    fv = spec.values(pts)
    if not np.all(np.isfinite(fv)) or np.any(spec.boundary_distance(pts) <= 0):
        raise UsageError("compact set must lie inside dom(F)")
    fd = spec.gradient(pts)
    if fd is None:
        from .convex_core import derivative
        fd = np.array([derivative(spec, p) for p in pts])
    if probe_rays is None:
        probe_rays = [np.eye(spec.m)[0]]
    probe_rays = [np.asarray(r, float) for r in probe_rays]
    if cache_box is None:
        pad = 4 * schedule.delta(schedule.j_start)
        cache_box = [(float(pts[:, d].min()) - pad, float(pts[:, d].max()) + pad) for d in range(spec.m)]
    rows = []
    for j in schedule.indices():
        a = build_approximant(pair, j, schedule, cache_box, cache_spacing)
        gap = float(np.max(np.abs(a.value(pts) - fv)))
        dgap = float(np.max(norm(a.derivative(pts) - fd)))
        rec = [recession_of(lambda p, a=a: a.slow_value(p)[0], r) for r in probe_rays]
        rows.append({"j": j, "sup_value_gap": gap, "sup_derivative_gap": dgap, "recession": rec})
    return rows


DEFAULT_RESOLUTION = {
    # m: (primal half-width, primal spacing, dual spacing)
    1: (50.0, 1e-3, 5e-4),
    2: (8.0, 0.05, 0.05),
    3: (4.0, 0.2, 0.2),
}


def default_pair(spec, j_max, resolution=None):
    """ConjugatePair at the default resolution, dual box covering |z| <= j_max + 1."""
    from .convex_core import conjugate, sample
    half, hp, hd = resolution or DEFAULT_RESOLUTION[spec.m]
    w = metric_weights(spec.m)
    f = sample(spec, [(-half, half)] * spec.m, hp)
    reach = (j_max + 1) / np.sqrt(w)
    return conjugate(f, [(-r, r) for r in reach], hd)

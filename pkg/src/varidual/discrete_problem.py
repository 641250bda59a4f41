"""Grids, k-th order difference operators, energies and the 1D BV toolkit.

Layout (per axis): nodes ``x_i = i h`` for ``i = -(w-1) .. N+w-1`` where ``N``
is ``inner_extent`` and ``w`` the collar width. Omega is ``(0, N h)``; the free
nodes are ``i = 1 .. N-1`` on every axis and everything else is collar.
Gradients are forward differences attached to a base node; only stencils
that touch a free node enter energies and pairings.

Tensor components: ``(u_x,)`` for n=1, ``(u_x, u_y)`` for n=2, k=1 and
``(u_xx, u_yy, u_xy)`` for n=2, k=2, with the Frobenius weights ``(1, 1, 2)``
on the last layout (the mixed entry is stored once).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .convex_core import (ExtendedValue, IntegrandSpec, metric_weights, recession,
                          tensor_dim)
from .errors import InfeasibleConstraint, UsageError

__all__ = [
    "GridDomain", "Field", "GradientField", "JumpField", "ConstraintSpec",
    "grad_k", "divergence_k", "energy", "energy_value", "energy_gradient",
    "project_constraint", "apply_dirichlet", "bv_energy", "mollified_recovery",
    "bump_cell_masses",
]


class GridDomain:
    """Box Omega inside a collar-padded box Omega'.

    Parameters
    ----------
    n, k : int
        Space dimension and derivative order, each 1 or 2.
    h : float
        Grid spacing.
    inner_extent : int or tuple of int
        Number of cells of Omega per axis.
    collar_width : int, optional
        Fixed node layers outside Omega (counted with the boundary node);
        defaults to ``k``.
    """

    def __init__(self, n, k, h, inner_extent, collar_width=None):
        if n not in (1, 2) or k not in (1, 2):
            raise UsageError("n and k must be 1 or 2")
        if not h > 0:
            raise UsageError("h must be positive")
        ext = (inner_extent,) * n if np.isscalar(inner_extent) else tuple(inner_extent)
        if len(ext) != n or any(int(e) != e or e < 2 for e in ext):
            raise UsageError("inner_extent must give at least 2 cells per axis")
        w = k if collar_width is None else int(collar_width)
        if w < k:
            raise UsageError(f"collar width {w} < k = {k}")
        self.n, self.k, self.h, self.w = n, k, float(h), w
        self.inner_extent = tuple(int(e) for e in ext)
        self.m = tensor_dim(n, k)
        self.weights = metric_weights(self.m)
        self.index = [np.arange(-(w - 1), e + w) for e in self.inner_extent]
        self.coords = [i * self.h for i in self.index]
        self.shape = tuple(len(i) for i in self.index)
        free1 = [(i >= 1) & (i <= e - 1) for i, e in zip(self.index, self.inner_extent)]
        free = free1[0]
        for f in free1[1:]:
            free = np.multiply.outer(free, f)
        self.free = free
        self.collar = ~free
        self._build_operators()

    # -- operators ---------------------------------------------------------------
    def _build_operators(self):
        h, k = self.h, self.k
        D = []
        for L in self.shape:
            if k == 1:
                d = sp.diags([-np.ones(L - 1), np.ones(L - 1)], [0, 1], shape=(L - 1, L))
            else:
                d = sp.diags([np.ones(L - 2), -2 * np.ones(L - 2), np.ones(L - 2)], [0, 1, 2],
                             shape=(L - 2, L))
            D.append(d)
        if self.n == 1:
            comps = [D[0] / h ** k]
            base_shape = (self.shape[0] - k,)
        else:
            nx, ny = self.shape
            bx, by = nx - k, ny - k
            base_shape = (bx, by)

            def restrict(L, keep):
                return sp.eye(keep, L, format="csr")

            if k == 1:
                gx = sp.kron(D[0], restrict(ny, by))
                gy = sp.kron(restrict(nx, bx), D[1])
                comps = [gx / h, gy / h]
            else:
                gxx = sp.kron(D[0], restrict(ny, by))
                gyy = sp.kron(restrict(nx, bx), D[1])
                f1 = [sp.diags([-np.ones(L - 1), np.ones(L - 1)], [0, 1], shape=(L - 1, L)) for L in self.shape]
                gxy = sp.kron(restrict(nx - 1, bx) @ f1[0], restrict(ny - 1, by) @ f1[1])
                comps = [gxx / h ** 2, gyy / h ** 2, gxy / h ** 2]
        comps = [sp.csr_matrix(c) for c in comps]
        freeflat = self.free.ravel().astype(float)
        touch = np.zeros(comps[0].shape[0], dtype=bool)
        for c in comps:
            touch |= (abs(c) @ freeflat) > 0
        self.base_shape = base_shape
        self.stencil_mask = touch.reshape(base_shape)
        rows = np.flatnonzero(touch)
        self.G = [c[rows] for c in comps]
        self.n_stencils = rows.size
        bidx = np.unravel_index(rows, base_shape)
        self.stencil_coords = np.stack([self.coords[d][bidx[d]] for d in range(self.n)], axis=1)

    @property
    def volume(self):
        """Measure of the discrete Omega: stencil count times h^n."""
        return self.n_stencils * self.h ** self.n

    @property
    def cell(self):
        return self.h ** self.n

    def mesh(self):
        """Node coordinate arrays (``np.meshgrid`` with ij indexing)."""
        return np.meshgrid(*self.coords, indexing="ij")

    def field(self, fn_or_values):
        """Field from a callable of the coordinate arrays or from raw values."""
        if callable(fn_or_values):
            vals = np.broadcast_to(np.asarray(fn_or_values(*self.mesh()), dtype=float), self.shape)
            return Field(np.array(vals), self)
        return Field(np.asarray(fn_or_values, dtype=float).reshape(self.shape), self)

    def zeros(self):
        return Field(np.zeros(self.shape), self)

    def config(self):
        ext = self.inner_extent[0] if self.n == 1 else list(self.inner_extent)
        return {"n": self.n, "k": self.k, "h": self.h, "inner_extent": ext,
                "collar_width": self.w}

    def __repr__(self):
        return (f"GridDomain(n={self.n}, k={self.k}, h={self.h}, "
                f"inner_extent={self.inner_extent}, collar_width={self.w})")


@dataclass(eq=False)
class Field:
    """Real values on every node of Omega'."""

    values: np.ndarray
    dom: GridDomain

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.dom.shape:
            raise UsageError(f"field shape {self.values.shape} != grid {self.dom.shape}")
        if not np.all(np.isfinite(self.values)):
            raise UsageError("field values must be finite")

    def copy(self):
        return Field(self.values.copy(), self.dom)

    def __add__(self, other):
        o = other.values if isinstance(other, Field) else other
        return Field(self.values + o, self.dom)

    def __sub__(self, other):
        o = other.values if isinstance(other, Field) else other
        return Field(self.values - o, self.dom)

    def to_csv(self, path):
        dom = self.dom
        idx = np.meshgrid(*dom.index, indexing="ij")
        xs = dom.mesh()
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow([f"i{d}" for d in range(dom.n)] + [f"x{d}" for d in range(dom.n)] + ["value"])
            for flat in range(self.values.size):
                pos = np.unravel_index(flat, dom.shape)
                wr.writerow([int(i[pos]) for i in idx] + [f"{x[pos]:.17g}" for x in xs]
                            + [f"{self.values[pos]:.17g}"])

    @classmethod
    def from_csv(cls, path, dom):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        vals = np.array([float(r[-1]) for r in rows])
        return cls(vals.reshape(dom.shape), dom)


@dataclass(eq=False)
class GradientField:
    """One tensor per kept stencil, shape (n_stencils, m)."""

    tensors: np.ndarray
    dom: GridDomain

    def __post_init__(self):
        self.tensors = np.asarray(self.tensors, dtype=float).reshape(self.dom.n_stencils, self.dom.m)

    def norms(self):
        return np.sqrt((self.tensors ** 2 * self.dom.weights).sum(axis=1))

    def to_csv(self, path):
        dom = self.dom
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow([f"x{d}" for d in range(dom.n)] + [f"s{c}" for c in range(dom.m)])
            for x, t in zip(dom.stencil_coords, self.tensors):
                wr.writerow([f"{v:.17g}" for v in x] + [f"{v:.17g}" for v in t])

    @classmethod
    def from_csv(cls, path, dom):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        t = np.array([[float(v) for v in r[dom.n:]] for r in rows])
        if t.shape != (dom.n_stencils, dom.m):
            raise UsageError("gradient field dump does not match the grid")
        return cls(t, dom)


def grad_k(u):
    """k-th order forward differences of ``u`` on the kept stencils."""
    flat = u.values.ravel()
    return GradientField(np.stack([G @ flat for G in u.dom.G], axis=1), u.dom)


def divergence_k(sigma):
    """Discrete adjoint: ``(-1)^k G^T W sigma`` on free nodes, zero on the collar.

    For every phi vanishing on the collar,
    ``sum <sigma, grad_k phi>_W h^n = (-1)^k sum div(sigma) phi h^n``.
    """
    dom = sigma.dom
    acc = np.zeros(int(np.prod(dom.shape)))
    for c, G in enumerate(dom.G):
        acc += G.T @ (dom.weights[c] * sigma.tensors[:, c])
    out = (-1) ** dom.k * acc.reshape(dom.shape)
    out[dom.collar] = 0.0
    return Field(out, dom)


def _integrand_values(integrand, tensors):
    if isinstance(integrand, IntegrandSpec):
        return integrand.values(tensors)
    return integrand.value(tensors)


def _integrand_derivative(integrand, tensors):
    if isinstance(integrand, IntegrandSpec):
        g = integrand.gradient(tensors)
        if g is None:
            from .convex_core import derivative
            g = np.array([derivative(integrand, t) for t in tensors])
        return g
    return integrand.derivative(tensors)


def energy_value(integrand, u):
    """Riemann sum of F(grad_k u) over Omega as a float (inf allowed)."""
    vals = _integrand_values(integrand, grad_k(u).tensors)
    if not np.all(np.isfinite(vals)):
        return math.inf
    return float(np.sum(vals) * u.dom.cell)


def energy(integrand, u):
    """Discrete energy sum_Omega F(grad_k u) h^n as an ExtendedValue."""
    return ExtendedValue.of(energy_value(integrand, u))


def energy_gradient(integrand, u):
    """Euclidean gradient of :func:`energy_value` w.r.t. the free node values.

    Returns ``(G^T W F'(grad u)) h^n`` with collar entries zeroed, plus the
    dual field ``F'(grad u)``.
    """
    dom = u.dom
    sigma = GradientField(_integrand_derivative(integrand, grad_k(u).tensors), dom)
    g = (-1) ** dom.k * divergence_k(sigma).values * dom.cell
    return g, sigma


@dataclass(eq=False)
class ConstraintSpec:
    """Feasible set: unconstrained, or the obstacle set u >= psi on Omega.

    Passing the boundary datum ``g`` checks feasibility (g >= psi on the
    collar) at construction.
    """

    kind: str = "unconstrained"
    psi: Field | None = None
    g: Field | None = None

    def __post_init__(self):
        if self.kind not in ("unconstrained", "obstacle"):
            raise UsageError(f"unknown constraint kind {self.kind!r}")
        if (self.kind == "obstacle") != (self.psi is not None):
            raise UsageError("psi must be given exactly for obstacle constraints")
        if self.kind == "obstacle" and self.g is not None:
            col = self.psi.dom.collar
            bad = self.g.values[col] < self.psi.values[col]
            if bad.any():
                worst = float((self.psi.values[col] - self.g.values[col]).max())
                raise InfeasibleConstraint(f"g < psi on {int(bad.sum())} collar nodes "
                                           f"(worst by {worst:.3g})")

    @classmethod
    def obstacle(cls, psi, g=None):
        return cls("obstacle", psi, g)


def project_constraint(u, c):
    """max(u, psi) on free nodes for obstacles; identity otherwise."""
    if c.kind == "unconstrained":
        return u.copy()
    if c.psi.dom.shape != u.dom.shape:
        raise UsageError("obstacle and field live on different grids")
    out = u.values.copy()
    free = u.dom.free
    out[free] = np.maximum(out[free], c.psi.values[free])
    return Field(out, u.dom)


def apply_dirichlet(u, g):
    """Replace collar values of ``u`` by those of ``g``."""
    if u.dom.shape != g.dom.shape:
        raise UsageError("u and g live on different grids")
    out = u.values.copy()
    out[u.dom.collar] = g.values[u.dom.collar]
    return Field(out, u.dom)


# -- 1D BV fields -----------------------------------------------------------------

@dataclass(eq=False)
class JumpField:
    """1D field whose k-th derivative is ``ac dx + sum_i s_i delta_{x_i}``.

    ``ac`` samples the absolutely continuous density at the nodes; ``left``
    holds the value (and for k=2 the slope) at the leftmost node, from which
    the field is integrated.
    """

    ac: Field
    jumps: list = field(default_factory=list)
    left: tuple = (0.0, 0.0)

    def __post_init__(self):
        dom = self.ac.dom
        if dom.n != 1:
            raise UsageError("JumpField is 1D only")
        omega = dom.inner_extent[0] * dom.h
        jumps = [(float(x), float(s)) for x, s in self.jumps]
        xs = [x for x, _ in jumps]
        if any(not 0.0 < x < omega for x in xs):
            raise UsageError("jump locations must lie inside Omega")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise UsageError("jump locations must be sorted and distinct")
        if any(s == 0.0 for _, s in jumps):
            raise UsageError("jump heights must be nonzero")
        self.jumps = jumps

    @property
    def dom(self):
        return self.ac.dom


_KGL_T, _KGL_W = np.polynomial.legendre.leggauss(40)


def _bump1(t):
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def _bump_integral(a, b):
    """Unnormalised integral of the 1D bump over [a, b] (clipped to [-1, 1])."""
    a = np.clip(a, -1.0, 1.0)
    b = np.clip(b, -1.0, 1.0)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    t = mid[..., None] + half[..., None] * _KGL_T
    return half * (_bump1(t) @ _KGL_W)


_BUMP_MASS = float(sum(_bump_integral(np.array([lo]), np.array([lo + 0.125]))[0]
                       for lo in np.arange(-1.0, 1.0, 0.125)))


def bump_cell_masses(edges, center, eps):
    """Mass of the normalised kernel Phi_eps(. - center) in each [edges[p], edges[p+1]]."""
    edges = np.asarray(edges, dtype=float)
    a = (edges[:-1] - center) / eps
    b = (edges[1:] - center) / eps
    out = np.zeros(a.shape)
    hit = (b > -1.0) & (a < 1.0)
    if hit.any():
        # split long intervals so the fixed-order rule stays accurate
        aa, bb = np.clip(a[hit], -1, 1), np.clip(b[hit], -1, 1)
        pieces = 16
        tot = np.zeros(aa.shape)
        for q in range(pieces):
            lo = aa + (bb - aa) * q / pieces
            hi = aa + (bb - aa) * (q + 1) / pieces
            tot += _bump_integral(lo, hi)
        out[hit] = tot / _BUMP_MASS
    return out


def _window_edges(dom):
    """Integration windows attached to the k-th difference at each base node."""
    x = dom.coords[0]
    h = dom.h
    base = x[: len(x) - dom.k]
    if dom.k == 1:
        return base, base + h
    return base + 0.5 * h, base + 1.5 * h


def _ac_masses(uj):
    """Integral of the ac density over each difference window (exact for linear ac)."""
    dom = uj.dom
    a = uj.ac.values
    h = dom.h
    if dom.k == 1:
        return 0.5 * (a[:-1] + a[1:]) * h
    return a[1:-1] * h


def _integrate(dom, masses, left):
    """Field whose k-th forward differences equal masses / h."""
    h = dom.h
    L = dom.shape[0]
    u = np.empty(L)
    if dom.k == 1:
        u[0] = left[0]
        u[1:] = left[0] + np.cumsum(masses)
    else:
        d = np.empty(L - 1)
        d[0] = left[1] * h
        d[1:] = d[0] + np.cumsum(masses) * h
        u[0] = left[0]
        u[1:] = left[0] + np.cumsum(d)
    return Field(u, dom)


def mollified_recovery(uj, epsilon):
    """Smooth recovery field: the singular part is smeared by Phi_eps, ac is kept.

    The k-th derivative density of the result is ``ac + sum_i s_i
    Phi_eps(x - x_i)`` (window averages), integrated from ``uj.left``.
    Requires each kernel support to stay inside Omega.
    """
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    dom = uj.dom
    omega = dom.inner_extent[0] * dom.h
    for x, _ in uj.jumps:
        if not epsilon < min(x, omega - x):
            raise UsageError(f"epsilon={epsilon} too large: kernel around {x} leaves Omega")
    lo, hi = _window_edges(dom)
    masses = _ac_masses(uj).copy()
    edges = np.append(lo, hi[-1])
    contiguous = np.allclose(edges[1:-1], hi[:-1], rtol=0, atol=1e-12 * max(1.0, omega))
    for x, s in uj.jumps:
        if contiguous:
            masses += s * bump_cell_masses(edges, x, epsilon)
        else:
            masses += s * np.array([bump_cell_masses(np.array([a, b]), x, epsilon)[0]
                                    for a, b in zip(lo, hi)])
    return _integrate(dom, masses, uj.left)


def ac_part(uj):
    """The field obtained by dropping all jumps (absolutely continuous part)."""
    return _integrate(uj.dom, _ac_masses(uj), uj.left)


def bv_energy(uj, spec):
    """Energy of the ac part plus sum_i |s_i| F^inf(sign s_i) (1D)."""
    base = energy_value(spec, ac_part(uj))
    if not math.isfinite(base):
        return ExtendedValue.of(math.inf)
    sing = 0.0
    for _, s in uj.jumps:
        r = recession(spec, [math.copysign(1.0, s)])
        if r.is_inf:
            return ExtendedValue.of(math.inf)
        sing += abs(s) * r.value
    return ExtendedValue.of(base + sing)

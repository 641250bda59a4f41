"""Extended-real-valued convex integrands on a small tensor space.

Points of the tensor space are plain float arrays of shape ``(m,)`` (or
``(N, m)`` for batches). For ``n = 2, k = 2`` the three coordinates are
``(xx, yy, xy)`` with the mixed entry stored once; the Frobenius inner
product therefore carries the diagonal weights ``(1, 1, 2)``. In every other
configuration the weights are all one.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Callable, Optional

import numpy as np

from . import legendre
from .errors import EmptyDomain, OutsideDomain, UsageError

__all__ = [
    "ExtendedValue", "INF", "metric_weights", "tensor_dim", "inner", "norm",
    "Coercivity", "IntegrandSpec", "CATALOG_KINDS", "catalog",
    "SampledConvexFunction", "ConjugatePair", "DemiCoercivityCertificate",
    "evaluate", "sample", "conjugate", "biconjugate", "biconjugate_error_bound", "recession",
    "recession_of", "derivative", "check_demi_coercivity",
    "essential_smoothness_probe", "grid_axis",
]

RECESSION_CAP = 1e12

_TENSOR_DIMS = {(1, 1): 1, (1, 2): 1, (2, 1): 2, (2, 2): 3}


def tensor_dim(n, k):
    """Dimension of the flattened symmetric tensor space for N = 1."""
    try:
        return _TENSOR_DIMS[(n, k)]
    except KeyError:
        raise UsageError(f"unsupported (n, k) = ({n}, {k})") from None


def metric_weights(m):
    """Diagonal Frobenius weights of the flattened coordinates."""
    if m == 3:
        return np.array([1.0, 1.0, 2.0])
    if m in (1, 2):
        return np.ones(m)
    raise UsageError(f"tensor dimension must be 1, 2 or 3, got {m}")


def inner(a, b):
    """Frobenius inner product over the last axis."""
    a = np.asarray(a, dtype=float)
    w = metric_weights(a.shape[-1])
    return np.sum(a * np.asarray(b, dtype=float) * w, axis=-1)


def norm(a):
    return np.sqrt(inner(a, a))


@total_ordering
@dataclass(frozen=True)
class ExtendedValue:
    """A value in R or +infinity. -infinity is not representable."""

    finite: bool
    value: Optional[float] = None

    def __post_init__(self):
        if self.finite:
            if self.value is None or not math.isfinite(self.value):
                raise ValueError("finite ExtendedValue needs a finite float")
        elif self.value is not None:
            raise ValueError("+inf carries no value")

    @classmethod
    def of(cls, x):
        x = float(x)
        if x == math.inf:
            return INF
        if math.isnan(x) or x == -math.inf:
            raise ValueError(f"not an extended value: {x}")
        return cls(True, x)

    @property
    def is_inf(self):
        return not self.finite

    def __float__(self):
        return self.value if self.finite else math.inf

    def __add__(self, other):
        other = other if isinstance(other, ExtendedValue) else ExtendedValue.of(other)
        if self.finite and other.finite:
            return ExtendedValue(True, self.value + other.value)
        return INF

    __radd__ = __add__

    def scale(self, t):
        """Multiply by a nonnegative scalar (0 * inf = 0)."""
        if t < 0:
            raise ValueError("negative scaling would produce -inf")
        if self.finite:
            return ExtendedValue(True, self.value * t)
        return ExtendedValue(True, 0.0) if t == 0 else INF

    def __eq__(self, other):
        if isinstance(other, ExtendedValue):
            return self.finite == other.finite and self.value == other.value
        return float(self) == other

    def __lt__(self, other):
        return float(self) < float(other)

    def __hash__(self):
        return hash((self.finite, self.value))

    def __repr__(self):
        return f"ExtendedValue({self.value})" if self.finite else "ExtendedValue(+inf)"


INF = ExtendedValue(False)


@dataclass(frozen=True)
class Coercivity:
    """Growth descriptor: superlinear ``theta`` (H1) or a demi-coercive triple (H2)."""

    theta: Optional[Callable[[float], float]] = None
    x0: Optional[np.ndarray] = None
    c1: Optional[float] = None
    c2: Optional[float] = None

    @property
    def superlinear(self):
        return self.theta is not None


CATALOG_KINDS = ("quadratic", "p_power", "minimal_surface", "log_barrier",
                 "abs_value", "custom_sampled")


@dataclass(frozen=True, eq=False)
class IntegrandSpec:
    """A convex integrand from the catalog.

    Convexity of each kind:

    * ``quadratic`` ``|x|^2 / 2`` and ``p_power`` ``|x|^p / p`` are convex
      increasing functions of a norm.
    * ``minimal_surface`` ``sqrt(1 + |x|^2)`` is the norm of ``(1, x)``.
    * ``log_barrier`` ``-log(1 - |x|^2 / R^2)``: ``-log(1 - t)`` is convex
      increasing and ``|x|^2 / R^2`` is convex, on the open ball of radius R.
    * ``abs_value`` ``|x|`` is a norm.
    * ``custom_sampled`` is the multilinear interpolant of a grid sample, which
      is convex when the sample passes :meth:`SampledConvexFunction.check_convexity`.
    """

    kind: str
    m: int = 1
    params: dict = field(default_factory=dict)
    coercivity: Coercivity = field(default_factory=Coercivity)

    def __post_init__(self):
        if self.kind not in CATALOG_KINDS:
            raise UsageError(f"unknown integrand kind {self.kind!r}")
        metric_weights(self.m)
        if self.kind == "p_power" and not self.params.get("p", 0) > 1:
            raise UsageError("p_power needs p > 1")
        if self.kind == "log_barrier" and not self.params.get("radius", 1.0) > 0:
            raise UsageError("log_barrier radius must be positive")
        if self.kind == "custom_sampled":
            s = self.params.get("sample")
            if not isinstance(s, SampledConvexFunction) or s.m != self.m:
                raise UsageError("custom_sampled needs a SampledConvexFunction of matching dimension")

    @property
    def superlinear(self):
        return self.coercivity.superlinear

    # -- vectorised evaluation -------------------------------------------------
    def _points(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 1:
            xi = xi[None, :]
        if xi.shape[-1] != self.m:
            raise UsageError(f"tensor dimension {xi.shape[-1]} != {self.m}")
        return xi

    def values(self, xi):
        """Values at points of shape (N, m); +inf outside the domain."""
        xi = self._points(xi)
        if self.kind == "custom_sampled":
            return self.params["sample"].interpolate(xi)
        r = norm(xi)
        if self.kind == "quadratic":
            return 0.5 * r * r
        if self.kind == "p_power":
            p = self.params["p"]
            return r ** p / p
        if self.kind == "minimal_surface":
            return np.sqrt(1.0 + r * r)
        if self.kind == "abs_value":
            return r
        rad = self.params.get("radius", 1.0)
        t = (r / rad) ** 2
        out = np.full(r.shape, np.inf)
        inside = t < 1.0
        out[inside] = -np.log1p(-t[inside])
        return out

    def gradient(self, xi):
        """Closed-form Frobenius gradient at interior points, or None."""
        xi = self._points(xi)
        r = norm(xi)[:, None]
        if self.kind == "quadratic":
            return xi.copy()
        if self.kind == "p_power":
            p = self.params["p"]
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(r > 0, r ** (p - 2) * xi, 0.0)
            return g
        if self.kind == "minimal_surface":
            return xi / np.sqrt(1.0 + r * r)
        if self.kind == "log_barrier":
            rad = self.params.get("radius", 1.0)
            return (2.0 / rad ** 2) * xi / (1.0 - (r / rad) ** 2)
        if self.kind == "abs_value":
            with np.errstate(divide="ignore", invalid="ignore"):
                return xi / r
        return None

    def conjugate_values(self, z):
        """Closed-form Fenchel conjugate, or None for sampled integrands."""
        z = self._points(z)
        s = norm(z)
        if self.kind == "quadratic":
            return 0.5 * s * s
        if self.kind == "p_power":
            q = self.params["p"] / (self.params["p"] - 1.0)
            return s ** q / q
        if self.kind == "minimal_surface":
            out = np.full(s.shape, np.inf)
            ok = s <= 1.0
            out[ok] = -np.sqrt(1.0 - s[ok] ** 2)
            return out
        if self.kind == "abs_value":
            return np.where(s <= 1.0, 0.0, np.inf)
        if self.kind == "log_barrier":
            rad = self.params.get("radius", 1.0)
            a = rad * s
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(a > 0, a / (np.sqrt(1.0 + a * a) + 1.0), 0.0)
            return a * t + np.log1p(-t * t)
        return None

    def boundary_distance(self, xi):
        """Distance from xi to the complement of the domain (inf if none)."""
        xi = self._points(xi)
        if self.kind == "log_barrier":
            return self.params.get("radius", 1.0) - norm(xi)
        if self.kind == "custom_sampled":
            return self.params["sample"].interior_distance(xi)
        return np.full(xi.shape[0], np.inf)


def catalog(kind, params=None, m=1):
    """Build a catalog integrand with its coercivity descriptor."""
    params = dict(params or {})
    if kind == "quadratic":
        coer = Coercivity(theta=lambda t: 0.5 * t * t)
    elif kind == "p_power":
        p = params.get("p")
        if p is None or not p > 1:
            raise UsageError("p_power needs p > 1")
        coer = Coercivity(theta=lambda t, p=p: t ** p / p)
    elif kind == "log_barrier":
        rad = params.setdefault("radius", 1.0)
        coer = Coercivity(theta=lambda t, rad=rad: -math.log1p(-(t / rad) ** 2) if t < rad else math.inf)
    elif kind in ("minimal_surface", "abs_value"):
        coer = Coercivity(x0=np.zeros(m), c1=1.0, c2=0.0)
    elif kind == "custom_sampled":
        coer = Coercivity()
    else:
        raise UsageError(f"unknown integrand kind {kind!r}")
    return IntegrandSpec(kind=kind, m=m, params=params, coercivity=coer)


def _as_point(spec, xi):
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != spec.m:
        raise UsageError(f"tensor dimension {xi.size} != {spec.m}")
    if not np.all(np.isfinite(xi)):
        raise UsageError("tensor coordinates must be finite")
    return xi


def evaluate(spec, xi):
    """F(xi) as an :class:`ExtendedValue`."""
    xi = _as_point(spec, xi)
    return ExtendedValue.of(spec.values(xi)[0])


# -- grids -------------------------------------------------------------------

def grid_axis(lo, hi, h):
    """Nodes i*h for integer i with lo <= i*h <= hi (box snapped to multiples of h)."""
    i0 = int(math.ceil(lo / h - 1e-9))
    i1 = int(math.floor(hi / h + 1e-9))
    if i1 < i0:
        raise UsageError(f"empty axis [{lo}, {hi}] at spacing {h}")
    return np.arange(i0, i1 + 1) * h


def _normalise_box(box, m=None):
    box = [tuple(map(float, b)) for b in np.atleast_2d(np.asarray(box, dtype=float))]
    if m is not None and len(box) != m:
        raise UsageError(f"box has {len(box)} axes, expected {m}")
    return box


def _per_axis(spacing, m):
    sp = np.broadcast_to(np.asarray(spacing, dtype=float), (m,))
    if np.any(sp <= 0):
        raise UsageError("spacing must be positive")
    return tuple(float(s) for s in sp)


class SampledConvexFunction:
    """Values of an extended-real function on a product grid.

    ``finite`` is the explicit +inf tag; ``values`` holds ``inf`` where the tag
    is False so that numpy comparisons behave, but the tag is authoritative.
    """

    def __init__(self, axes, values, finite=None):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        values = np.asarray(values, dtype=float).reshape(self.shape)
        if finite is None:
            finite = np.isfinite(values)
        self.finite = np.asarray(finite, dtype=bool).reshape(self.shape)
        if np.any(np.isnan(values[self.finite])) or np.any(np.isinf(values[self.finite])):
            raise ValueError("finite nodes need finite values")
        self.values = np.where(self.finite, values, np.inf)
        self.values.setflags(write=False)
        self.finite.setflags(write=False)

    @classmethod
    def from_callable(cls, fn, box, spacing):
        box = _normalise_box(box)
        sp = _per_axis(spacing, len(box))
        axes = [grid_axis(lo, hi, h) for (lo, hi), h in zip(box, sp)]
        pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        return cls(axes, np.asarray(fn(pts), dtype=float))

    @property
    def m(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def box(self):
        return [(float(a[0]), float(a[-1])) for a in self.axes]

    @property
    def spacing(self):
        return tuple(float(a[1] - a[0]) if len(a) > 1 else 0.0 for a in self.axes)

    def nodes(self):
        """All node coordinates, shape (M, m), row-major order."""
        return np.stack([g.ravel() for g in np.meshgrid(*self.axes, indexing="ij")], axis=1)

    def interpolate(self, pts):
        """Multilinear interpolation; +inf unless all cell corners are finite."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        base = np.empty((n, self.m), dtype=np.int64)
        frac = np.empty((n, self.m))
        inside = np.ones(n, dtype=bool)
        for d, a in enumerate(self.axes):
            x = pts[:, d]
            inside &= (x >= a[0] - 1e-12 * max(1.0, abs(a[0]))) & (x <= a[-1] + 1e-12 * max(1.0, abs(a[-1])))
            if len(a) == 1:
                base[:, d] = 0
                frac[:, d] = 0.0
                continue
            i = np.clip(np.searchsorted(a, x, side="right") - 1, 0, len(a) - 2)
            base[:, d] = i
            frac[:, d] = np.clip((x - a[i]) / (a[i + 1] - a[i]), 0.0, 1.0)
        out = np.zeros(n)
        ok = inside.copy()
        for corner in np.ndindex(*([2] * self.m)):
            idx = []
            wgt = np.ones(n)
            for d in range(self.m):
                c = corner[d]
                if len(self.axes[d]) == 1:
                    if c == 1:
                        wgt = wgt * 0.0
                    idx.append(base[:, d])
                    continue
                idx.append(base[:, d] + c)
                wgt = wgt * (frac[:, d] if c else 1.0 - frac[:, d])
            idx = tuple(idx)
            fin = self.finite[idx]
            # corners with zero weight do not matter, except that the point
            # must sit in a closed cell whose used corners are finite
            ok &= fin | (wgt == 0.0)
            out = out + np.where(wgt > 0, wgt * np.where(fin, self.values[idx], 0.0), 0.0)
        out[~ok] = np.inf
        return out

    def interior_distance(self, pts):
        """Lower bound on the distance from pts to non-finite nodes or the box edge."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        bad = ~self.finite
        dist = np.full(pts.shape[0], np.inf)
        for d, a in enumerate(self.axes):
            dist = np.minimum(dist, np.minimum(pts[:, d] - a[0], a[-1] - pts[:, d]))
        if bad.any():
            nodes = self.nodes()[bad.ravel()]
            for s in range(0, pts.shape[0], 256):
                diff = pts[s:s + 256, None, :] - nodes[None, :, :]
                dist[s:s + 256] = np.minimum(dist[s:s + 256], norm(diff).min(axis=1))
        return dist

    def check_convexity(self, rtol=1e-12):
        """Midpoint-convexity violations along axis and diagonal grid lines.

        Returns a list of ``(node_index, direction)`` tuples; empty means the
        sample is discretely convex (values and domain).
        """
        dirs = []
        for d in range(self.m):
            e = [0] * self.m
            e[d] = 1
            dirs.append(tuple(e))
        if self.m >= 2:
            for d1 in range(self.m):
                for d2 in range(d1 + 1, self.m):
                    for sgn in (1, -1):
                        e = [0] * self.m
                        e[d1], e[d2] = 1, sgn
                        dirs.append(tuple(e))
        bad = []
        v = self.values
        fin = self.finite
        for e in dirs:
            if any(s_ != 0 and n < 3 for s_, n in zip(e, self.shape)):
                continue
            core = tuple(slice(1, n - 1) if s_ else slice(0, n) for s_, n in zip(e, self.shape))
            lo = tuple(slice(c.start - s_, c.stop - s_) for c, s_ in zip(core, e))
            hi = tuple(slice(c.start + s_, c.stop + s_) for c, s_ in zip(core, e))
            f0, fl, fh = fin[core], fin[lo], fin[hi]
            # domain convexity: both neighbours finite forces the middle finite
            hole = fl & fh & ~f0
            both = fl & fh & f0
            with np.errstate(invalid="ignore"):
                second = np.where(both, v[lo] + v[hi] - 2.0 * v[core], 0.0)
                scale = np.where(both, np.maximum.reduce([np.abs(v[lo]), np.abs(v[hi]), np.abs(v[core]), np.ones_like(second)]), 1.0)
            viol = hole | (second < -rtol * scale)
            offs = np.array([sl.start for sl in core])
            for ix in np.argwhere(viol):
                bad.append((tuple(int(i) for i in ix + offs), e))
        return bad

    # -- CSV ---------------------------------------------------------------------
    def to_csv(self, path):
        """One row per node: coordinates, value, finite flag (17 significant digits)."""
        nodes = self.nodes()
        vals = self.values.ravel()
        fin = self.finite.ravel()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{d}" for d in range(self.m)] + ["value", "finite"])
            for p, v, f in zip(nodes, vals, fin):
                w.writerow([f"{c:.17g}" for c in p] + [f"{v:.17g}" if f else "inf", int(f)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        m = len(header) - 2
        data = np.array([[float(c) for c in r[:m]] for r in body]).reshape(-1, m)
        vals = np.array([float(r[m]) for r in body])
        fin = np.array([r[m + 1] == "1" for r in body])
        axes = [np.unique(data[:, d]) for d in range(m)]
        shape = tuple(len(a) for a in axes)
        return cls(axes, vals.reshape(shape), fin.reshape(shape))


def sample(spec, box, spacing):
    """Sample an integrand on a box grid (nodes at integer multiples of spacing)."""
    box = _normalise_box(box, spec.m)
    if not all(lo < 0.0 < hi for lo, hi in box):
        raise UsageError("sampling box must contain 0 in its interior")
    f = SampledConvexFunction.from_callable(spec.values, box, spacing)
    if not f.finite.any():
        raise EmptyDomain(f"{spec.kind}: no finite node in {box}")
    return f


# -- conjugation -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConjugatePair:
    """A sampled F with its discrete conjugate F* and the argmax map.

    ``trusted`` marks dual nodes whose maximiser lies strictly inside the
    primal box: there the discrete sup is not an artifact of box truncation.
    """

    primal: SampledConvexFunction
    dual: SampledConvexFunction
    argmax: np.ndarray
    trusted: np.ndarray

    def argmax_points(self):
        return self.primal.nodes()[self.argmax.ravel()].reshape(self.dual.shape + (self.primal.m,))

    def young_residual(self):
        """min over finite node pairs of F(x) + F*(z) - <x, z> (brute force)."""
        p = self.primal
        x = p.nodes()[p.finite.ravel()]
        fx = p.values[p.finite]
        z = self.dual.nodes()
        fz = self.dual.values.ravel()
        w = metric_weights(p.m)
        worst = np.inf
        for s in range(0, z.shape[0], 512):
            ip = (z[s:s + 512, None, :] * w * x[None, :, :]).sum(-1)
            worst = min(worst, float((fx[None, :] + fz[s:s + 512, None] - ip).min()))
        return worst


def conjugate(f, dual_box, dual_spacing, method="fast"):
    """Discrete Fenchel conjugate of a sampled function on a dual grid.

    ``method="brute"`` runs the O(M^2) definition; ``"fast"`` the separable
    hull transform, which returns bit-identical values and argmax.
    """
    if not f.finite.any():
        raise EmptyDomain("conjugate of a function that is +inf everywhere")
    dual_box = _normalise_box(dual_box, f.m)
    sp = _per_axis(dual_spacing, f.m)
    daxes = [grid_axis(lo, hi, h) for (lo, hi), h in zip(dual_box, sp)]
    w = metric_weights(f.m)
    fn = legendre.fast_transform if method == "fast" else legendre.brute_force_transform
    vals, arg = fn(f.axes, f.values, f.finite, daxes, w)
    dual = SampledConvexFunction(daxes, vals)
    multi = np.unravel_index(arg, f.shape)
    on_face = np.zeros(arg.shape, dtype=bool)
    for d in range(f.m):
        on_face |= (multi[d] == 0) | (multi[d] == f.shape[d] - 1)
    return ConjugatePair(primal=f, dual=dual, argmax=arg, trusted=~on_face)


def biconjugate(pair, primal_query_box, spacing=None, method="fast"):
    """Conjugate of the sampled dual, evaluated on a primal grid.

    At a primal node ``x`` with ``F(x)`` finite the result satisfies
    ``0 <= F(x) - F**(x) <= E(x)``, the grid-error bound of
    :func:`biconjugate_error_bound`.
    """
    if spacing is None:
        spacing = pair.primal.spacing
    back = conjugate(pair.dual, primal_query_box, spacing, method=method)
    return back.dual


def biconjugate_error_bound(pair, spec, xi):
    """Grid-error bound E(x) for the discrete biconjugate at points ``xi``.

    With ``z0`` a subgradient of F at x and any dual node z,
    ``F(x) - F**(x) <= F*(z) - F*(z0) - <x, z - z0>``, which is at most
    ``|z - z0| * sup |dF*(s) - x|`` along the segment. Taking the dual cell
    block ``|z - z0|_inf <= h_d`` around ``z0`` (trusted finite nodes only)
    and the discrete argmax points as the values of ``dF*`` there gives

        E(x) = max_z |z - z0|_W * max_z |argmax(z) - x|_W.

    ``inf`` when the block leaves the dual grid or holds no trusted node.
    """
    xi = _as_point(spec, xi) if np.ndim(xi) < 2 else np.asarray(xi, dtype=float)
    d = pair.dual
    w = metric_weights(d.m)
    z0 = spec.gradient(xi)
    if z0 is None:
        z0 = np.array([derivative(spec, x) for x in xi])
    z0 = np.nan_to_num(z0, nan=0.0)          # |x| at 0: 0 is a subgradient
    amax = pair.argmax_points().reshape(-1, d.m)
    out = np.empty(xi.shape[0])
    for i, (x, z) in enumerate(zip(xi, z0)):
        sel = []
        for a, (ax, h) in enumerate(zip(d.axes, d.spacing)):
            idx = np.flatnonzero(np.abs(ax - z[a]) <= h * (1 + 1e-9))
            if idx.size == 0 or idx[0] == 0 or idx[-1] == ax.size - 1:
                sel = None
                break
            sel.append(idx)
        if sel is None:
            out[i] = math.inf
            continue
        flat = np.ravel_multi_index(np.meshgrid(*sel, indexing="ij"), d.shape).ravel()
        flat = flat[pair.trusted.ravel()[flat] & d.finite.ravel()[flat]]
        if flat.size == 0:
            out[i] = math.inf
            continue
        zs = _nodes_at(d, flat)
        dz = float(np.sqrt(((zs - z) ** 2 * w).sum(axis=1)).max())
        dx = float(np.sqrt(((amax[flat] - x) ** 2 * w).sum(axis=1)).max())
        out[i] = dz * dx
    return out


def _nodes_at(f, flat):
    multi = np.unravel_index(flat, f.shape)
    return np.stack([f.axes[a][multi[a]] for a in range(f.m)], axis=1)


# -- recession, derivative ----------------------------------------------------

def recession_of(fn, xi, cap=RECESSION_CAP):
    """Doubling-rule recession value sup_t (fn(t xi) - fn(0)) / t, t = 2^0..2^40.

    ``fn`` maps a point to a float (``inf`` allowed). Returns a float, ``inf``
    once the quotient exceeds ``cap`` or leaves the domain, and also when the
    quotients never settle within the 41 doublings (superlinear growth such
    as t^2 or t log t stays below the cap at t = 2^40 but keeps climbing).
    """
    xi = np.asarray(xi, dtype=float)
    f0 = float(fn(np.zeros_like(xi)))
    if not math.isfinite(f0):
        raise UsageError("recession needs 0 in the domain")
    if not np.any(xi):
        return 0.0
    best = -math.inf
    prev = None
    for e in range(41):
        t = 2.0 ** e
        v = float(fn(t * xi))
        if not math.isfinite(v):
            return math.inf
        q = (v - f0) / t
        if q > cap:
            return math.inf
        best = max(best, q)
        if prev is not None and abs(q - prev) < 1e-10 * (1.0 + abs(q)):
            return best
        prev = q
    return math.inf


def recession(spec, xi):
    """Recession function F^inf(xi) as an ExtendedValue (positively 1-homogeneous)."""
    xi = _as_point(spec, xi)
    val = recession_of(lambda p: spec.values(p)[0], xi)
    return ExtendedValue.of(val)


def derivative(spec, xi):
    """Frobenius gradient F'(xi) at an interior point of dom(F)."""
    xi = _as_point(spec, xi)
    if not math.isfinite(spec.values(xi)[0]):
        raise OutsideDomain(f"{xi} is outside dom(F)")
    dist = float(spec.boundary_distance(xi)[0])
    if spec.kind == "custom_sampled":
        cell = max(spec.params["sample"].spacing)
        if dist < cell:
            raise OutsideDomain(f"{xi} is within one grid cell of the boundary")
    elif dist <= 0:
        raise OutsideDomain(f"{xi} is on the domain boundary")
    if spec.kind == "abs_value" and not np.any(xi):
        raise OutsideDomain("|x| is not differentiable at 0")
    g = spec.gradient(xi)
    if g is not None:
        return g[0]
    hd = min(1e-5, dist / 8.0)
    w = metric_weights(spec.m)
    out = np.empty(spec.m)
    for d in range(spec.m):
        e = np.zeros(spec.m)
        e[d] = hd
        out[d] = (spec.values(xi + e)[0] - spec.values(xi - e)[0]) / (2 * hd) / w[d]
    return out


# -- Lemma on demi-coercivity ---------------------------------------------------

@dataclass
class DemiCoercivityCertificate:
    """Outcome of :func:`check_demi_coercivity`.

    When ``ok`` the inequality ``F*(z) - <x0, z> >= r |z| + c`` holds at every
    finite dual node and the outward boundary slopes support it off the grid.
    ``witness`` is a boundary node whose outward slope is below ``r``.
    """

    x0: np.ndarray
    r: float
    c: float
    ok: bool
    witness: Optional[np.ndarray] = None
    min_boundary_slope: float = math.inf
    converse_bound: Optional[float] = None
    converse_ok: Optional[bool] = None


def check_demi_coercivity(dual, x0, r, spec=None, slope_rtol=1e-9):
    """Certify ``F*(z) - <x0, z> >= r|z| + c`` on a sampled conjugate.

    With ``spec`` given and ``B_r(x0)`` inside dom(F), also checks the bound
    ``c >= -sup_{B_r(x0)} F`` from the forward direction of the lemma.
    """
    if not r > 0:
        raise UsageError("r must be positive")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != dual.m:
        raise UsageError("x0 dimension mismatch")
    if not dual.finite.any():
        raise EmptyDomain("dual has no finite node")
    w = metric_weights(dual.m)
    z = dual.nodes()
    fin = dual.finite.ravel()
    G = dual.values.ravel() - (z * w * x0).sum(axis=1)
    excess = G - r * norm(z)
    c = float(excess[fin].min())

    # boundary slope check along axis lines reaching the box faces
    Gg = np.where(dual.finite, G.reshape(dual.shape), np.nan)
    min_slope = math.inf
    witness = None
    for d in range(dual.m):
        h = dual.spacing[d]
        if dual.shape[d] < 2:
            continue
        sw = math.sqrt(w[d])
        for end, prev, sign in ((-1, -2, 1.0), (0, 1, -1.0)):
            a = np.take(Gg, end, axis=d)
            b = np.take(Gg, prev, axis=d)
            ok = np.isfinite(a) & np.isfinite(b)
            if not ok.any():
                continue
            slope = (a - b) / (h * sw)
            smin = float(np.nanmin(np.where(ok, slope, np.nan)))
            if smin < min_slope:
                min_slope = smin
                pos = np.unravel_index(np.nanargmin(np.where(ok, slope, np.nan)), a.shape)
                idx = list(pos)
                idx.insert(d, end % dual.shape[d])
                witness = np.array([dual.axes[e][idx[e]] for e in range(dual.m)])
    scale = max(1.0, r)
    ok = min_slope >= r - slope_rtol * scale
    cert = DemiCoercivityCertificate(x0=x0, r=float(r), c=c, ok=ok,
                                     witness=None if ok else witness,
                                     min_boundary_slope=min_slope)
    if spec is not None:
        cert.converse_bound, cert.converse_ok = _converse_bound(spec, x0, r, c)
    return cert


def _converse_bound(spec, x0, r, c, n=64):
    """-sup over B_r(x0) of F (sampled), and whether c respects it."""
    m = spec.m
    if m == 1:
        pts = x0 + np.linspace(-r, r, 2 * n + 1)[:, None]
    else:
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(n * 8, m))
        dirs /= norm(dirs)[:, None]
        radii = r * np.linspace(0, 1, n)[:, None, None]
        pts = (x0 + radii * dirs[None, :, :]).reshape(-1, m)
    vals = spec.values(pts)
    if not np.all(np.isfinite(vals)):
        return None, None
    bound = -float(vals.max())
    return bound, c >= bound - 1e-9 * max(1.0, abs(bound))


def essential_smoothness_probe(spec, n_rays=8, steps=60, blowup=1e6):
    """Probe gradient blow-up towards the domain boundary along rays.

    Returns a dict with ``smooth_interior``, ``gradient_blowup``,
    ``finite_boundary`` and the per-ray maximal gradient norms.
    """
    m = spec.m
    if spec.kind == "custom_sampled":
        s = spec.params["sample"]
        center = s.nodes()[s.finite.ravel()].mean(axis=0)
        reach = max(hi - lo for lo, hi in s.box) * 2.0
        stop_gap = max(s.spacing)
    else:
        center = np.zeros(m)
        reach = 1e6
        stop_gap = 0.0
    if m == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(12345)
        dirs = rng.normal(size=(n_rays, m))
        dirs /= norm(dirs)[:, None]

    finite_at = lambda t, e: math.isfinite(spec.values(center + t * e)[0])
    rays = []
    smooth = True
    for e in dirs:
        if finite_at(reach, e):
            rays.append({"direction": e, "boundary": None, "max_grad": None})
            continue
        lo, hi = 0.0, reach
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if finite_at(mid, e):
                lo = mid
            else:
                hi = mid
        tb = lo
        gmax = 0.0
        blew = False
        for s_ in range(1, steps + 1):
            t = tb * (1.0 - 2.0 ** -s_)
            if tb - t < stop_gap:
                break
            try:
                gnorm = float(norm(derivative(spec, center + t * e)))
            except OutsideDomain:
                break
            if not math.isfinite(gnorm):
                smooth = False
                break
            gmax = max(gmax, gnorm)
            if gmax > blowup:
                blew = True
                break
        rays.append({"direction": e, "boundary": tb, "max_grad": gmax, "blowup": blew})
    bounded = [r_ for r_ in rays if r_["boundary"] is not None]
    return {
        "smooth_interior": smooth,
        "finite_boundary": bool(bounded),
        "gradient_blowup": all(r_["blowup"] for r_ in bounded),
        "rays": rays,
    }

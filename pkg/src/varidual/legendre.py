"""Discrete Legendre-Fenchel transforms on product grids.

Two routes compute the same discrete supremum

    g(z) = max_i ( <x_i, z>_W - f(x_i) )

over the finite nodes ``x_i`` of a product grid:

* :func:`brute_force_transform` evaluates every (primal, dual) pair. It is the
  normative definition.
* :func:`fast_transform` runs a separable lower-hull sweep axis by axis, then
  re-evaluates a small candidate window around the hull maximiser with the
  exact same floating point expression as the brute force path, so both
  agree bit for bit including the argmax tie-break.

``W`` is a diagonal metric on the flattened tensor coordinates (the Frobenius
weights, see :func:`varidual.convex_core.metric_weights`). The tie-break for
the argmax is smallest ``|x|_W`` and then smallest flat (row-major) index.
"""
from __future__ import annotations

import numpy as np

__all__ = ["brute_force_transform", "fast_transform", "lower_hull",
           "hull_transform_1d", "Envelope1D"]

_BLOCK_ELEMENTS = 2 ** 22


def _inner(coords, zt):
    """Canonical left-to-right evaluation of sum_d coords[d] * zt[d]."""
    ip = coords[0] * zt[0]
    for d in range(1, len(coords)):
        ip = ip + coords[d] * zt[d]
    return ip


def _node_norms(axes, weights):
    grids = np.meshgrid(*axes, indexing="ij")
    sq = weights[0] * grids[0] * grids[0]
    for d in range(1, len(axes)):
        sq = sq + weights[d] * grids[d] * grids[d]
    return np.sqrt(sq)


def brute_force_transform(axes, values, finite, dual_axes, weights):
    """O(M * Q) discrete conjugate with deterministic argmax.

    Parameters
    ----------
    axes : sequence of 1D arrays
        Primal node coordinates per axis.
    values : ndarray
        Primal values on the product grid; ignored where ``finite`` is False.
    finite : ndarray of bool
        Finite-node mask.
    dual_axes : sequence of 1D arrays
        Dual node coordinates per axis.
    weights : 1D array
        Diagonal metric of the inner product.

    Returns
    -------
    out : ndarray
        Conjugate values on the dual grid.
    argmax : ndarray of int
        Flat primal index of the maximiser for every dual node.
    """
    weights = np.asarray(weights, dtype=float)
    grids = np.meshgrid(*axes, indexing="ij")
    idx = np.flatnonzero(finite.ravel())
    if idx.size == 0:
        raise ValueError("no finite primal node")
    coords = [g.ravel()[idx][None, :] for g in grids]
    fvals = values.ravel()[idx][None, :]
    norms = _node_norms(axes, weights).ravel()[idx][None, :]

    dgrids = np.meshgrid(*dual_axes, indexing="ij")
    zt = [(weights[d] * dgrids[d]).ravel()[:, None] for d in range(len(axes))]
    nq = zt[0].shape[0]
    out = np.empty(nq)
    arg = np.empty(nq, dtype=np.int64)
    block = max(1, _BLOCK_ELEMENTS // idx.size)
    for start in range(0, nq, block):
        sl = slice(start, start + block)
        vals = _inner(coords, [z[sl] for z in zt]) - fvals
        vmax = vals.max(axis=1)
        tied = vals == vmax[:, None]
        pick = np.argmin(np.where(tied, norms, np.inf), axis=1)
        out[sl] = vmax
        arg[sl] = idx[pick]
    shape = tuple(len(a) for a in dual_axes)
    return out.reshape(shape), arg.reshape(shape)


def lower_hull(x, f):
    """Indices of the lower convex hull of points (x, f), x strictly increasing.

    Collinear points are kept so that exactly tied maximisers stay visible.
    """
    hull = []
    for i in range(len(x)):
        xi, fi = x[i], f[i]
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (fi - f[a]) - (f[b] - f[a]) * (xi - x[a])
            if cross < 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=np.int64)


def _hull_windows(x, f, s, cap=16):
    """Candidate windows (as padded index arrays) for the 1D sup at slopes s.

    A window spans hull vertices k_lo - 1 .. k_hi + 1 around the maximiser.
    Runs of exactly collinear vertices (ties such as |x| at slope 1) can make
    it very wide; such windows are pruned to the near-maximal entries, ordered
    by the tie-break (smallest |x|, then index), and cut at ``cap``.
    """
    hull = lower_hull(x, f)
    if hull.size == 1:
        return np.broadcast_to(hull, (s.size, 1)).copy()
    slopes = np.diff(f[hull]) / np.diff(x[hull])
    k_lo = np.searchsorted(slopes, s, side="left")
    k_hi = np.searchsorted(slopes, s, side="right")
    lo = np.maximum(k_lo - 1, 0)
    hi = np.minimum(k_hi + 1, hull.size - 1)
    wide = (hi - lo + 1) > cap
    width = int(np.minimum(hi - lo, cap - 1).max()) + 1
    offs = np.arange(width)
    pos = np.minimum(lo[:, None] + offs[None, :], hi[:, None])
    out = hull[pos]
    for q in np.flatnonzero(wide):
        cand = hull[lo[q]:hi[q] + 1]
        v = x[cand] * s[q] - f[cand]
        vmax = v.max()
        tol = 64 * np.finfo(float).eps * max(abs(vmax), np.abs(x[cand] * s[q]).max(), np.abs(f[cand]).max())
        near = cand[v >= vmax - tol]
        near = near[np.lexsort((near, np.abs(x[near])))][:width]
        out[q] = near[np.minimum(offs, near.size - 1)]
    return out


class Envelope1D:
    """Upper envelope s -> max_i (x_i * s - f_i) of finitely many lines.

    The lower hull of (x, f) is built once; every query then costs a binary
    search plus a three-candidate max. Used where many scattered queries hit
    one 1D function (truncated biconjugates).
    """

    def __init__(self, x, f):
        order = np.argsort(x, kind="stable")
        self.x = np.asarray(x, dtype=float)[order]
        self.f = np.asarray(f, dtype=float)[order]
        if self.x.size == 0:
            raise ValueError("empty envelope")
        self.hull = lower_hull(self.x, self.f)
        hx, hf = self.x[self.hull], self.f[self.hull]
        self._hx, self._hf = hx, hf
        self._slopes = np.diff(hf) / np.diff(hx) if hx.size > 1 else np.empty(0)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        k = np.searchsorted(self._slopes, flat, side="left")
        best = np.full(flat.shape, -np.inf)
        for off in (-1, 0, 1):
            kk = np.clip(k + off, 0, self._hx.size - 1)
            best = np.maximum(best, self._hx[kk] * flat - self._hf[kk])
        return best.reshape(s.shape)

    def argmax_slope(self, s):
        """The maximising x (a subgradient of the envelope) at each query."""
        s = np.asarray(s, dtype=float).ravel()
        k = np.searchsorted(self._slopes, s, side="left")
        return self._hx[np.clip(k, 0, self._hx.size - 1)]


def hull_transform_1d(x, f, s):
    """Values of max_i (x_i * s - f_i) for x sorted; see :class:`Envelope1D`."""
    return Envelope1D(x, f)(s)


def _axis_stage(xaxis, g, gfin, s):
    """One separable stage along the last axis of ``g``.

    ``g`` has shape (R, n); returns stage values (R, Q) and windows
    (R, Q, L) of candidate indices along the axis, padded by repetition.
    Rows without finite entries get value -inf and window 0.
    """
    R, n = g.shape
    Q = s.size
    vals = np.full((R, Q), -np.inf)
    wins = []
    width = 1
    for r in range(R):
        idx = np.flatnonzero(gfin[r])
        if idx.size == 0:
            wins.append(None)
            continue
        w = idx[_hull_windows(xaxis[idx], g[r, idx], s)]
        v = xaxis[w] * s[:, None] - g[r][w]
        vals[r] = v.max(axis=1)
        wins.append(w)
        width = max(width, w.shape[1])
    out = np.zeros((R, Q, width), dtype=np.int64)
    for r, w in enumerate(wins):
        if w is None:
            continue
        out[r, :, : w.shape[1]] = w
        out[r, :, w.shape[1]:] = w[:, -1:]
    return vals, out


def _refine(axes, values, finite, node_norms, windows, zts, qflat, shape):
    """Exact maximum and tie-broken argmax over the window products of a block."""
    m = len(axes)
    nq = qflat[0].size
    combos = None
    for d in range(m):
        wd = windows[d]
        # index windows[d] by previously chosen primal indices and the
        # dual indices from d onwards
        if d == 0:
            combos = wd[tuple(qflat)].reshape(nq, -1, 1)             # (nq, L, 1)
        else:
            C = combos.shape[1]
            key = tuple(combos[:, :, e] for e in range(d)) + tuple(
                np.broadcast_to(qflat[e][:, None], (nq, C)) for e in range(d, m))
            sel = wd[key]                                   # (nq, C, L)
            L = sel.shape[-1]
            prev_rep = np.repeat(combos, L, axis=1)         # (nq, C*L, d)
            combos = np.concatenate([prev_rep, sel.reshape(nq, C * L, 1)], axis=2)

    coords = [np.asarray(axes[d], float)[combos[:, :, d]] for d in range(m)]
    ztq = [zts[d][qflat[d]][:, None] for d in range(m)]
    flat_idx = np.ravel_multi_index(tuple(combos[:, :, d] for d in range(m)), shape)
    fv = np.where(finite.ravel()[flat_idx], values.ravel()[flat_idx], np.inf)
    vals = _inner(coords, ztq) - fv
    vmax = vals.max(axis=1)
    norms = node_norms[flat_idx]
    tied = vals == vmax[:, None]
    # smallest norm, then smallest flat index
    norm_key = np.where(tied, norms, np.inf)
    best_norm = norm_key.min(axis=1)
    idx_key = np.where(tied & (norm_key == best_norm[:, None]), flat_idx, np.iinfo(np.int64).max)
    return vmax, idx_key.min(axis=1)


def fast_transform(axes, values, finite, dual_axes, weights):
    """Separable hull-based conjugate, bit-identical to the brute force path.

    Same signature and return values as :func:`brute_force_transform`.
    """
    weights = np.asarray(weights, dtype=float)
    m = len(axes)
    if not finite.any():
        raise ValueError("no finite primal node")
    shape = tuple(len(a) for a in axes)
    dshape = tuple(len(a) for a in dual_axes)
    zts = [weights[d] * np.asarray(dual_axes[d], dtype=float) for d in range(m)]

    # Stage along the last axis first. After processing axis d the working
    # array has shape (n_0..n_{d-1}, q_d..q_{m-1}).
    g = np.where(finite, -values, -np.inf)   # we maximise <x,z> - f = <x,z> + g
    windows = [None] * m
    for d in range(m - 1, -1, -1):
        lead = shape[:d]
        trail = dshape[d + 1:]
        # bring axis d last: current layout (lead, n_d, trail)
        work = np.moveaxis(g, d, -1)                      # (lead, trail, n_d)
        flat = work.reshape(-1, shape[d])
        fin = np.isfinite(flat)
        vals, win = _axis_stage(np.asarray(axes[d], float), -np.where(fin, flat, 0.0), fin, zts[d])
        vals = vals.reshape(lead + trail + (dshape[d],))
        win = win.reshape(lead + trail + (dshape[d], win.shape[-1]))
        g = np.moveaxis(vals, -1, d)                       # (lead, q_d, trail)
        windows[d] = np.moveaxis(win, -2, d)               # (lead, q_d, trail, L)

    # Candidate refinement: enumerate window products and evaluate the
    # canonical expression, in blocks of dual nodes to bound memory.
    nq = int(np.prod(dshape))
    width = int(np.prod([w.shape[-1] for w in windows]))
    block = max(1, _BLOCK_ELEMENTS // max(width, 1))
    vmax = np.empty(nq)
    arg = np.empty(nq, dtype=np.int64)
    node_norms = _node_norms(axes, weights).ravel()
    for s0 in range(0, nq, block):
        qflat = np.unravel_index(np.arange(s0, min(s0 + block, nq)), dshape)
        vmax[s0:s0 + block], arg[s0:s0 + block] = _refine(
            axes, values, finite, node_norms, windows, zts, qflat, shape)
    return vmax.reshape(dshape), arg.reshape(dshape)

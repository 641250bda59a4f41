"""Config-driven experiment runner.

Verbs: ``solve``, ``verify``, ``conjugate-table``, ``bv-demo``, ``list-catalog``.
Exit codes: 0 ok, 1 verification failed, 2 infeasible or missing artifacts,
3 not converged, 64 usage or configuration error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import svg
from .approximation import (DEFAULT_RESOLUTION, DELTA_RULES, MU_RULES, ApproximationSchedule,
                            build_approximant, default_pair)
from .convex_core import CATALOG_KINDS, catalog, recession, tensor_dim
from .discrete_problem import ConstraintSpec, Field, GradientField, GridDomain, JumpField
from .legendre import Envelope1D
from .errors import InfeasibleConstraint, InfeasibleStart, UsageError, VariDualError
from .solver import SolveConfig, ekeland_schedule, write_schedule_csv
from .verification import (DEFAULT_THRESHOLDS, bv_representation_check, certify,
                           divergence_residual, duality_gap, el_inequality_test,
                           equiintegrability_profile, integrability_report)

EXIT_OK, EXIT_FAIL, EXIT_INFEASIBLE, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2, 3, 64

PRESETS = {
    "zero": [0.0],
    "identity": [0.0, 1.0],
    "parabola_obstacle": [-0.5, 4.0, -4.0],     # 0.5 - 4 (x - 0.5)^2
}
BV_PRESETS = {
    "step": {"jumps": [[0.5, 1.0]], "ac_slope": 0.0},
    "affine": {"jumps": [], "ac_slope": 1.0},
    "two_jumps": {"jumps": [[0.3, 0.5], [0.7, -0.25]], "ac_slope": 0.0},
}

_SCHEMA = {
    "domain": {"n": int, "k": int, "h": float, "inner_extent": (int, list), "collar_width": int},
    "integrand": {"kind": str, "params": dict},
    "boundary": {"preset": str, "coefficients": list},
    "constraint": {"kind": str, "preset": str, "coefficients": list},
    "schedule": {"j_start": int, "j_end": int, "delta_rule": str, "mu_rule": str,
                 "quadrature_order": int},
    "solver": {"max_inner_iters": int, "grad_tol": float, "armijo_c": float, "backtrack": float,
               "init_step": str, "seed": int, "warm_start": bool, "max_backtracks": int},
    "approximation": {"primal_half_width": float, "primal_spacing": float,
                      "dual_spacing": float, "cache_half_width": float},
    "verification": {"n_dirs": int, "n_test": int, "seed": int, "thresholds": dict,
                     "equi_thresholds": list},
    "outputs": {"csv_dir": str, "svg": bool, "dump_fields": bool},
    "table": {"xi_min": float, "xi_max": float, "xi_count": int, "j": list},
    "bv": {"preset": str, "jumps": list, "ac_slope": float, "eps": list, "h": list},
}
_REQUIRED = [("domain", "n"), ("domain", "k"), ("domain", "h"), ("domain", "inner_extent"),
             ("integrand", "kind")]


class ConfigError(UsageError):
    """All problems found in a configuration, each prefixed by its key path."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def to_toml(self):
        return tomli_w.dumps(self.data)

    def digest(self):
        return hashlib.sha256(self.to_toml().encode()).hexdigest()

    # -- builders ----------------------------------------------------------------
    def domain(self):
        d = self.data["domain"]
        return GridDomain(d["n"], d["k"], d["h"], d["inner_extent"], d["collar_width"])

    def integrand(self):
        i = self.data["integrand"]
        return catalog(i["kind"], i["params"], m=tensor_dim(self.data["domain"]["n"],
                                                            self.data["domain"]["k"]))

    def schedule(self):
        return ApproximationSchedule(**self.data["schedule"])

    def solve_config(self):
        return SolveConfig(**self.data["solver"])

    def resolution(self, m):
        a = self.data["approximation"]
        return (a["primal_half_width"], a["primal_spacing"], a["dual_spacing"])

    def boundary(self, dom):
        return dom.field(_poly(self.data["boundary"]["coefficients"], dom.n))

    def constraint(self, dom, g):
        c = self.data["constraint"]
        if c["kind"] == "none":
            return ConstraintSpec()
        psi = dom.field(_poly(c["coefficients"], dom.n))
        return ConstraintSpec.obstacle(psi, g)


def _poly(coefs, n):
    """Callable for a polynomial: 1D coefficient list, 2D nested c[i][j] x^i y^j."""
    if n == 1:
        c = [float(v) for v in coefs]
        return lambda x: sum(cf * x ** p for p, cf in enumerate(c)) + 0 * x
    if coefs and not isinstance(coefs[0], list):
        c = [float(v) for v in coefs]
        return lambda x, y: sum(cf * x ** p for p, cf in enumerate(c)) + 0 * x * y
    return lambda x, y: sum(float(cf) * x ** i * y ** j for i, row in enumerate(coefs)
                            for j, cf in enumerate(row)) + 0 * x * y


def _poly_degree(coefs):
    if coefs and isinstance(coefs[0], list):
        return max((i + j for i, row in enumerate(coefs) for j, v in enumerate(row) if v != 0),
                   default=0)
    return max((p for p, v in enumerate(coefs) if v != 0), default=0)


def _type_ok(v, t):
    if t is float:
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    if t is int:
        return isinstance(v, int) and not isinstance(v, bool)
    if isinstance(t, tuple):
        return any(_type_ok(v, x) for x in t)
    return isinstance(v, t)


def _defaults(domain):
    n = domain.get("n", 1) if isinstance(domain.get("n"), int) else 1
    k = domain.get("k", 1) if isinstance(domain.get("k"), int) else 1
    try:
        m = tensor_dim(n, k)
    except UsageError:
        m = 1
    half, hp, hd = DEFAULT_RESOLUTION.get(m, DEFAULT_RESOLUTION[1])
    sch = ApproximationSchedule.__dataclass_fields__
    sol = SolveConfig.__dataclass_fields__
    return {
        "domain": {"collar_width": k},
        "integrand": {"params": {}},
        "boundary": {},
        "constraint": {"kind": "none"},
        "schedule": {f: sch[f].default for f in sch},
        "solver": {f: sol[f].default for f in sol},
        "approximation": {"primal_half_width": half, "primal_spacing": hp, "dual_spacing": hd,
                          "cache_half_width": 0.0},
        "verification": {"n_dirs": 200, "n_test": 100, "seed": 0,
                         "thresholds": dict(DEFAULT_THRESHOLDS), "equi_thresholds": [1.0, 2.0, 5.0, 10.0]},
        "outputs": {"csv_dir": "out", "svg": False, "dump_fields": False},
        "table": {"xi_min": -2.0, "xi_max": 2.0, "xi_count": 41, "j": [2, 5, 20]},
        "bv": {"preset": "step", "eps": [0.1, 0.05, 0.025, 0.0125, 0.00625],
               "h": [1e-3, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5]},
    }


def parse_config(source):
    """Parse and validate a TOML config (path or text); raise ConfigError listing every problem."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and source.endswith(".toml")):
        text = Path(source).read_text()
    else:
        text = source
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"TOML syntax: {exc}"]) from None
    errors = []
    for sec, body in raw.items():
        if sec not in _SCHEMA:
            errors.append(f"unknown section at {sec}")
            continue
        if not isinstance(body, dict):
            errors.append(f"expected a table at {sec}")
            continue
        for key, val in body.items():
            if key not in _SCHEMA[sec]:
                errors.append(f"unknown key at {sec}.{key}")
            elif not _type_ok(val, _SCHEMA[sec][key]):
                errors.append(f"wrong type at {sec}.{key}")
    for sec, key in _REQUIRED:
        if key not in raw.get(sec, {}):
            errors.append(f"missing required key at {sec}.{key}")
    data = _defaults(raw.get("domain", {}) if isinstance(raw.get("domain"), dict) else {})
    for sec, body in raw.items():
        if sec in data and isinstance(body, dict):
            for key, val in body.items():
                if key in _SCHEMA[sec] and _type_ok(val, _SCHEMA[sec][key]):
                    if isinstance(val, dict) and isinstance(data[sec].get(key), dict):
                        data[sec][key] = {**data[sec][key], **val}
                    else:
                        data[sec][key] = val
    if not any(e.startswith(("missing required", "wrong type")) for e in errors):
        _validate(data, errors)
    if errors:
        raise ConfigError(errors)
    _normalise(data)
    return ExperimentConfig(data)


def _validate(data, errors):
    d = data["domain"]
    if d["n"] not in (1, 2):
        errors.append("n must be 1 or 2 at domain.n")
    if d["k"] not in (1, 2):
        errors.append("k must be 1 or 2 at domain.k")
    if not d["h"] > 0:
        errors.append("h must be positive at domain.h")
    if d["collar_width"] < d["k"]:
        errors.append("collar width must be >= k at domain.collar_width")
    ext = d["inner_extent"]
    if isinstance(ext, list) and (len(ext) != d["n"] or not all(isinstance(e, int) and e >= 2 for e in ext)):
        errors.append("inner_extent must list n integers >= 2 at domain.inner_extent")
    if isinstance(ext, int) and ext < 2:
        errors.append("inner_extent must be >= 2 at domain.inner_extent")
    kind = data["integrand"]["kind"]
    if kind not in CATALOG_KINDS or kind == "custom_sampled":
        errors.append(f"unknown integrand kind at integrand.kind ({kind!r})")
    else:
        try:
            catalog(kind, data["integrand"]["params"])
        except VariDualError as exc:
            errors.append(f"{exc} at integrand.params")
    for sec in ("boundary", "constraint"):
        body = data[sec]
        if sec == "constraint":
            if body["kind"] not in ("none", "obstacle"):
                errors.append("constraint kind must be 'none' or 'obstacle' at constraint.kind")
                continue
            if body["kind"] == "none":
                if "preset" in body or "coefficients" in body:
                    errors.append("obstacle expression given without kind = 'obstacle' at constraint")
                continue
        has_p, has_c = "preset" in body, "coefficients" in body
        if sec == "boundary" and not (has_p or has_c):
            body["preset"] = "zero"
            continue
        if has_p == has_c:
            errors.append(f"exactly one of preset or coefficients required at {sec}")
            continue
        if has_p and body["preset"] not in PRESETS:
            errors.append(f"unknown preset at {sec}.preset ({body['preset']!r})")
        if has_c:
            try:
                deg = _poly_degree(body["coefficients"])
                float(_poly(body["coefficients"], d["n"] if d["n"] in (1, 2) else 1)
                      (*([np.float64(0.5)] * (d["n"] if d["n"] in (1, 2) else 1))))
            except (TypeError, ValueError):
                errors.append(f"coefficients must be numbers at {sec}.coefficients")
                continue
            if deg > 4:
                errors.append(f"polynomial degree {deg} > 4 at {sec}.coefficients")
    s = data["schedule"]
    if s["delta_rule"] not in DELTA_RULES:
        errors.append(f"unknown delta rule at schedule.delta_rule ({s['delta_rule']!r})")
    if s["mu_rule"] not in MU_RULES:
        errors.append(f"unknown mu rule at schedule.mu_rule ({s['mu_rule']!r})")
    if s["delta_rule"] in DELTA_RULES and s["mu_rule"] in MU_RULES:
        try:
            ApproximationSchedule(**s)
        except UsageError as exc:
            for msg in str(exc).split("; "):
                key = "j_start" if "j_start" in msg else "j_end" if "j_end" in msg else \
                    "quadrature_order" if "quadrature" in msg else ""
                errors.append(f"{msg} at schedule{'.' + key if key else ''}")
    try:
        SolveConfig(**data["solver"])
    except UsageError as exc:
        errors.extend(f"{msg} at solver" for msg in str(exc).split("; "))
    a = data["approximation"]
    for key in ("primal_half_width", "primal_spacing", "dual_spacing"):
        if not a[key] > 0:
            errors.append(f"must be positive at approximation.{key}")
    v = data["verification"]
    for key in v["thresholds"]:
        if key not in DEFAULT_THRESHOLDS:
            errors.append(f"unknown key at verification.thresholds.{key}")
    if v["n_dirs"] < 1 or v["n_test"] < 1:
        errors.append("n_dirs and n_test must be positive at verification")
    b = data["bv"]
    if b["preset"] not in BV_PRESETS and "jumps" not in b:
        errors.append(f"unknown preset at bv.preset ({b['preset']!r})")
    if len(b["eps"]) != len(b["h"]) or not b["eps"]:
        errors.append("eps and h schedules must have equal nonzero length at bv")


def _normalise(data):
    """Fill derived fields so that serialise -> parse is a fixed point."""
    for sec in ("boundary", "constraint"):
        body = data[sec]
        if "preset" in body:
            body["coefficients"] = [float(c) for c in PRESETS[body.pop("preset")]]
        elif "coefficients" in body:
            c = body["coefficients"]
            body["coefficients"] = ([[float(v) for v in row] for row in c]
                                    if c and isinstance(c[0], list) else [float(v) for v in c])
    d = data["domain"]
    d["h"] = float(d["h"])
    b = data["bv"]
    if "jumps" not in b:
        pre = BV_PRESETS[b["preset"]]
        b["jumps"] = copy.deepcopy(pre["jumps"])
        b.setdefault("ac_slope", pre["ac_slope"])
    b.setdefault("ac_slope", 0.0)
    b["preset"] = b["preset"] if b["preset"] in BV_PRESETS else "custom"
    b["jumps"] = [[float(x), float(s)] for x, s in b["jumps"]]
    b["ac_slope"] = float(b["ac_slope"])
    b["eps"] = [float(x) for x in b["eps"]]
    b["h"] = [float(x) for x in b["h"]]
    for sec, body in data.items():
        for key, val in body.items():
            if _SCHEMA[sec].get(key) is float:
                body[key] = float(val)
    v = data["verification"]
    v["thresholds"] = {k: float(x) for k, x in sorted(v["thresholds"].items())}
    v["equi_thresholds"] = [float(t) for t in v["equi_thresholds"]]
    data["table"]["j"] = [int(j) for j in data["table"]["j"]]


# -- runners ------------------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, float) and math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def _setup(cfg):
    dom = cfg.domain()
    spec = cfg.integrand()
    g = cfg.boundary(dom)
    c = cfg.constraint(dom, g)
    return dom, spec, g, c


def _cache_box(cfg, dom, g, c):
    from .solver import default_cache_box
    half = cfg["approximation"]["cache_half_width"]
    if half > 0:
        return [(-half, half)] * dom.m
    return default_cache_box(dom, g, c)


def _fields_svg(dom, u, g, c, title):
    if dom.n == 1:
        x = dom.coords[0]
        series = [("u", x, u.values), ("g", x, g.values)]
        if c.kind == "obstacle":
            series.append(("psi", x, c.psi.values))
        return svg.line_plot(series, title)
    return svg.cell_map(u.values, title)


def _sigma_svg(sigma, title):
    dom = sigma.dom
    if dom.n == 1:
        return svg.line_plot([(f"sigma[{c}]", dom.stencil_coords[:, 0], sigma.tensors[:, c])
                              for c in range(dom.m)], title)
    full = np.zeros(dom.base_shape)
    full[dom.stencil_mask] = sigma.norms()
    return svg.cell_map(full, title)


def run_solve(cfg, out, dump_fields=None, emit_svg=None, log=None):
    """Run the j-schedule; write schedule.csv, final fields and solve.json."""
    log = log or sys.stderr
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dump = cfg["outputs"]["dump_fields"] if dump_fields is None else dump_fields
    want_svg = cfg["outputs"]["svg"] if emit_svg is None else emit_svg
    try:
        dom, spec, g, c = _setup(cfg)
    except InfeasibleConstraint as exc:
        print(f"infeasible: {exc}", file=log)
        return EXIT_INFEASIBLE
    sch = cfg.schedule()
    sol = cfg.solve_config()
    pair = default_pair(spec, sch.j_end, cfg.resolution(dom.m))
    try:
        reports = ekeland_schedule(spec, pair, sch, dom, g, c, sol,
                                   cache_box=_cache_box(cfg, dom, g, c), halt_on_failure=True)
    except InfeasibleStart as exc:
        print(f"infeasible: {exc}", file=log)
        return EXIT_INFEASIBLE
    write_schedule_csv(reports, out / "schedule.csv")
    last = reports[-1]
    last.u_j.to_csv(out / "u_final.csv")
    last.sigma_j.to_csv(out / "sigma_final.csv")
    if dump:
        for r in reports:
            r.u_j.to_csv(out / f"u_j{r.j:02d}.csv")
            r.sigma_j.to_csv(out / f"sigma_j{r.j:02d}.csv")
    converged = all(r.converged for r in reports) and len(reports) == len(sch.indices())
    meta = {"config_sha256": cfg.digest(), "j": [r.j for r in reports],
            "final_j": last.j, "converged": [bool(r.converged) for r in reports],
            "monotone": [bool(r.monotone_ok) for r in reports],
            "f_j": [r.f_j for r in reports],
            "gap": [r.gap for r in reports],
            "fenchel_max": [r.fenchel_max for r in reports]}
    _write_json(out / "solve.json", _jsonable(meta))
    if want_svg:
        svg.write(out / "fields.svg", _fields_svg(dom, last.u_j, g, c, f"u_{last.j}"))
        svg.write(out / "sigma.svg", _sigma_svg(last.sigma_j, f"sigma_{last.j}"))
        svg.write(out / "f_j.svg", svg.line_plot([("f_j", [r.j for r in reports],
                                                   [r.f_j for r in reports])], "f_j", markers=True))
    if not converged:
        print(f"not converged at j={last.j} (residual {last.residual:.3g})", file=log)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _jsonable(x):
    from .verification import _jsonable as conv
    return conv(x)


def run_verify(cfg, out, emit_svg=None, log=None, err=None):
    """Certify the final iterate of a solve run found in ``out``."""
    log = log or sys.stdout
    err = err or sys.stderr
    out = Path(out)
    want_svg = cfg["outputs"]["svg"] if emit_svg is None else emit_svg
    needed = [out / "solve.json", out / "u_final.csv", out / "sigma_final.csv"]
    missing = [p.name for p in needed if not p.exists()]
    if missing:
        print(f"missing solve artifacts: {', '.join(missing)}", file=err)
        return EXIT_INFEASIBLE
    try:
        dom, spec, g, c = _setup(cfg)
    except InfeasibleConstraint as exc:
        print(f"infeasible: {exc}", file=err)
        return EXIT_INFEASIBLE
    meta = json.loads((out / "solve.json").read_text())
    j = int(meta["final_j"])
    try:
        u = Field.from_csv(out / "u_final.csv", dom)
        sigma = GradientField.from_csv(out / "sigma_final.csv", dom)
    except (UsageError, ValueError, IndexError) as exc:
        print(f"unreadable solve artifacts: {exc}", file=err)
        return EXIT_INFEASIBLE
    sch = cfg.schedule()
    pair = default_pair(spec, sch.j_end, cfg.resolution(dom.m))
    a = build_approximant(pair, j, sch, _cache_box(cfg, dom, g, c))
    v = cfg["verification"]
    gap = duality_gap(pair, a, u, sigma)
    el = el_inequality_test(u, sigma, c, g, v["n_dirs"], v["seed"])
    dv = divergence_residual(sigma, dom, v["n_test"], v["seed"])
    integ = integrability_report(pair, spec, u, sigma)
    sigmas, labels = [], []
    for jj in meta["j"]:
        p = out / f"sigma_j{jj:02d}.csv"
        if p.exists():
            sigmas.append(GradientField.from_csv(p, dom))
            labels.append(jj)
    if not sigmas:
        sigmas, labels = [sigma], [j]
    th = v["thresholds"]
    equi = equiintegrability_profile(sigmas, v["equi_thresholds"] + [th.get("equi_T", 10.0)],
                                     tol=th.get("equi_tol"), labels=labels)
    cert = certify(gap, el, dv, integ, equi, obstacle=c.kind == "obstacle", thresholds=th)
    (out / "certificate.json").write_text(cert.to_json())
    equi.to_csv(out / "equi_profile.csv")
    if want_svg:
        svg.write(out / "duality_gap.svg", svg.histogram(gap.gaps, 20, "duality gap per node"))
    print(cert.summary(), file=log)
    return EXIT_OK if cert.passed else EXIT_FAIL


def run_conjugate_table(cfg, out, log=None):
    """CSV of xi, F, F*, F**, F^inf and F_j for the configured j (1D integrands)."""
    log = log or sys.stderr
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.integrand()
    if spec.m != 1:
        print("conjugate-table needs a 1D integrand (n = 1)", file=log)
        return EXIT_USAGE
    t = cfg["table"]
    sch = cfg.schedule()
    js = t["j"]
    bad = [j for j in js if not sch.j_start <= j <= sch.j_end]
    if bad:
        print(f"table j values {bad} outside the schedule", file=log)
        return EXIT_USAGE
    xs = np.round(np.linspace(t["xi_min"], t["xi_max"], t["xi_count"]), 12)
    pair = default_pair(spec, max(js), cfg.resolution(1))
    fv = spec.values(xs[:, None])
    d = pair.dual
    fin = d.finite.ravel()
    # F* from the dual sample; nodes whose sup sits on the primal box face
    # are truncation artifacts and reported as +inf
    zax = d.axes[0]
    near = np.clip(np.searchsorted(zax, xs), 1, zax.size - 1)
    near = np.where(np.abs(zax[near - 1] - xs) <= np.abs(zax[near] - xs), near - 1, near)
    ok = pair.trusted.ravel()[near] & fin[near]
    fstar = np.where(ok, np.interp(xs, zax, np.where(fin, d.values.ravel(), 0.0)), np.inf)
    fbi = Envelope1D(d.axes[0][fin], d.values.ravel()[fin])(xs)
    rec = [float(recession(spec, [x])) for x in xs]
    half = max(abs(t["xi_min"]), abs(t["xi_max"])) + 1.0
    cols = []
    for j in js:
        a = build_approximant(pair, j, sch, [(-half, half)])
        cols.append(a.value(xs[:, None]))
    rows = []
    for i, x in enumerate(xs):
        rows.append([_fmt(float(x)), _fmt(float(fv[i])), _fmt(float(fstar[i])), _fmt(float(fbi[i])),
                     _fmt(rec[i])] + [_fmt(float(col[i])) for col in cols])
    _write_csv(out / "conjugate_table.csv", ["xi", "F", "F_star", "F_bistar", "F_rec"]
               + [f"F_{j}" for j in js], rows)
    if cfg["outputs"]["svg"]:
        series = [("F", xs, fv)] + [(f"F_{j}", xs, col) for j, col in zip(js, cols)]
        svg.write(out / "conjugate_table.svg", svg.line_plot(series, f"{spec.kind}: F and F_j"))
    return EXIT_OK


def run_bv_demo(cfg, out, log=None):
    """Mollified-recovery energies against the representation formula."""
    log = log or sys.stderr
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.integrand()
    if spec.m != 1:
        print("bv-demo needs n = 1", file=log)
        return EXIT_USAGE
    b = cfg["bv"]
    d = cfg["domain"]
    L = d["inner_extent"] * d["h"] if isinstance(d["inner_extent"], int) else d["inner_extent"][0] * d["h"]
    h0 = b["h"][0]
    dom = GridDomain(1, d["k"], h0, int(round(L / h0)), d["collar_width"])
    ac = dom.field(lambda x: b["ac_slope"] + 0 * x)
    uj = JumpField(ac, [tuple(jp) for jp in b["jumps"]])
    table = bv_representation_check(uj, spec, b["eps"], b["h"])
    table.to_csv(out / "bv_table.csv")
    if cfg["outputs"]["svg"]:
        eps = [r["eps"] for r in table.rows]
        series = [("energy", eps, [r["energy"] for r in table.rows])]
        if not table.infinite_target:
            series.append(("target", eps, [table.target] * len(eps)))
        svg.write(out / "bv.svg", svg.line_plot(series, "mollified recovery energy vs eps", markers=True))
    if table.infinite_target:
        print("+inf target: recession is infinite on a jump direction", file=log)
        return EXIT_OK
    return EXIT_OK if table.passed else EXIT_FAIL


def list_catalog(log=None):
    log = log or sys.stdout
    rows = {
        "quadratic": ("|x|^2 / 2", "superlinear (H1)", "-"),
        "p_power": ("|x|^p / p", "superlinear (H1)", "p > 1"),
        "minimal_surface": ("sqrt(1 + |x|^2)", "demi-coercive (H2)", "-"),
        "log_barrier": ("-log(1 - |x|^2 / R^2)", "superlinear (H1)", "radius R (default 1)"),
        "abs_value": ("|x|", "demi-coercive (H2)", "-"),
        "custom_sampled": ("grid sample (library use only)", "-", "sample"),
    }
    for k in CATALOG_KINDS:
        f, coer, par = rows[k]
        print(f"{k:16s} {f:26s} {coer:20s} params: {par}", file=log)
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parser():
    p = _Parser(prog="varidual", description=__doc__.splitlines()[0])
    p.add_argument("verb", choices=["solve", "verify", "conjugate-table", "bv-demo", "list-catalog"])
    p.add_argument("--config", action="append", default=[], metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--dump-fields", action="store_true", default=None)
    p.add_argument("--svg", action="store_true", default=None)
    return p


def _run_one(verb, path, out, args):
    try:
        cfg = parse_config(Path(path))
    except ConfigError as exc:
        for e in exc.errors:
            print(f"{path}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.svg:
        cfg.data["outputs"]["svg"] = True
    out = Path(out or cfg["outputs"]["csv_dir"])
    try:
        if verb == "solve":
            return run_solve(cfg, out, dump_fields=args.dump_fields)
        if verb == "verify":
            return run_verify(cfg, out)
        if verb == "conjugate-table":
            return run_conjugate_table(cfg, out)
        return run_bv_demo(cfg, out)
    except UsageError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.verb == "list-catalog":
        return list_catalog()
    if not args.config:
        print("varidual: --config is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        threads = int(os.environ.get("VARIDUAL_THREADS", "1"))
    except ValueError:
        print("VARIDUAL_THREADS must be an integer", file=sys.stderr)
        return EXIT_USAGE
    threads = max(1, threads)
    if len(args.config) == 1:
        return _run_one(args.verb, args.config[0], args.out, args)
    base = Path(args.out) if args.out else None
    jobs = [(args.verb, p, (base / Path(p).stem) if base else None, args) for p in args.config]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        codes = list(pool.map(lambda a: _run_one(*a), jobs))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())

"""Batch front end.

    kahlerflow <evolve|potential|geodesic|blu|tstark> --config run.json [--out path] [--format csv|json]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  Output
is written only after the whole run succeeds.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import complexification as cx
from . import geodesic as geo
from . import kahler as kh
from . import models as md
from .symcore import EvaluationError, ExprSyntaxError, GridSpec, parse

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

ComplexIn = Union[float, int, str, List[float]]


def to_complex(v: ComplexIn) -> complex:
    """Numbers, ``[re, im]`` pairs, or constant expressions such as ``"0.3 + 2*i"``."""
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list):
        if len(v) != 2:
            raise ValueError("complex pairs are [re, im]")
        return complex(float(v[0]), float(v[1]))
    c = parse(v).poly.constant_value()
    if c is None:
        raise ValueError(f"{v!r} is not a constant")
    return complex(c)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Strict):
    name: Literal["linear", "quartic", "separable", "tstark-torus", "tstark-su2"]
    tau0: ComplexIn = [0.0, 1.0]
    h: Optional[str] = None
    representation: Literal["defining", "adjoint"] = "defining"
    seed: int = 0

    @field_validator("tau0")
    @classmethod
    def _tau0(cls, v):
        if to_complex(v).imag <= 0:
            raise ValueError("tau0 needs a positive imaginary part")
        return v


class GridConfig(_Strict):
    lo: Union[float, List[float]] = -1.0
    hi: Union[float, List[float]] = 1.0
    count: Union[int, List[int]] = 11

    def spec(self, coords: Sequence[str]) -> GridSpec:
        k = len(coords)
        lo = self.lo if isinstance(self.lo, list) else [self.lo] * k
        hi = self.hi if isinstance(self.hi, list) else [self.hi] * k
        cnt = self.count if isinstance(self.count, list) else [self.count] * k
        if not (len(lo) == len(hi) == len(cnt) == k):
            raise ValueError(f"grid lists need {k} entries for coordinates {tuple(coords)}")
        return GridSpec(tuple(coords), tuple(zip(lo, hi)), tuple(cnt))


class Linspace(_Strict):
    start: ComplexIn
    stop: ComplexIn
    num: int = Field(ge=2)

    def values(self) -> List[complex]:
        a, b = to_complex(self.start), to_complex(self.stop)
        return [a + (b - a) * k / (self.num - 1) for k in range(self.num)]


class OutputConfig(_Strict):
    path: Optional[str] = None
    format: Literal["csv", "json"] = "json"


class RunConfig(_Strict):
    model: ModelConfig
    tau: Optional[ComplexIn] = None
    t: Optional[float] = None
    tau_sweep: Optional[Linspace] = None
    t_samples: List[float] = [0.05, 0.1, 0.15, 0.2]
    grid: GridConfig = GridConfig()
    order: int = Field(12, ge=0, le=60)
    fd_step: float = Field(1e-3, gt=0)
    dt: float = Field(1e-3, gt=0)
    ode_tol: float = Field(1e-10, gt=0)
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _check(self):
        if self.tau is not None:
            to_complex(self.tau)
        if self.tau_sweep is not None and (self.tau is not None or self.t is not None):
            raise ValueError("tau_sweep excludes tau and t")
        ts = self.t_samples
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("t_samples must be strictly increasing")
        return self

    def direction(self) -> complex:
        return to_complex(self.tau) if self.tau is not None else 1j

    def taus(self) -> List[complex]:
        """Complex times of the run: ``tau * t``, with ``tau`` defaulting to
        ``i`` when only ``t`` is given and ``t`` to 1 when only ``tau`` is."""
        if self.tau_sweep is not None:
            return self.tau_sweep.values()
        if self.tau is None and self.t is None:
            return [0j]
        return [self.direction() * (1.0 if self.t is None else self.t)]


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return RunConfig.model_validate(data)


# ---------------------------------------------------------------------------
# parallel map


def thread_count() -> int:
    env = os.environ.get("KAHLERFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError("KAHLERFLOW_THREADS must be an integer") from None
    return min(4, os.cpu_count() or 1)


def ordered_map(fn, items: Sequence) -> list:
    """``map`` preserving input order, over at most ``KAHLERFLOW_THREADS`` threads."""
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# model plumbing


def build_system(cfg: ModelConfig) -> kh.HamSystem:
    if cfg.name == "linear":
        return md.linear_system(to_complex(cfg.tau0))
    if cfg.name == "quartic":
        return md.quartic_system()
    if cfg.name == "separable":
        return md.separable_system(parse(cfg.h or "y^2/2"))
    if cfg.name == "tstark-torus":
        return md.tstark_torus_system(parse(cfg.h) if cfg.h else None)
    raise ValueError(f"model {cfg.name!r} has no Hamiltonian system; use the tstark command")


def _grid_and_points(cfg: RunConfig, coords):
    spec = cfg.grid.spec(coords)
    X, _ = kh.as_coord_array(coords, spec.points())
    return spec, X


def _require_finite(vals: np.ndarray, tau, X: np.ndarray, coords) -> None:
    bad = ~np.isfinite(vals).reshape(-1, X.shape[1]).all(axis=0)
    if np.any(bad):
        k = int(np.argmax(bad))
        at = ", ".join(f"{c}={X[a, k]:.17g}" for a, c in enumerate(coords))
        raise ArithmeticError(f"non-finite evolved chart at tau={complex(tau)} point ({at})")


def _cplx(z: complex) -> Dict[str, float]:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


# ---------------------------------------------------------------------------
# commands


def cmd_evolve(cfg: RunConfig) -> Dict[str, Any]:
    if cfg.model.name == "separable" and cfg.model.h is None:
        return _evolve_separable_numeric(cfg)
    system = build_system(cfg.model)
    es = kh.evolve_chart(system, cfg.order)
    _, X = _grid_and_points(cfg, system.coords)

    def run(tau):
        z = es.chart_values(tau, X)
        _require_finite(z, tau, X, system.coords)
        an = es.analyse(tau, X)
        inv_g = kh.inverse_g(es, tau, X) if system.n == 1 else None
        kappa = kh.potential_flow(system, cfg.order).kappa(tau, X)
        rows = []
        for k in range(X.shape[1]):
            r: Dict[str, Any] = {"tau": _cplx(tau)}
            r.update({c: float(X[a, k]) for a, c in enumerate(system.coords)})
            for i in range(system.n):
                r[f"z{i}"] = _cplx(z[i, k])
            if inv_g is not None:
                r["inv_g"] = float(inv_g[k])
            else:
                r["metric_eigenvalues"] = [float(v) for v in an.eigenvalues[k]]
            r["class"] = str(an.tags[k])
            r["kappa"] = float(kappa[k])
            rows.append(r)
        return rows

    records = [r for rows in ordered_map(run, cfg.taus()) for r in rows]
    counts = {c: sum(r["class"] == c for r in records) for c in kh.CLASSES}
    return {"records": records, "summary": {"class_counts": counts}}


def _evolve_separable_numeric(cfg: RunConfig) -> Dict[str, Any]:
    model = md.SeparableModel()
    _, X = _grid_and_points(cfg, ("x", "y"))
    records = []
    for tau in cfg.taus():
        z = model.chart(tau, X[0], X[1])
        tags = model.classify(tau, X[0], X[1])
        det = model.jacobian_det(tau, X[1])
        for k in range(X.shape[1]):
            records.append({"tau": _cplx(tau), "x": float(X[0, k]), "y": float(X[1, k]),
                            "z0": _cplx(z[k]), "inv_g": float(2 * det[k]), "class": str(tags[k])})
    counts = {c: sum(r["class"] == c for r in records) for c in kh.CLASSES}
    return {"records": records, "summary": {"class_counts": counts}}


def cmd_potential(cfg: RunConfig) -> Dict[str, Any]:
    if cfg.model.name == "tstark-su2":
        return _potential_tstark_su2(cfg)
    system = build_system(cfg.model)
    es = kh.evolve_chart(system, cfg.order)
    spec, X = _grid_and_points(cfg, system.coords)
    pf = kh.potential_flow(system, cfg.order)
    records, summary = [], {}
    worst_ref = 0.0
    ref = _potential_reference(cfg, system)
    for tau in cfg.taus():
        kap = pf.kappa(tau, X)
        check = kh.verify_potential(system, es, tau, X, step=cfg.fd_step)
        refv = ref(X, tau) if ref is not None else None
        for k in range(X.shape[1]):
            r: Dict[str, Any] = {"tau": _cplx(tau)}
            r.update({c: float(X[a, k]) for a, c in enumerate(system.coords)})
            r["kappa"] = float(kap[k])
            if refv is not None:
                r["kappa_reference"] = float(refv[k])
            records.append(r)
        if refv is not None:
            worst_ref = max(worst_ref, float(np.max(np.abs(kap - refv))))
        summary.setdefault("verify_potential", []).append(
            {"tau": _cplx(tau), "residual": check.residual, "skipped": check.skipped})
    if ref is not None:
        summary["max_reference_deviation"] = worst_ref
    return {"records": records, "summary": summary}


def _potential_reference(cfg: RunConfig, system):
    name = cfg.model.name
    if name == "linear":
        kap = md.linear(to_complex(cfg.model.tau0)).reference["kappa"]
        return lambda X, tau: kap(X, tau)
    if name == "quartic":
        kap = md.quartic().reference["kappa_it"]
        return lambda X, tau: kap(X, complex(tau).imag) if complex(tau).real == 0 else None
    if name == "tstark-torus" and cfg.model.h is None:
        return lambda X, tau: np.array([md.tstark_potential(np.array([yv]), tau) for yv in X[1]])
    return None


def _potential_tstark_su2(cfg: RunConfig) -> Dict[str, Any]:
    _, Y = _grid_and_points(cfg, ("y1", "y2", "y3"))
    records, worst = [], 0.0
    for tau in cfg.taus():
        for k in range(Y.shape[1]):
            yv = Y[:, k]
            res = md.tstark_potential_check(yv, tau)
            worst = max(worst, res)
            records.append({"tau": _cplx(tau), "y1": float(yv[0]), "y2": float(yv[1]), "y3": float(yv[2]),
                            "kappa": md.tstark_potential(yv, tau), "residual": res})
    return {"records": records, "summary": {"max_residual": worst}}


def cmd_geodesic(cfg: RunConfig) -> Dict[str, Any]:
    system = build_system(cfg.model)
    spec, X = _grid_and_points(cfg, system.coords)
    probe = geo.GeodesicProbe(system, tuple(cfg.t_samples), spec, cfg.dt, cfg.fd_step, cfg.order)

    def run(t):
        phi = geo.mabuchi_path_value(probe, t, X)
        rows = []
        res = geo.geodesic_residual(probe, t, X)
        for k in range(X.shape[1]):
            q = X[:, k:k + 1]
            rows.append({
                "t": t,
                "point": [float(v) for v in X[:, k]],
                "phi": float(phi[k]),
                "phidot_residual": geo.velocity_check(probe, t, q),
                "geodesic_residual": float(res.per_point[k]),
                "refined_residual": float(geo.geodesic_residual(probe, t, q, probe.dt / 2, probe.dx / 2, refine=False).residual),
            })
        return rows, res

    out = ordered_map(run, cfg.t_samples)
    records = [r for rows, _ in out for r in rows]
    table = [{"t": t, "residual": res.residual, "refined_residual": res.refined_residual, "order": res.order}
             for t, (_, res) in zip(cfg.t_samples, out)]
    return {"records": records, "summary": {"refinement": table}}


def cmd_blu(cfg: RunConfig) -> Dict[str, Any]:
    system = build_system(cfg.model)
    _, X = _grid_and_points(cfg, system.coords)
    if cfg.tau_sweep is not None:
        raise ValueError("the blu command takes tau and t, not a sweep")
    tau = cfg.direction()
    t = 0.05 if cfg.t is None else cfg.t
    es = kh.evolve_chart(system, cfg.order)

    def run(k):
        p = X[:, k]
        rec: Dict[str, Any] = {"point": [float(v) for v in p], "regime_tag": cx.regime_tag(system, tau, t, p, cfg.order)}
        try:
            q = cx.blu_forward(system, tau, t, p, cfg.order, cfg.ode_tol)
        except cx.ProjectionUndefined as exc:
            rec.update({"blu_image": None, "series_roundtrip_error": None, "diagnostic": str(exc)})
            return rec
        back = kh.chart_map(es, tau * t, q.reshape(-1, 1))[:, 0]
        rec.update({"blu_image": [float(v) for v in q], "series_roundtrip_error": float(np.max(np.abs(back - p)))})
        return rec

    records = ordered_map(run, range(X.shape[1]))
    errs = [r["series_roundtrip_error"] for r in records if r["series_roundtrip_error"] is not None]
    return {"records": records, "summary": {"tau": _cplx(tau), "t": t,
                                            "diagram_check": max(errs) if errs else None,
                                            "undefined_points": sum(r["blu_image"] is None for r in records)}}


def cmd_tstark(cfg: RunConfig) -> Dict[str, Any]:
    rng = np.random.default_rng(cfg.model.seed)
    N = min(cfg.order, 16)
    records, worst, worst_k = [], 0.0, 0.0
    if cfg.model.name == "tstark-su2":
        _, Y = _grid_and_points(cfg, ("y1", "y2", "y3"))
        xg = md.random_su2(rng)
        for tau in cfg.taus():
            for k in range(Y.shape[1]):
                yv = Y[:, k]
                a = md.tstark_closed_form(xg, yv, tau, cfg.model.representation)
                b = md.tstark_lie_series(xg, yv, tau, cfg.model.representation, N=N)
                kr = md.tstark_potential_check(yv, tau)
                worst, worst_k = max(worst, abs(a - b)), max(worst_k, kr)
                records.append({"tau": _cplx(tau), "y": [float(v) for v in yv], "closed_form": _cplx(a),
                                "lie_series": _cplx(b), "difference": abs(a - b), "kappa": md.tstark_potential(yv, tau),
                                "kappa_residual": kr, "class": md.tstark_classify(xg, yv, tau)})
    elif cfg.model.name == "tstark-torus":
        _, X = _grid_and_points(cfg, ("q", "y"))
        for tau in cfg.taus():
            for k in range(X.shape[1]):
                th, yv = X[:, k]
                a = md.torus_closed_form(th, yv, tau)
                b = md.torus_lie_series(th, yv, tau, N=N)
                kr = md.tstark_potential_check(np.array([yv]), tau)
                worst, worst_k = max(worst, abs(a - b)), max(worst_k, kr)
                records.append({"tau": _cplx(tau), "q": float(th), "y": float(yv), "closed_form": _cplx(a),
                                "lie_series": _cplx(b), "difference": abs(a - b), "kappa_residual": kr})
    else:
        raise ValueError("the tstark command needs model tstark-su2 or tstark-torus")
    return {"records": records, "summary": {"max_series_difference": worst, "max_kappa_residual": worst_k}}


COMMANDS = {
    "evolve": cmd_evolve,
    "potential": cmd_potential,
    "geodesic": cmd_geodesic,
    "blu": cmd_blu,
    "tstark": cmd_tstark,
}


# ---------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    return "%.17g" % v


def dump_json(obj: Any) -> str:
    """Deterministic JSON with 17 significant digits; non-finite floats are null."""

    def enc(o) -> str:
        if o is None:
            return "null"
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return _fmt(float(o)) if math.isfinite(o) else "null"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            return "{" + ", ".join(f"{json.dumps(str(k))}: {enc(v)}" for k, v in o.items()) + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            return "[" + ", ".join(enc(v) for v in o) + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj) + "\n"


def _flatten(rec: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for k, v in rec.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "_"))
        elif isinstance(v, (list, tuple)):
            for i, item in enumerate(v):
                out[f"{key}_{i}"] = item
        else:
            out[key] = v
    return out


def dump_csv(records: List[Dict[str, Any]]) -> str:
    rows = [_flatten(r) for r in records]
    cols: List[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (_fmt(r[c]) if isinstance(r[c], float) else r[c]) for c in cols])
    return buf.getvalue()


def _write(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kahlerflow", description="Complex-time Hamiltonian evolution of Kaehler structures")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=None, help="output file (default: config output.path or stdout)")
    ap.add_argument("--format", choices=("csv", "json"), default=None)
    return ap


_NUMERIC_ERRORS = (ArithmeticError, EvaluationError, np.linalg.LinAlgError)


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        cfg = load_config(args.config)
        fmt = args.format or cfg.output.format
        out = args.out or cfg.output.path
        if args.command != "tstark" and args.command != "potential" and cfg.model.name == "tstark-su2":
            raise ValueError("model tstark-su2 supports the tstark and potential commands only")
    except (OSError, json.JSONDecodeError, ValidationError, ValueError, ExprSyntaxError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = COMMANDS[args.command](cfg)
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    doc = {"command": args.command, "model": cfg.model.name, "order": cfg.order, **result}
    text = dump_json(doc) if fmt == "json" else dump_csv(result["records"])
    _write(text, out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

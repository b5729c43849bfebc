"""Experiment runner: every pipeline stage behind one subcommand.

Config files are JSON with a fixed nested layout (see ExperimentConfig);
outputs are CSV tables plus JSON reports, all written atomically into the
output directory, with a run manifest (report.json) naming every file,
the config hash, library versions, and timings.  Float formatting uses
repr, so identical configs produce bit-identical CSV bodies.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy

from . import __version__
from .acmodels import (ACResolutionModel, calabi_resolution, cy_residual,
                       decay_rate, flat_model, identity_deviation,
                       volume_excess_coefficient)
from .errors import (ConfigurationError, CscklabError, InsufficientDataError,
                     NumericalError, PositivityError)
from .fitting import fit_power_law
from .linear import defect_sweep, edge_growth_sweep, inverse_bound_sweep
from .outer import OuterModel, fubini_study_cap, manufactured_cap, truncated_cone
from .preglue import glue, neck_rate, positivity_threshold, sweep_rows
from .solver import (SolveConfig, cscK_sweep, error_rate_sweep,
                     predicted_constant, ricci_flat_verify, solve_cscK)
from .spectrum import gap_certificate, indicial_roots, quotient_sphere_spectrum

ENV_OUTDIR = "CSCKLAB_OUTDIR"
SCHEMA_VERSION = 1

OUTER_KINDS = ("fs", "manufactured", "truncated_cone")


# ---------------------------------------------------------------------------
# Config


@dataclass
class ExperimentConfig:
    n: int
    link: dict = field(default_factory=lambda: {"m": 1})
    model: dict = field(default_factory=lambda: {"a": 1.0})
    outer: dict = field(default_factory=lambda: {"kind": "fs", "mu": 2.0})
    lambdas: list = field(default_factory=list)
    delta: float = -1.0
    grid: dict | None = None
    solver: dict = field(default_factory=dict)
    output_dir: str = "out"

    _TOP_KEYS = ("n", "link", "model", "outer", "lambdas", "delta", "grid",
                 "solver", "output_dir")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config root must be a JSON object")
        unknown = set(data) - set(cls._TOP_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "n" not in data:
            raise ConfigurationError("config needs the complex dimension n")
        cfg = cls(n=int(data["n"]))
        for key in cls._TOP_KEYS[1:]:
            if key in data and data[key] is not None:
                setattr(cfg, key, data[key])
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if int(self.n) != self.n or self.n < 2:
            raise ConfigurationError("n must be an integer >= 2")
        m = self.link.get("m", 1)
        if int(m) != m or m < 1:
            raise ConfigurationError("link.m must be a positive integer")
        if float(self.model.get("a", 1.0)) < 0.0:
            raise ConfigurationError("model.a must be >= 0")
        kind = self.outer.get("kind", "fs")
        if kind not in OUTER_KINDS:
            raise ConfigurationError(
                f"outer.kind {kind!r} not one of {OUTER_KINDS}")
        if not isinstance(self.lambdas, list):
            raise ConfigurationError("lambdas must be a list")
        if self.grid is not None:
            missing = {"t_min", "t_max", "points"} - set(self.grid)
            if missing:
                raise ConfigurationError(f"grid needs keys {sorted(missing)}")
        bad = set(self.solver) - {"b_tilde", "max_iter", "tol"}
        if bad:
            raise ConfigurationError(f"unknown solver keys: {sorted(bad)}")

    def to_dict(self) -> dict:
        return {
            "n": self.n, "link": self.link, "model": self.model,
            "outer": self.outer, "lambdas": self.lambdas, "delta": self.delta,
            "grid": self.grid, "solver": self.solver,
            "output_dir": self.output_dir,
        }

    # -- constructed objects

    @property
    def m(self) -> int:
        return int(self.link.get("m", 1))

    @property
    def a(self) -> float:
        return float(self.model.get("a", 1.0))

    def grid_tuple(self):
        if self.grid is None:
            return None
        return (float(self.grid["t_min"]), float(self.grid["t_max"]),
                int(self.grid["points"]))

    def build_model(self) -> ACResolutionModel:
        if self.a == 0.0:
            return flat_model(self.n, m=self.m)
        return calabi_resolution(self.n, self.a, m=self.m)

    def build_outer(self) -> OuterModel:
        kind = self.outer.get("kind", "fs")
        mu = float(self.outer.get("mu", 2.0))
        grid = self.grid_tuple()
        if kind == "fs":
            out = fubini_study_cap(self.n, grid=grid, m=self.m)
            if abs(mu - out.mu) > 1e-12:
                raise ConfigurationError("fs outer has mu = 2 by construction")
            return out
        if kind == "truncated_cone":
            return truncated_cone(self.n, grid=grid, m=self.m, mu=mu)
        c = float(self.outer.get("c", 0.01))
        return manufactured_cap(self.n, mu, c, grid=grid, m=self.m)

    def solve_config(self) -> SolveConfig:
        # absent keys defer to SolveConfig's calibrated defaults
        kw: dict = {"delta": float(self.delta)}
        if "b_tilde" in self.solver:
            kw["b_tilde"] = float(self.solver["b_tilde"])
        if "max_iter" in self.solver:
            kw["max_iter"] = int(self.solver["max_iter"])
        if "tol" in self.solver:
            kw["tol_residual"] = float(self.solver["tol"])
        return SolveConfig(**kw)


# ---------------------------------------------------------------------------
# Output helpers


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return "nan"
    return repr(x)


def atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path: str, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    atomic_write(path, buf.getvalue())


def _plain(obj):
    """Recursively coerce report objects into JSON-serializable values."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if math.isnan(x) else x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    return obj


def write_json(path: str, payload: dict) -> None:
    atomic_write(path, json.dumps(_plain(payload), indent=2, sort_keys=True)
                 + "\n")


# ---------------------------------------------------------------------------
# Subcommands (each returns {filename: description})


def run_indicial(cfg: ExperimentConfig, outdir: str) -> dict:
    spectrum = quotient_sphere_spectrum(cfg.n, cfg.m)
    window = (2.0 - 2.0 * cfg.n, 2.0)
    ind = indicial_roots(spectrum, order=4, window=window)
    cert = gap_certificate(spectrum)
    payload = ind.to_json()
    payload["max_residual"] = ind.max_residual()
    payload["gap"] = {
        "ok": cert.ok, "margin": cert.margin, "window": list(cert.window),
        "allowed": list(cert.allowed), "blocking": list(cert.blocking),
    }
    write_json(os.path.join(outdir, "indicial.json"), payload)
    return {"indicial.json": "indicial roots and spectral gap"}


def run_model(cfg: ExperimentConfig, outdir: str) -> dict:
    model = cfg.build_model()
    t = model.profile.t
    u1, u2, _, _ = model.fn.ladder(t)
    gap = (model.gap_fn.u(t) if model.gap_fn is not None
           else np.zeros_like(t))
    write_csv(os.path.join(outdir, "model.csv"),
              ["t", "u", "u1", "u2", "gap"],
              zip(t, model.profile.u, u1, u2, gap))
    sc_sup, det_dev = cy_residual(model)
    meta = {
        "n": model.n, "a": model.a,
        "metric_rate": model.nu_fitted,
        "potential_gap_rate": model.potential_gap_rate,
        "identity_deviation": identity_deviation(model) if model.a > 0 else 0.0,
        "sc_sup": sc_sup, "det_deviation": det_dev,
        "volume_excess_coefficient":
            volume_excess_coefficient(cfg.n, model.a, cfg.m),
    }
    write_json(os.path.join(outdir, "model.json"), meta)
    return {"model.csv": "model profile", "model.json": "model diagnostics"}


def _sweep_csv(cfg: ExperimentConfig, outdir: str, model, outer) -> dict:
    report = error_rate_sweep(outer, model, cfg.lambdas, cfg.delta)
    fitted = math.nan if report.fit is None else report.fit.exponent
    write_csv(
        os.path.join(outdir, "sweep.csv"),
        ["lambda", "r_neck", "margin", "err_norm_A", "err_norm_B",
         "err_norm_C", "err_total", "dev_neck", "fit_exponent",
         "predicted_exponent"],
        [(r.lam, r.r_neck, r.margin, r.err_A, r.err_B, r.err_C, r.err_total,
          r.dev_neck, fitted, report.predicted_exponent)
         for r in report.rows],
    )
    return {"report": report, "files": {"sweep.csv": "error-rate sweep"}}


def run_preglue(cfg: ExperimentConfig, outdir: str) -> dict:
    model = cfg.build_model()
    outer = cfg.build_outer()
    threshold = positivity_threshold(model, outer)
    sw = _sweep_csv(cfg, outdir, model, outer)
    rows = sw["report"].rows
    neck = neck_rate(rows) if any(r.dev_neck > 0 for r in rows) else None
    write_json(os.path.join(outdir, "preglue.json"), {
        "lam0": threshold.lam0,
        "bracket": list(threshold.bracket),
        "all_positive": threshold.all_positive,
        "neck_slope": None if neck is None else neck.exponent,
        "neck_slope_predicted": 2.0 + outer.mu,
        "fit_exponent": (None if sw["report"].fit is None
                         else sw["report"].fit.exponent),
        "predicted_exponent": sw["report"].predicted_exponent,
    })
    files = dict(sw["files"])
    files["preglue.json"] = "positivity threshold and neck fit"
    return files


def run_linear(cfg: ExperimentConfig, outdir: str) -> dict:
    model = cfg.build_model()
    outer = cfg.build_outer()
    bounds = inverse_bound_sweep(model, outer, cfg.lambdas, [float(cfg.delta)])
    edges = edge_growth_sweep(model, outer, cfg.lambdas,
                              [float(cfg.delta), 0.0, 4.0 - 2.0 * cfg.n])
    write_csv(os.path.join(outdir, "inverse.csv"),
              ["lambda", "delta", "bound_estimate", "worst_probe_id"],
              [(r.lam, r.delta, r.bound, r.worst_probe)
               for r in bounds + edges])
    defects = defect_sweep(model, outer, cfg.lambdas, cfg.delta)
    write_csv(os.path.join(outdir, "defect.csv"),
              ["lambda", "delta", "b", "defect"],
              [(r.lam, r.delta, r.b, r.defect) for r in defects])
    return {"inverse.csv": "inverse bound estimates",
            "defect.csv": "approximate-inverse defects"}


def run_solve(cfg: ExperimentConfig, outdir: str) -> dict:
    if not cfg.lambdas:
        raise ConfigurationError("empty lambda list")
    model = cfg.build_model()
    outer = cfg.build_outer()
    lam = float(cfg.lambdas[0])
    rep = solve_cscK(outer, model, lam, cfg.solve_config())
    background = glue(model, outer, lam)
    ricci = ricci_flat_verify(rep, background)
    payload = {
        "lam": rep.lam, "delta": rep.delta, "iters": rep.iters,
        "sc_residual": rep.sc_residual,
        "achieved_constant": rep.achieved_constant,
        "phi_q": rep.phi_q, "ball_fraction": rep.ball_fraction,
        "contraction_max": rep.contraction_max, "converged": rep.converged,
        "far_sup": rep.far_sup, "rcond": rep.rcond, "label": rep.label,
        "iterations": [
            {"k": s.k, "residual": s.residual, "correction": s.correction,
             "ratio": s.ratio} for s in rep.iterations],
        "ricci_flat": {
            "applicable": ricci.applicable, "deviation": ricci.deviation,
            "limit": ricci.limit, "ok": ricci.ok},
    }
    if outer.is_constant_target:
        pred = predicted_constant(outer, model, lam)
        payload["predicted_constant"] = pred.value
        payload["kstar"] = pred.kstar
    write_json(os.path.join(outdir, "solve.json"), payload)
    return {"solve.json": "single solve report"}


def run_sweep(cfg: ExperimentConfig, outdir: str) -> dict:
    model = cfg.build_model()
    outer = cfg.build_outer()
    files = dict(_sweep_csv(cfg, outdir, model, outer)["files"])
    rows = cscK_sweep(outer, model, cfg.lambdas, cfg.solve_config())
    write_csv(
        os.path.join(outdir, "solve_sweep.csv"),
        ["lambda", "delta", "iters", "sc_residual", "achieved_const",
         "predicted_const", "phi_q", "ball_fraction", "contraction_max"],
        [(r.lam, r.delta, r.iters, r.sc_residual, r.achieved_const,
          r.predicted_const, r.phi_q, r.ball_fraction, r.contraction_max)
         for r in rows],
    )
    files["solve_sweep.csv"] = "solve sweep"
    lams = np.array([r.lam for r in rows])
    far = np.array([r.far_sup for r in rows])
    gaps = np.array([abs(r.achieved_const - r.predicted_const) for r in rows])
    payload: dict = {"lambdas": lams.tolist(), "far_sup": far.tolist()}
    # the far-field and constant-gap decays both need nonzero data: exact
    # scenarios (flat+flat) legitimately sit at zero, flagged instead of fit
    for key, vals in (("far_rate", far), ("constant_gap_rate", gaps)):
        try:
            payload[key] = fit_power_law(lams, vals).exponent
        except InsufficientDataError:
            payload[key] = None
    write_json(os.path.join(outdir, "solve_sweep.json"), payload)
    files["solve_sweep.json"] = "far-field and constant-gap decay fits"
    return files


_SUBCOMMANDS = {
    "indicial": run_indicial,
    "model": run_model,
    "preglue": run_preglue,
    "linear": run_linear,
    "solve": run_solve,
    "sweep": run_sweep,
}


# ---------------------------------------------------------------------------
# Entry point


def _load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def _config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(canon).hexdigest()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cscklab",
        description="Radial constant-scalar-curvature gluing experiments")
    parser.add_argument("subcommand", choices=sorted(_SUBCOMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--output-dir", default=None,
                        help=f"override config output_dir (and ${ENV_OUTDIR})")
    args = parser.parse_args(argv)
    started = time.monotonic()
    try:
        cfg = _load_config(args.config)
        outdir = (args.output_dir or os.environ.get(ENV_OUTDIR)
                  or cfg.output_dir)
        os.makedirs(outdir, exist_ok=True)
        files = _SUBCOMMANDS[args.subcommand](cfg, outdir)
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "subcommand": args.subcommand,
            "config_sha256": _config_hash(cfg),
            "config": cfg.to_dict(),
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "cscklab": __version__,
            },
            "timings": {"total_s": time.monotonic() - started},
            "outputs": files,
        }
        write_json(os.path.join(outdir, "report.json"), manifest)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, PositivityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if getattr(exc, "diagnostics", None):
            print(f"  diagnostics: {_plain(exc.diagnostics)}", file=sys.stderr)
        return 3
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

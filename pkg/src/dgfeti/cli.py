"""Experiment driver: presets, sweeps, CSV reporting.

Exit codes: 0 success, 2 non-convergence, 3 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import fetidp, oracle, problem
from .coeffield import CoefficientField, Inclusion
from .errors import ConfigurationError

CSV_FIELDS = ("preset", "nx", "H_over_h", "alpha_hat", "iterations",
              "cond_estimate", "final_rel_residual", "converged",
              "t_setup_s", "t_solve_s")

#: monolithic sizes above this skip the direct-solve cross-check
ORACLE_DOF_GUARD = 250_000


@dataclass
class ExperimentConfig:
    preset: str = "custom"
    nx: int = 4
    ny: int | None = None
    n: object = 32                # int, or one count per subdomain
    alpha_hat: float = 1.0
    background: float = 1.0
    inclusions: tuple = ()
    delta: float = 5.0
    tol: float = 1e-6
    max_it: int = 500
    oracle: bool = False
    out: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.ny is None:
            self.ny = self.nx
        if self.preset not in ("ex1", "ex2", "ex3", "custom"):
            raise ConfigurationError(f"unknown preset {self.preset!r}")
        for name in ("nx", "ny", "alpha_hat", "delta", "tol", "max_it"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if isinstance(self.n, (int, np.integer)):
            if self.n <= 0:
                raise ConfigurationError("n must be positive")
        elif any(v <= 0 for v in self.n):
            raise ConfigurationError("all per-subdomain n must be positive")


@dataclass(frozen=True)
class ReportRow:
    preset: str
    nx: int
    H_over_h: int
    alpha_hat: float
    iterations: int
    cond_estimate: float
    final_rel_residual: float
    converged: bool
    t_setup_s: float
    t_solve_s: float

    def as_record(self) -> dict:
        return {
            "preset": self.preset, "nx": self.nx, "H_over_h": self.H_over_h,
            "alpha_hat": f"{self.alpha_hat:.6g}",
            "iterations": self.iterations,
            "cond_estimate": f"{self.cond_estimate:.6g}",
            "final_rel_residual": f"{self.final_rel_residual:.6g}",
            "converged": int(self.converged),
            "t_setup_s": f"{self.t_setup_s:.3f}", "t_solve_s": f"{self.t_solve_s:.3f}",
        }


def preset_ex1(alpha_hat: float, n: int, nx: int = 4) -> CoefficientField:
    """Square inclusion one cell away from every edge of subdomain (1, 1)."""
    if nx < 2:
        raise ConfigurationError("ex1 needs at least a 2x2 partition")
    if n < 4:
        raise ConfigurationError(f"ex1 needs n >= 4 (inclusion would be empty), got {n}")
    H = 1.0 / nx
    h = H / n
    x0, y0 = H, H
    return CoefficientField(1.0, (
        Inclusion(x0 + h, y0 + h, x0 + H - h, y0 + H - h, alpha_hat),
    ))


def preset_ex2(n: int, nx: int = 4, value_a: float = 1e4,
               value_band: float = 1e2, value_inner: float = 1.0) -> CoefficientField:
    """Inclusions in two horizontally adjacent interior subdomains: one large
    blob crossing into the boundary layer, one subdomain whose layer band
    exceeds its interior value."""
    if nx < 4:
        raise ConfigurationError(
            "ex2 needs two horizontally adjacent interior subdomains (nx >= 4)")
    if n < 4:
        raise ConfigurationError(f"ex2 needs n >= 4, got {n}")
    H = 1.0 / nx
    h = H / n
    ax, ay = H, H                      # subdomain (1, 1)
    bx, by = 2 * H, H                  # subdomain (2, 1)
    return CoefficientField(1.0, (
        Inclusion(ax, ay + H / 4, ax + H / 2, ay + 3 * H / 4, value_a),
        Inclusion(bx, by, bx + H, by + H, value_band),
        Inclusion(bx + h, by + h, bx + H - h, by + H - h, value_inner),
    ))


def preset_ex3(alpha_hat: float, n: int, nx: int = 4) -> CoefficientField:
    """Edge islands on every interior interface: H/8 deep, H/2 wide."""
    if n < 8:
        raise ConfigurationError(
            f"ex3 needs n >= 8 (island thinner than one cell), got {n}")
    H = 1.0 / nx
    incs = []
    for k in range(1, nx):             # vertical interfaces at x = k H
        for gy in range(nx):
            xI, y0 = k * H, gy * H
            incs.append(Inclusion(xI - H / 8, y0 + H / 4, xI, y0 + 3 * H / 4, alpha_hat))
    for k in range(1, nx):             # horizontal interfaces at y = k H
        for gx in range(nx):
            x0, yI = gx * H, k * H
            incs.append(Inclusion(x0 + H / 4, yI - H / 8, x0 + 3 * H / 4, yI, alpha_hat))
    return CoefficientField(1.0, tuple(incs))


def build_field(config: ExperimentConfig) -> CoefficientField:
    n_min = config.n if isinstance(config.n, (int, np.integer)) else min(config.n)
    if config.preset == "ex1":
        return preset_ex1(config.alpha_hat, int(n_min), config.nx)
    if config.preset == "ex2":
        return preset_ex2(int(n_min), config.nx)
    if config.preset == "ex3":
        return preset_ex3(config.alpha_hat, int(n_min), config.nx)
    return CoefficientField(config.background, tuple(config.inclusions))


def run_experiment(config: ExperimentConfig) -> ReportRow:
    """Full pipeline for one configuration; appends a CSV row when requested."""
    field_ = build_field(config)
    t0 = time.perf_counter()
    disc = problem.discretize(config.nx, config.ny, config.n, field_,
                              delta=config.delta)
    rng = np.random.default_rng(config.seed)
    report = fetidp.solve(disc, tol=config.tol, max_it=config.max_it,
                          probe_rng=rng)
    t_total = time.perf_counter() - t0
    t_solve = report.timings["solve"]
    t_setup = t_total - t_solve

    if config.oracle:
        _oracle_crosscheck(disc, report, config.tol)

    row = ReportRow(
        preset=config.preset, nx=config.nx, H_over_h=disc.max_ratio(),
        alpha_hat=config.alpha_hat, iterations=report.iterations,
        cond_estimate=report.cond_estimate,
        final_rel_residual=report.final_rel_residual, converged=report.converged,
        t_setup_s=t_setup, t_solve_s=t_solve,
    )
    if config.out:
        append_row(config.out, row)
    return row


def _oracle_crosscheck(disc, report, tol):
    if disc.n_native_total > ORACLE_DOF_GUARD:
        return
    mono = oracle.assemble_monolithic(disc)
    folded = oracle.fold_local_systems(disc)
    diff = abs(mono.A - folded).max()
    scale = abs(mono.A).max()
    if diff > 1e-12 * scale:
        raise ConfigurationError(
            f"subassembly identity violated: {diff:.3e} vs scale {scale:.3e}")
    u_ref = oracle.direct_solve(mono)
    err = np.linalg.norm(report.u - u_ref) / max(np.linalg.norm(u_ref), 1e-300)
    if err > 1e-5:
        raise ConfigurationError(
            f"substructured solution deviates from direct solve: {err:.3e}")


def fit_slope(points) -> float:
    """Least-squares slope of log(y) against log(x)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ConfigurationError(f"need at least 3 points for a slope, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ConfigurationError("slope fit needs positive coordinates")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    return float(np.polyfit(lx, ly, 1)[0])


def append_row(path: str, row: ReportRow) -> None:
    try:
        new = not _has_header(path)
    except OSError:
        new = True
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if new:
            writer.writeheader()
        writer.writerow(row.as_record())


def _has_header(path) -> bool:
    try:
        with open(path, newline="") as fh:
            return fh.readline().strip() == ",".join(CSV_FIELDS)
    except FileNotFoundError:
        return False


def load_config_file(path: str) -> dict:
    """Flat key-value config with [experiment] and [field] sections."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigurationError(f"cannot read config file {path}")
    kw = {}
    if parser.has_section("experiment"):
        sec = parser["experiment"]
        for key in ("preset", "out"):
            if key in sec:
                kw[key] = sec.get(key)
        for key in ("nx", "ny", "max_it", "seed"):
            if key in sec:
                kw[key] = sec.getint(key)
        for key in ("alpha_hat", "delta", "tol"):
            if key in sec:
                kw[key] = sec.getfloat(key)
        if "oracle" in sec:
            kw["oracle"] = sec.getboolean("oracle")
        if "n" in sec:
            kw["n"] = parse_counts(sec.get("n"))
    if parser.has_section("field"):
        sec = parser["field"]
        if "background" in sec:
            kw["background"] = sec.getfloat("background")
        if "inclusions" in sec:
            incs = []
            for line in sec.get("inclusions").strip().splitlines():
                vals = [float(tok) for tok in line.split()]
                if len(vals) != 5:
                    raise ConfigurationError(
                        f"inclusion line needs `x0 y0 x1 y1 value`, got {line!r}")
                incs.append(Inclusion(*vals))
            kw["inclusions"] = tuple(incs)
    return kw


def parse_counts(text: str):
    vals = [int(tok) for tok in str(text).split(",") if tok.strip()]
    if not vals:
        raise ConfigurationError(f"cannot parse segment counts from {text!r}")
    return vals[0] if len(vals) == 1 else vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dgfeti",
        description="Composite FE/DG + FETI-DP experiments on the unit square",
    )
    p.add_argument("--preset", choices=("ex1", "ex2", "ex3", "custom"))
    p.add_argument("--nx", type=int)
    p.add_argument("--n", type=str, help="segments per subdomain side "
                                         "(int, or comma list per subdomain)")
    p.add_argument("--alpha-hat", dest="alpha_hat", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-it", dest="max_it", type=int)
    p.add_argument("--oracle", action="store_true", default=None,
                   help="run monolithic cross-checks (desk scale only)")
    p.add_argument("--config", type=str, help="INI-style config file")
    p.add_argument("--out", type=str, help="CSV output path (appended)")
    p.add_argument("--seed", type=int)
    p.add_argument("--sweep", type=str, metavar="FIELD=V1,V2,...",
                   help="repeat the run over a comma list of values")
    return p


def _configs_from_args(args) -> tuple:
    kw = {}
    if args.config:
        kw.update(load_config_file(args.config))
    for key in ("preset", "nx", "alpha_hat", "delta", "tol", "max_it",
                "oracle", "out", "seed"):
        val = getattr(args, key)
        if val is not None:
            kw[key] = val
    if args.n is not None:
        kw["n"] = parse_counts(args.n)
    base = ExperimentConfig(**kw)

    if not args.sweep:
        return (base,), None
    field_name, _, values = args.sweep.partition("=")
    field_name = field_name.strip()
    if field_name not in ("n", "alpha_hat", "nx", "delta"):
        raise ConfigurationError(f"cannot sweep over {field_name!r}")
    parse = int if field_name in ("n", "nx") else float
    vals = [parse(tok) for tok in values.split(",") if tok.strip()]
    if not vals:
        raise ConfigurationError(f"empty sweep list in {args.sweep!r}")
    return tuple(replace(base, **{field_name: v}) for v in vals), field_name


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configs, sweep_field = _configs_from_args(args)
        rows = []
        for cfg in configs:
            row = run_experiment(cfg)
            rows.append(row)
            print(f"{row.preset} nx={row.nx} H/h={row.H_over_h} "
                  f"alpha_hat={row.alpha_hat:g}: {row.iterations} iterations "
                  f"(cond {row.cond_estimate:.4g})"
                  + ("" if row.converged else "  [NOT CONVERGED]"))
        if sweep_field in ("n", "alpha_hat") and len(rows) >= 3 \
                and all(r.converged for r in rows):
            xs = [r.H_over_h for r in rows] if sweep_field == "n" \
                else [r.alpha_hat for r in rows]
            slope = fit_slope(list(zip(xs, [r.cond_estimate for r in rows])))
            against = "H/h" if sweep_field == "n" else "alpha_hat"
            print(f"log-log slope of cond vs {against}: {slope:.3f}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    if any(not r.converged for r in rows):
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

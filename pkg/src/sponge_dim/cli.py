"""Command line front end: ``sponge-dim <command> [--config PATH] ...``.

Commands
--------
classify   sponge class, permutation group, orderings per map, COSC verdict
s0         bounds on the box dimension (roots of the two pressures) and the affinity dimension
pressure   pressure sequences and certified lower bounds over an s-grid
boxdim     grid box counts, slope fit and containment in the s0 band
cosc       cuboidal open set condition for the configured cuboid
repro      one of the scenarios: mult, dimdrop, discont, ordered

Exit codes: 0 success, 1 invalid input, 2 budget exceeded, 3 verdict FAIL.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Any, Sequence

import jsonschema

from . import __version__
from .errors import BudgetExceeded, SearchFailed, SpongeError, ValidationError
from .gpm_core import (
    SpongeSystem,
    as_fraction,
    canonical_ordering,
    check_cosc,
    classify,
    group_name,
    orderings,
    permutation_group,
    system_from_dict,
    system_to_dict,
)

log = logging.getLogger("sponge_dim")

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_FAIL = 0, 1, 2, 3
COMMANDS = ("classify", "s0", "pressure", "boxdim", "cosc", "repro")
DEFAULT_S_GRID = (0.5, 1.0, 1.5, 2.0, 2.5)
DEFAULT_DELTAS = tuple(Fraction(1, 2**k) for k in range(5, 11))
BOX_BAND = 0.15


def load_schema() -> dict:
    text = resources.files("sponge_dim").joinpath("config.schema.json").read_text()
    return json.loads(text)


def _rational_text(x) -> str:
    return str(as_fraction(x))


@dataclass
class RunConfig:
    """Validated configuration; ``to_dict`` writes it back in canonical form."""

    system: SpongeSystem | None = None
    cuboid: list[tuple[Fraction, Fraction]] | None = None
    k_max: int | None = None
    s_grid: list[float] | None = None
    deltas: list[Fraction] | None = None
    eps: float | None = None
    stop: str | None = None
    projection_overrides: dict | None = None
    scenario: str | None = None
    scenario_params: dict = field(default_factory=dict)
    seed: int | None = None
    format: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        validator = jsonschema.Draft202012Validator(load_schema())
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
        if errors:
            first = errors[0]
            where = "/".join(str(p) for p in first.absolute_path) or "<root>"
            raise ValidationError(f"config field {where}: {first.message}")
        cfg = cls()
        if "system" in data:
            cfg.system = system_from_dict(data["system"])
        if "cuboid" in data:
            cfg.cuboid = [(as_fraction(lo), as_fraction(hi)) for lo, hi in data["cuboid"]]
        if "deltas" in data:
            cfg.deltas = [as_fraction(d) for d in data["deltas"]]
        for name in ("k_max", "s_grid", "eps", "stop", "projection_overrides", "scenario", "seed", "format"):
            if name in data:
                setattr(cfg, name, data[name])
        cfg.scenario_params = dict(data.get("scenario_params", {}))
        return cfg

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        if self.system is not None:
            out["system"] = system_to_dict(self.system)
        if self.cuboid is not None:
            out["cuboid"] = [[_rational_text(lo), _rational_text(hi)] for lo, hi in self.cuboid]
        if self.k_max is not None:
            out["k_max"] = self.k_max
        if self.s_grid is not None:
            out["s_grid"] = list(self.s_grid)
        if self.deltas is not None:
            out["deltas"] = [_rational_text(d) for d in self.deltas]
        for name in ("eps", "stop", "projection_overrides", "scenario"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        if self.scenario_params:
            out["scenario_params"] = dict(self.scenario_params)
        for name in ("seed", "format"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def need_system(self) -> SpongeSystem:
        if self.system is None:
            raise ValidationError("this command needs a 'system' in the config")
        return self.system


def read_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    return RunConfig.from_dict(data)


# -- commands: each returns (payload, csv rows, verdict or None) ---------------------------


def cmd_classify(cfg: RunConfig):
    sys_ = cfg.need_system()
    group = permutation_group(sys_)
    rows = []
    for i, f in enumerate(sys_.maps):
        rows.append({
            "map": i,
            "perm": " ".join(map(str, f.linear.perm)),
            "scales": " ".join(str(s) for s in f.linear.scales),
            "canonical_ordering": " ".join(map(str, canonical_ordering(f.linear))),
            "orderings": ";".join(" ".join(map(str, o)) for o in sorted(orderings(f.linear))),
        })
    payload = {
        "class": classify(sys_).value,
        "group": group_name(group),
        "group_elements": sorted(list(g) for g in group),
        "cosc": check_cosc(sys_, cfg.cuboid),
        "maps": rows,
    }
    return payload, rows, None


def cmd_cosc(cfg: RunConfig):
    sys_ = cfg.need_system()
    ok = check_cosc(sys_, cfg.cuboid)
    cuboid = cfg.cuboid or [(Fraction(0), Fraction(1))] * 3
    payload = {"cosc": ok, "cuboid": [[str(lo), str(hi)] for lo, hi in cuboid]}
    return payload, [{"cosc": ok}], None


def cmd_s0(cfg: RunConfig):
    from .pressure3d import dimension_bounds

    bounds = dimension_bounds(cfg.need_system(), k_max=cfg.k_max, overrides=cfg.projection_overrides)
    payload = bounds.as_dict()
    row = {k: payload[k] for k in ("s0_lower", "s0_upper", "affinity_dim", "k_used")}
    row["notes"] = "; ".join(payload["notes"])
    return payload, [row], None


def cmd_pressure(cfg: RunConfig):
    from .pressure3d import ModSvfContext, pressure

    upper = ModSvfContext.from_system(cfg.need_system(), overrides=cfg.projection_overrides)
    lower = upper.with_variant("lower")
    lower.cache = upper.cache
    estimates, rows = [], []
    for s in cfg.s_grid or DEFAULT_S_GRID:
        for ctx in (upper, lower):
            est = pressure(ctx, s, cfg.k_max)
            estimates.append(est.as_dict())
            rows.append({
                "s": s, "variant": est.variant, "point_estimate": est.point_estimate,
                "rigorous_lower": est.rigorous_lower, "converged": est.converged,
                "k_used": est.k_used, "last_relative_step": est.last_relative_step,
            })
    return {"projection_dims": upper.dims.as_dict(), "estimates": estimates}, rows, None


def cmd_boxdim(cfg: RunConfig):
    from .boxcount import GridCount, boxcount_rows, dim_slope
    from .pressure3d import dimension_bounds

    sys_ = cfg.need_system()
    bounds = dimension_bounds(sys_, k_max=cfg.k_max, overrides=cfg.projection_overrides)
    deltas = cfg.deltas or list(DEFAULT_DELTAS)
    rows = boxcount_rows(sys_, deltas, bounds.dims, cfg.eps or 0.05, cfg.stop or "longest")
    fit = dim_slope([GridCount(Fraction(r["delta"]), r["count"]) for r in rows])
    low, high = bounds.s0_lower - BOX_BAND, bounds.s0_upper + BOX_BAND
    verdict = "PASS" if low <= fit.slope <= high else "FAIL"
    payload = {
        "rows": rows, "slope": fit.slope, "stderr": fit.stderr,
        "band": [low, high], "s0_lower": bounds.s0_lower, "s0_upper": bounds.s0_upper,
        "verdict": verdict,
    }
    return payload, rows, verdict


def _drop_params(params: dict):
    from .scenarios import DimensionDropParams, search_drop_params

    if params.get("search"):
        return search_drop_params(params.get("search_budget", 20_000))
    if not any(k in params for k in ("a", "b", "c", "N")):
        return DimensionDropParams.figure(params.get("eta_prime", 0.05))
    missing = [k for k in ("a", "b", "c", "N") if k not in params]
    if missing:
        raise ValidationError(f"scenario_params needs {missing} (or none of a, b, c, N for the figure values)")
    return DimensionDropParams(params["a"], params["b"], params["c"], params["N"], params.get("eta_prime", 0.05))


def run_scenario(name: str, cfg: RunConfig):
    from . import scenarios as sc

    params = cfg.scenario_params
    if name == "mult":
        return sc.run_non_multiplicativity()
    if name == "dimdrop":
        seed = sc.DEFAULT_SEED if cfg.seed is None else cfg.seed
        return sc.run_dimension_drop(_drop_params(params), cfg.k_max, seed=seed,
                                     samples=params.get("samples", 100_000), depth=params.get("depth", 1000))
    if name == "discont":
        eps = params.get("eps_list")
        return sc.run_planar_discontinuity(params.get("a", Fraction(2, 5)), eps) if eps else \
            sc.run_planar_discontinuity(params.get("a", Fraction(2, 5)))
    if name == "ordered":
        return sc.run_ordered_closed_form(cfg.system, cfg.k_max)
    raise ValidationError(f"unknown scenario {name!r}; choose from {', '.join(sc.SCENARIOS)}")


def cmd_repro(cfg: RunConfig, scenario: str | None):
    name = scenario or cfg.scenario
    if name is None:
        raise ValidationError("repro needs a scenario (argument or config 'scenario')")
    report = run_scenario(name, cfg)
    rows = [{"name": c.name, "status": c.status, "lhs": json.dumps(c.as_dict()["lhs"]),
             "rhs": json.dumps(c.as_dict()["rhs"])} for c in report.checks]
    return report.as_dict(), rows, report.verdict


# -- output ---------------------------------------------------------------------------------


def _csv_text(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sponge-dim", description="Box-dimension tools for self-affine sponges.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("scenario", nargs="?", help="scenario name for repro (mult, dimdrop, discont, ordered)")
    parser.add_argument("--config", help="JSON config (see config.schema.json)")
    parser.add_argument("--output", help="write the report here instead of stdout")
    parser.add_argument("--format", choices=("json", "csv"), help="report format (default json)")
    parser.add_argument("--k-max", type=int, help="word length for pressure estimates")
    parser.add_argument("--seed", type=int, help="seed for Monte Carlo steps")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = read_config(args.config)
        if args.k_max is not None:
            if args.k_max < 2:
                raise ValidationError("--k-max must be at least 2")
            cfg.k_max = args.k_max
        if args.seed is not None:
            cfg.seed = args.seed
        if args.format is not None:
            cfg.format = args.format
        if args.command != "repro" and args.scenario:
            raise ValidationError(f"unexpected argument {args.scenario!r} for {args.command}")
        log.info("running %s", args.command)
        if args.command == "repro":
            payload, rows, verdict = cmd_repro(cfg, args.scenario)
        else:
            handler = {"classify": cmd_classify, "s0": cmd_s0, "pressure": cmd_pressure,
                       "boxdim": cmd_boxdim, "cosc": cmd_cosc}[args.command]
            payload, rows, verdict = handler(cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SearchFailed as exc:
        print(f"error: {exc}; best candidate {exc.best}", file=sys.stderr)
        return EXIT_BUDGET
    except BudgetExceeded as exc:
        print(f"error: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except SpongeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    envelope = {
        "command": args.command,
        "version": __version__,
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "result": payload,
    }
    if (cfg.format or "json") == "csv":
        header = f"# sponge-dim {__version__} {args.command} config_sha256={cfg.sha256()}\n"
        _emit(header + _csv_text(rows), args.output)
    else:
        _emit(json.dumps(envelope, indent=2, default=str), args.output)
    return EXIT_FAIL if verdict == "FAIL" else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

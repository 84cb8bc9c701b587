"""Command-line interface: ``dqdsim {simulate,steady,sweep,validate}``.

Configuration is layered: preset, then a JSON document (``--config``), then
explicit flags. Exit codes: 0 ok, 1 validation failure, 2 bad config,
3 integrator failure, 4 degenerate steady state.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .analytic import driven_steady_oracle, driven_steady_printed, undriven_steady
from .core import DensityMatrix
from .errors import (
    ContractViolation,
    DegenerateSteadyStateError,
    DomainError,
    NonPhysicalFixedPointError,
    StiffnessError,
)
from .model import FIGURE_RATIOS, PRESETS, REFERENCE_RATES, PhysicalParams, RateParams, build, rates_from_physical
from .propagator import (
    IntegratorConfig,
    Trajectory,
    count_oscillations,
    integrate,
    relaxation_time,
    steady_state,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_INTEGRATOR = 3
EXIT_DEGENERATE = 4

CSV_COLUMNS = (
    "t",
    "rho00",
    "rho11",
    "rho22",
    "re_rho01",
    "im_rho01",
    "re_rho12",
    "im_rho12",
    "re_rho02",
    "im_rho02",
)
SWEEP_COLUMNS = ("ratio", "p", "rho00", "rho11", "rho22", "osc_rho00", "osc_rho11", "relax_time")


class ConfigError(Exception):
    pass


def fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass(frozen=True)
class RunConfig:
    rates: RateParams = REFERENCE_RATES
    t_end: float = 30.0
    output_dt: float = 0.05
    initial: str = "ground"
    diagonal: tuple[float, ...] | None = None
    driven: bool = False
    preset: str | None = None

    def __post_init__(self):
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be > 0, got {self.t_end!r}")
        if not self.output_dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.output_dt!r}")
        if self.initial not in ("ground", "mixed", "custom"):
            raise ConfigError(f"unknown initial state {self.initial!r}")
        if self.initial == "custom":
            if self.diagonal is None or len(self.diagonal) != 3:
                raise ConfigError("custom initial state needs three diagonal entries")
            if min(self.diagonal) < 0 or abs(sum(self.diagonal) - 1.0) > 1e-12:
                raise ConfigError(f"diagonal entries must be >= 0 and sum to 1, got {list(self.diagonal)}")

    @classmethod
    def from_preset(cls, name: str) -> "RunConfig":
        try:
            preset = PRESETS[name]
        except KeyError:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(rates=preset.rates, t_end=preset.t_end, output_dt=preset.dt, driven=preset.driven, preset=name)

    def initial_state(self) -> DensityMatrix:
        if self.initial == "ground":
            return DensityMatrix.ground()
        if self.initial == "mixed":
            return DensityMatrix.maximally_mixed()
        return DensityMatrix.diagonal(self.diagonal)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["diagonal"] = list(self.diagonal) if self.diagonal is not None else None
        return out


@dataclass(frozen=True)
class SweepSpec:
    ratios: tuple[float, ...] = FIGURE_RATIOS
    base: RateParams = field(default=REFERENCE_RATES)
    t_end: float = 40.0
    dt: float = 0.01

    def __post_init__(self):
        if not self.ratios:
            raise ConfigError("sweep needs at least one ratio")
        if any(not r > 0 for r in self.ratios):
            raise ConfigError(f"ratios must be > 0, got {list(self.ratios)}")


# ---------------------------------------------------------------- config

_RATE_KEYS = ("l", "m", "n", "p")


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    return data


def _explicit(args: argparse.Namespace) -> dict:
    keys = ("l", "m", "n", "p", "ratio", "gamma01", "n_occ", "omega_rabi", "t_end", "dt", "driven", "initial", "diag")
    out = {k: getattr(args, k, None) for k in keys}
    return {k: v for k, v in out.items() if v is not None}


_BATH_KEYS = ("l", "m")
_PHYSICAL_KEYS = ("gamma01", "n_occ")
_DRIVE_KEYS = ("p", "ratio", "omega_rabi")
_CONFIG_KEYS = {
    *_RATE_KEYS, *_PHYSICAL_KEYS, *_DRIVE_KEYS, "t_end", "dt", "driven", "initial", "diag", "preset", "ratios"
}


def _overlay(settings: dict, layer: dict) -> None:
    """Apply ``layer`` on top of ``settings``.

    A layer that sets the drive replaces every earlier drive key and switches
    the drive on unless it also says otherwise. Bath rates given directly and
    given as physical parameters replace each other the same way.
    """
    if any(k in layer for k in _BATH_KEYS) and any(k in layer for k in _PHYSICAL_KEYS):
        raise ConfigError("give either l/m or gamma01/n_occ, not both")
    if sum(k in layer for k in _DRIVE_KEYS) > 1:
        raise ConfigError("give only one of p, ratio, omega_rabi")
    if any(k in layer for k in _DRIVE_KEYS):
        for k in _DRIVE_KEYS:
            settings.pop(k, None)
        if "driven" not in layer:
            settings.pop("driven", None)
    for mine, other in ((_BATH_KEYS, _PHYSICAL_KEYS), (_PHYSICAL_KEYS, _BATH_KEYS)):
        if any(k in layer for k in mine):
            for k in other:
                settings.pop(k, None)
    settings.update(layer)


def _merge_settings(args: argparse.Namespace) -> dict:
    """Preset < JSON config < flags."""
    settings: dict = {}
    doc = _load_json(args.config) if getattr(args, "config", None) else {}
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    flags = _explicit(args)
    preset = getattr(args, "preset", None) or doc.get("preset")
    if preset:
        base = RunConfig.from_preset(preset)
        settings.update(asdict(base.rates))
        settings.update(t_end=base.t_end, dt=base.output_dt, driven=base.driven, preset=preset)
    _overlay(settings, doc)
    _overlay(settings, flags)
    if getattr(args, "preset", None):
        settings["preset"] = args.preset
    return settings


def _rates_from_settings(settings: dict) -> RateParams:
    base = asdict(REFERENCE_RATES)
    base.update({k: settings[k] for k in _RATE_KEYS if k in settings})
    try:
        if any(k in settings for k in _PHYSICAL_KEYS):
            missing = [k for k in _PHYSICAL_KEYS if k not in settings]
            if missing:
                raise ConfigError(f"physical bath parameters need {missing}")
            phys = rates_from_physical(PhysicalParams(float(settings["gamma01"]), float(settings["n_occ"])))
            base.update(l=phys.l, m=phys.m)
        if "omega_rabi" in settings:
            base["p"] = float(settings["omega_rabi"]) / 2.0
    except (ContractViolation, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if "ratio" in settings:
        ratio = float(settings["ratio"])
        if not ratio > 0:
            raise ConfigError(f"ratio must be > 0, got {ratio!r}")
        base["p"] = float(base["l"]) / ratio
    try:
        return RateParams(**{k: float(v) for k, v in base.items()})
    except (ContractViolation, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _parse_diag(value) -> tuple[float, ...]:
    if isinstance(value, str):
        value = value.split(",")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad diagonal {value!r}") from exc


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    settings = _merge_settings(args)
    rates = _rates_from_settings(settings)
    driven = settings.get("driven")
    if driven is None:
        driven = rates.p > 0
    diag = _parse_diag(settings["diag"]) if settings.get("diag") is not None else None
    initial = settings.get("initial") or ("custom" if diag is not None else "ground")
    try:
        return RunConfig(
            rates=rates,
            t_end=float(settings.get("t_end", 30.0)),
            output_dt=float(settings.get("dt", 0.05)),
            initial=initial,
            diagonal=diag,
            driven=bool(driven),
            preset=settings.get("preset"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- output

def trajectory_rows(traj: Trajectory):
    for t, rho in zip(traj.times, traj.states):
        yield (
            float(t),
            rho[0, 0].real,
            rho[1, 1].real,
            rho[2, 2].real,
            rho[0, 1].real,
            rho[0, 1].imag,
            rho[1, 2].real,
            rho[1, 2].imag,
            rho[0, 2].real,
            rho[0, 2].imag,
        )


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def run_simulation(cfg: RunConfig) -> Trajectory:
    gen = build(cfg.rates, cfg.driven)
    return integrate(gen, cfg.initial_state(), cfg.t_end, IntegratorConfig(dense_output_dt=cfg.output_dt))


def simulate_csv(cfg: RunConfig) -> str:
    return _csv_text(CSV_COLUMNS, trajectory_rows(run_simulation(cfg)))


def _meta(command: str, config: dict, **extra) -> dict:
    return {"command": command, "version": __version__, "config": config, **extra}


def _emit(text: str, output: str | None) -> None:
    if output in (None, "-", "stdout"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(output, "w", newline="") as fh:
            fh.write(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    cfg = resolve_run_config(args)
    traj = run_simulation(cfg)
    if args.format == "json":
        stats = asdict(traj.stats)
        samples = [dict(zip(CSV_COLUMNS, row)) for row in trajectory_rows(traj)]
        text = _json_text({"meta": _meta("simulate", cfg.to_dict(), stats=stats), "samples": samples})
    else:
        text = _csv_text(CSV_COLUMNS, trajectory_rows(traj))
    _emit(text, args.output)
    return EXIT_OK


def steady_report(rates: RateParams, driven: bool, method: str) -> dict:
    """Stationary populations per method, plus the printed-formula audit if driven."""
    results = []
    discrepancy = None
    if method in ("analytic", "both"):
        if driven:
            rep = driven_steady_printed(rates)
            results.append({"method": "analytic", "label": rep.label, "populations": list(rep.values), "flags": list(rep.flags)})
        else:
            results.append({"method": "analytic", "label": "closed-form", "populations": list(undriven_steady(rates)), "flags": []})
    if method in ("nullspace", "both"):
        pops = driven_steady_oracle(rates) if driven else steady_state(build(rates, False)).populations
        results.append({"method": "nullspace", "label": "oracle", "populations": [float(v) for v in pops], "flags": []})
    if method == "both":
        diff = np.array(results[0]["populations"]) - np.array(results[1]["populations"])
        discrepancy = {
            "difference": [float(v) for v in diff],
            "max_abs": float(np.max(np.abs(diff))),
            "flags": results[0]["flags"],
        }
    return {"rates": asdict(rates), "driven": driven, "results": results, "discrepancy": discrepancy}


def cmd_steady(args) -> int:
    cfg = resolve_run_config(args)
    report = steady_report(cfg.rates, cfg.driven, args.method)
    if args.format == "json":
        text = _json_text({"meta": _meta("steady", cfg.to_dict(), method=args.method), **report})
    else:
        rows = []
        for res in report["results"]:
            rows.append([res["method"], *map(float, res["populations"]), ";".join([res["label"], *res["flags"]])])
        disc = report["discrepancy"]
        if disc is not None:
            rows.append(["discrepancy", *disc["difference"], ";".join(disc["flags"]) or "none"])
        text = _csv_text(("method", "rho00", "rho11", "rho22", "note"), rows)
    _emit(text, args.output)
    return EXIT_OK


def _sweep_point(args: tuple[float, RateParams, float, float]) -> tuple:
    ratio, base, t_end, dt = args
    rates = base.with_ratio(ratio)
    gen = build(rates, True)
    traj = integrate(gen, DensityMatrix.ground(), t_end, IntegratorConfig(dense_output_dt=dt))
    rho_ss = steady_state(gen)
    pops = rho_ss.populations
    return (
        float(ratio),
        float(rates.p),
        float(pops[0]),
        float(pops[1]),
        float(pops[2]),
        count_oscillations(traj, 0),
        count_oscillations(traj, 1),
        relaxation_time(traj, rho_ss),
    )


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[tuple]:
    """One row per ratio, ordered by descending ratio."""
    ratios = sorted(spec.ratios, reverse=True)
    work = [(r, spec.base, spec.t_end, spec.dt) for r in ratios]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
            return list(pool.map(_sweep_point, work))
    return [_sweep_point(w) for w in work]


def sweep_trends(rows: list[tuple]) -> dict[str, bool]:
    rho00 = [r[2] for r in rows]
    osc = [r[5] for r in rows]
    relax = [r[7] for r in rows]
    return {
        "rho00_strictly_decreasing": all(b < a for a, b in zip(rho00, rho00[1:])),
        "rho00_above_one_third": all(v >= 1 / 3 - 1e-9 for v in rho00),
        "oscillations_non_decreasing": all(b >= a for a, b in zip(osc, osc[1:])),
        "relaxation_non_decreasing": all(b >= a for a, b in zip(relax, relax[1:])),
    }


def _sweep_spec(args) -> SweepSpec:
    settings = _merge_settings(args)
    # the drive comes from the ratio list
    for k in _DRIVE_KEYS:
        settings.pop(k, None)
    rates = _rates_from_settings(settings)
    ratios = args.ratios if args.ratios is not None else settings.get("ratios", FIGURE_RATIOS)
    if isinstance(ratios, str):
        ratios = ratios.split(",")
    try:
        ratios = tuple(float(r) for r in ratios)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad ratios {ratios!r}") from exc
    return SweepSpec(ratios, rates, float(settings.get("t_end", 40.0)), float(settings.get("dt", 0.01)))


def cmd_sweep(args) -> int:
    spec = _sweep_spec(args)
    jobs = args.jobs if args.jobs is not None else min(len(spec.ratios), os.cpu_count() or 1)
    rows = run_sweep(spec, jobs=jobs)
    trends = sweep_trends(rows)
    if args.format == "json":
        meta = _meta("sweep", {"ratios": list(spec.ratios), "base": asdict(spec.base), "t_end": spec.t_end, "dt": spec.dt})
        text = _json_text({"meta": meta, "rows": [dict(zip(SWEEP_COLUMNS, r)) for r in rows], "trends": trends})
    else:
        text = _csv_text(SWEEP_COLUMNS, rows)
        for name, ok in trends.items():
            print(f"# trend {name}: {'pass' if ok else 'FAIL'}", file=sys.stderr)
    _emit(text, args.output)
    if args.strict and not all(trends.values()):
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import CHECKS, run_checks

    names = None
    if args.only:
        names = [n for n in CHECKS if any(n.startswith(prefix) for prefix in args.only)]
        if not names:
            raise ConfigError(f"no checks match {args.only}")
    results = run_checks(names, fault=args.inject_fault)
    failed = [r.name for r in results if not r.passed]
    if args.format == "json":
        payload = {
            "meta": _meta("validate", {"only": args.only, "fault": args.inject_fault}),
            "checks": [asdict(r) for r in results],
            "passed": not failed,
            "failed": failed,
        }
        _emit(_json_text(payload), args.output)
    else:
        lines = [f"{'PASS' if r.passed else 'FAIL'}\t{r.name}\t{r.detail}" for r in results]
        lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed")
        _emit("\n".join(lines) + "\n", args.output)
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(parser: argparse.ArgumentParser, sweep: bool = False) -> None:
    g = parser.add_argument_group("model")
    g.add_argument("--l", type=float, help="emission rate 1 -> 0")
    g.add_argument("--m", type=float, help="absorption rate 0 -> 1")
    g.add_argument("--n", type=float, help="tunneling rate 1 <-> 2")
    g.add_argument("--gamma01", type=float, help="spontaneous 0<->1 rate; with --n-occ, replaces --l/--m")
    g.add_argument("--n-occ", dest="n_occ", type=float, help="Planck occupation of the 0<->1 mode")
    if not sweep:
        g.add_argument("--p", type=float, help="half Rabi frequency; implies --driven unless --no-driven")
        g.add_argument("--ratio", type=float, help="set p = l / ratio")
        g.add_argument("--omega-rabi", dest="omega_rabi", type=float, help="Rabi frequency; sets p = omega_rabi / 2")
        g.add_argument("--driven", action=argparse.BooleanOptionalAction, default=None)
        g.add_argument("--initial", choices=("ground", "mixed", "custom"))
        g.add_argument("--diag", help="custom initial populations, e.g. 0.5,0.25,0.25")
    g.add_argument("--t-end", dest="t_end", type=float)
    g.add_argument("--dt", type=float, help="output sampling interval")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--config", help="JSON document with the same keys as the flags")
    parser.add_argument("--output", "-o", default="-", help="file path, or - for stdout")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqdsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="integrate the master equation and write the trajectory")
    _common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_ss = sub.add_parser("steady", help="stationary populations")
    _common(p_ss)
    p_ss.add_argument("--method", choices=("analytic", "nullspace", "both"), default="both")
    p_ss.set_defaults(func=cmd_steady)

    p_sw = sub.add_parser("sweep", help="stationary values, oscillations and relaxation over l/p")
    _common(p_sw, sweep=True)
    p_sw.add_argument("--ratios", help="comma-separated l/p values (default 2,1,0.5,0.1)")
    p_sw.add_argument("--jobs", type=int, help="worker processes (default: one per ratio)")
    p_sw.add_argument("--strict", action="store_true", help="exit 1 if a trend fails")
    p_sw.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="run the invariant suite")
    p_val.add_argument("--only", nargs="+", metavar="PREFIX", help="run checks whose name starts with PREFIX")
    p_val.add_argument("--output", "-o", default="-")
    p_val.add_argument("--format", choices=("text", "json"), default="text")
    p_val.add_argument("--inject-fault", choices=("dissipator-sign",), default=None, help=argparse.SUPPRESS)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractViolation, DomainError) as exc:
        print(f"dqdsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StiffnessError as exc:
        print(f"dqdsim: integrator failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR
    except (DegenerateSteadyStateError, NonPhysicalFixedPointError) as exc:
        print(f"dqdsim: degenerate steady state: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())

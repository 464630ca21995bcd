"""Command line scenario runner.

    virtlevel <subcommand> --config scenario.ini [--out DIR] [--seed N] [--threads N]

A scenario is an INI file with sections [system], [potential], [grid] and
[run]. Every run writes <subcommand>.csv and <subcommand>.meta.json into the
output directory. The metadata echoes the fully resolved scenario, defaults
included, together with its SHA-256 hash, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import re
import sys as _sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConvergenceError, DomainError, ResourceError

log = logging.getLogger("virtlevel")

SUBCOMMANDS = ("hardy", "detect", "threshold", "decay", "count", "verify", "geometry")

EXIT_OK, EXIT_DOMAIN, EXIT_CONVERGENCE, EXIT_RESOURCE = 0, 2, 3, 4

BUILTIN_PIECES = {
    "well_barrier": "step(-1, 1); step(4, 2, 1)",
    "gauss_well_barrier": "gaussian(-4, 1); gaussian(3, 1.6)",
    "zero": "",
}

# (type, default); a default of None means required
COMMON = {
    "system": {"masses": ("floats", None), "dim": ("int", 1)},
    "potential": {"kind": ("str", "zero"), "pieces": ("str", ""), "coupling": ("float", 1.0),
                  "decay_C": ("float", ""), "decay_nu": ("float", ""), "decay_A": ("float", 0.0)},
    "grid": {"L": ("float", 20.0), "h": ("float", 0.2), "memory_mb": ("float", 2048.0)},
}

RUN = {
    "hardy": {"numerical": ("bool", False), "n_s": ("int", 300), "n_theta": ("int", 300),
              "log_outer": ("float", 20.0)},
    "geometry": {"kappa_samples": ("int", 100000)},
    "detect": {"eps_grid": ("floats", "0.5, 0.25, 0.1, 0.05, 0.01"), "weight": ("str", "auto"),
               "box_check": ("bool", False), "locate": ("bool", False), "bracket": ("floats", "0, 10"),
               "rtol": ("float", 1e-6)},
    "threshold": {"bracket": ("floats", "0, 10"), "rtol": ("float", 1e-4), "level": ("str", "tau"),
                  "max_iter": ("int", 60)},
    "decay": {"alphas": ("floats", "0.45, 1.0"), "kind": ("str", "power"), "relocate": ("bool", True),
              "bracket": ("floats", "0, 10"), "rtol": ("float", 1e-8), "level": ("str", "tau"),
              "source": ("str", "threshold"), "n_max": ("int", 10**8)},
    "count": {"boxes": ("floats", "20, 40, 80"), "z": ("str", "tau"), "couplings": ("floats", "")},
    "verify": {"target": ("str", "lemmas"), "samples": ("int", 200), "eps": ("floats", "0.01, 0.1"),
               "beta": ("floats", "0.3, 0.5"), "kinds": ("str", ""), "b": ("float", 1.0),
               "weight_beta": ("float", 2.0), "n_nodes": ("int", 10000)},
}


@dataclass
class Scenario:
    subcommand: str
    values: dict  # section -> key -> parsed value
    seed: int = 0
    warnings: list = field(default_factory=list)

    def echo(self) -> dict:
        return {"subcommand": self.subcommand, "seed": self.seed, "version": __version__,
                **{sec: dict(sorted(v.items())) for sec, v in sorted(self.values.items())}}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.echo(), sort_keys=True).encode()).hexdigest()


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "int":
        return int(float(raw))
    if kind == "float":
        return None if raw == "" else float(raw)
    if kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "floats":
        return [float(x) for x in re.split(r"[,\s]+", raw) if x]
    raise AssertionError(kind)


def parse_scenario(text: str, subcommand: str, strict: bool = True, seed: int = 0) -> Scenario:
    """Validate an INI scenario; collects every violation before raising."""
    if subcommand not in SUBCOMMANDS:
        raise DomainError(f"unknown subcommand {subcommand!r}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise DomainError(f"malformed scenario: {exc}") from exc
    schema = dict(COMMON, run=RUN[subcommand])
    errors, warnings, values = [], [], {}
    for sec in cp.sections():
        if sec not in schema:
            (errors if strict else warnings).append(f"[{sec}]: unknown section")
    for sec, keys in schema.items():
        given = cp[sec] if cp.has_section(sec) else {}
        out = {}
        for key in given:
            if key not in keys:
                (errors if strict else warnings).append(f"[{sec}] {key}: unknown key")
        for key, (kind, default) in keys.items():
            if key in given:
                try:
                    out[key] = _convert(kind, given[key])
                except ValueError as exc:
                    errors.append(f"[{sec}] {key}: {exc}")
            elif default is None:
                errors.append(f"[{sec}] {key}: required")
            else:
                out[key] = _convert(kind, str(default))
        values[sec] = out
    _semantic_checks(values, errors)
    if errors:
        raise DomainError("invalid scenario:\n  " + "\n  ".join(errors))
    return Scenario(subcommand, values, seed, warnings)


def _semantic_checks(v: dict, errors: list):
    masses = v["system"].get("masses")
    if masses is not None:
        if len(masses) < 2:
            errors.append("[system] masses: need at least two particles")
        for m in masses:
            if not m > 0:
                errors.append(f"[system] masses: mass {m} is not positive")
    if v["system"].get("dim") not in (1, 2, 3):
        errors.append("[system] dim: must be 1, 2 or 3")
    pot = v["potential"]
    kind = pot.get("kind")
    if kind == "custom":
        if not pot.get("pieces"):
            errors.append("[potential] pieces: required for a custom potential")
        if pot.get("decay_C") is None or pot.get("decay_nu") is None:
            errors.append("[potential] decay_C, decay_nu: a custom potential needs a decay certificate")
    elif kind not in BUILTIN_PIECES:
        errors.append(f"[potential] kind: unknown {kind!r}; use custom or one of {sorted(BUILTIN_PIECES)}")
    elif pot.get("pieces"):
        errors.append("[potential] pieces: only allowed with kind = custom")
    g = v["grid"]
    for key in ("L", "h"):
        if g.get(key) is not None and not g[key] > 0:
            errors.append(f"[grid] {key}: must be positive")


_PIECE = re.compile(r"^\s*(step|gaussian|bump)\s*\(([^)]*)\)\s*$")


def parse_pieces(text: str, dim: int):
    from .discretize import Bump, Gaussian, Step

    pieces = []
    for chunk in [c for c in text.split(";") if c.strip()]:
        m = _PIECE.match(chunk)
        if not m:
            raise DomainError(f"cannot parse potential piece {chunk.strip()!r}")
        args = [float(a) for a in m.group(2).split(",") if a.strip()]
        name = m.group(1)
        if name == "step":
            pieces.append(Step(*args))
        elif name == "gaussian":
            pieces.append(Gaussian(*args))
        else:
            pieces.append(Bump(*args))
    return pieces


def build_inputs(sc: Scenario, need_grid: bool = True):
    from .discretize import DecayCertificate, GridSpec, identical_pairs
    from .geometry import ParticleSystem

    s, p, g = sc.values["system"], sc.values["potential"], sc.values["grid"]
    system = ParticleSystem(tuple(s["masses"]), s["dim"])
    text = p["pieces"] if p["kind"] == "custom" else BUILTIN_PIECES[p["kind"]]
    cert = None
    if p["kind"] == "custom":
        cert = DecayCertificate(p["decay_C"], p["decay_nu"], p["decay_A"] or 0.0)
    pot = identical_pairs(system.n_particles, parse_pieces(text, s["dim"]), s["dim"], p["coupling"], cert)
    grid = None
    if need_grid:
        grid = GridSpec.from_spacing(system.dim_config, g["L"], g["h"], memory_mb=g["memory_mb"])
    return system, pot, grid


def _level(text: str, grid):
    from .virtual_level import tau_zero

    if text == "tau":
        return -tau_zero(grid)
    return float(text)


# ------------------------------------------------------------- commands

def run_hardy(sc, system, pot, grid):
    from .hardy import LogPolarGrid, hardy_constant, rayleigh_estimate_CH

    rep = hardy_constant(system)
    rows = [{"quantity": "hardy_constant", "value": rep.value, "method": rep.method,
             "regime": rep.regime, "is_bound": rep.is_bound}]
    r = sc.values["run"]
    if r["numerical"]:
        lp = LogPolarGrid(float(np.exp(r["log_outer"])), r["n_s"], r["n_theta"])
        est = rayleigh_estimate_CH(system, lp, seed=sc.seed)
        rows.append({"quantity": "hardy_constant", "value": est.value, "method": est.method,
                     "regime": est.regime, "is_bound": est.is_bound})
    return rows, {}


def run_geometry(sc, system, pot, grid):
    from .geometry import cone_separation_kappa, two_cluster_partitions
    from .hardy import sector_angles

    rows = []
    if system.n_particles == 3 and system.dim == 1:
        sec = sector_angles(system.masses)
        for k, th in enumerate(sec.angles):
            rows.append({"quantity": f"sector_angle_{k}", "value": float(th)})
        rows.append({"quantity": "theta0", "value": sec.theta0})
    kappa = cone_separation_kappa(system, n_samples=sc.values["run"]["kappa_samples"], seed=sc.seed)
    rows.append({"quantity": "cone_kappa", "value": float(kappa)})
    rows.append({"quantity": "two_cluster_partitions", "value": len(two_cluster_partitions(system.n_particles))})
    rows.append({"quantity": "config_dimension", "value": system.dim_config})
    return rows, {}


def run_detect(sc, system, pot, grid):
    from .discretize import WeightSpec
    from .virtual_level import coupling_threshold, detect_via_perturbation, detect_virtual_level

    r = sc.values["run"]
    extra = {}
    if r["locate"]:
        th = coupling_threshold(system, pot.scaled(1.0), grid, tuple(r["bracket"]), rtol=r["rtol"])
        pot = pot.scaled(th.coupling)
        extra["located_coupling"] = th.coupling
    direct = detect_virtual_level(system, pot, grid, r["eps_grid"], box_check=r["box_check"], seed=sc.seed)
    weight = None if r["weight"] == "auto" else WeightSpec(r["weight"])
    pert = detect_via_perturbation(system, pot, grid, weight, r["eps_grid"], seed=sc.seed)
    rows = []
    for i, e in enumerate(direct.epsilon_grid):
        rows.append({"eps": e,
                     "ground_eps": direct.ground_eps[i] if direct.ground_eps else "",
                     "ess_floor": direct.ess_floor[i] if direct.ess_floor else "",
                     "perturbed_ground": pert.ground_eps[i] if pert.ground_eps else ""})
    report = {"direct": direct.as_dict(), "perturbation": pert.as_dict(), **extra}
    if direct.verdict == "inconclusive":
        sc.warnings.append("direct verdict inconclusive")
    return rows, report


def run_threshold(sc, system, pot, grid):
    from .virtual_level import coupling_threshold

    r = sc.values["run"]
    th = coupling_threshold(system, pot.scaled(1.0), grid, tuple(r["bracket"]), rtol=r["rtol"],
                            level=_level(r["level"], grid), max_iter=r["max_iter"])
    return [{"coupling": th.coupling, "bracket_lo": th.bracket[0], "bracket_hi": th.bracket[1],
             "iterations": th.iterations, "level": th.level, "rtol": th.rtol}], {}


def run_decay(sc, system, pot, grid):
    from .decay import decay_study

    r = sc.values["run"]
    level = None if r["level"] == "tau" else float(r["level"])
    rep = decay_study(system, pot.scaled(1.0), grid, r["alphas"], kind=r["kind"],
                      coupling=None if r["relocate"] else pot.coupling, bracket=tuple(r["bracket"]),
                      level=level, rtol=r["rtol"], source=r["source"], n_max=r["n_max"], seed=sc.seed)
    rows = [{"alpha": a, "weighted_norm_L": x, "weighted_norm_2L": y, "ratio": q} for a, x, y, q in rep.rows()]
    shells = rep.fit.rows() if rep.fit is not None else []
    extra = {"couplings": list(rep.couplings), "flag": rep.flag,
             "tail_slope": None if rep.fit is None else rep.fit.slope,
             "tail_band": None if rep.fit is None else rep.fit.band}
    return rows, {"report": extra, "_shells": shells}


def run_count(sc, system, pot, grid):
    from .efimov import count_vs_coupling, counting_curve

    r = sc.values["run"]
    z = None if r["z"] == "tau" else float(r["z"])
    cc = counting_curve(system, pot, r["boxes"], grid.h, z)
    rows = [{"L": L, "h": h, "z_or_lambda": zz, "count": n, "stable": st} for L, h, zz, n, st in cc.rows()]
    extra = {"stable": cc.stable}
    if r["couplings"]:
        cv = count_vs_coupling(system, pot.scaled(1.0), grid, r["couplings"], z)
        rows += [{"L": grid.L, "h": grid.h, "z_or_lambda": lam, "count": n, "stable": ""}
                 for lam, n in zip(cv.couplings, cv.counts)]
        extra["monotone_in_coupling"] = cv.monotone
    if not cc.stable:
        sc.warnings.append("count did not stabilize")
    return rows, extra


def run_verify(sc, system, pot, grid):
    r = sc.values["run"]
    target = r["target"]
    rows = []
    if target == "localization":
        from .localization import build_scalar_cutoff

        for e in r["eps"]:
            for b in r["beta"]:
                u = build_scalar_cutoff(e, b)
                margin = float(np.min(u.bound_margin_s(u.sample_s(r["samples"]))))
                rows.append({"check": f"cutoff eps={e:g} beta={b:g}", "value": margin, "holds": margin >= 0})
    elif target == "hardy":
        from .hardy import verify_scalar_hardy

        for kind in (r["kinds"].split(",") if r["kinds"] else ["halfline_1d", "exterior_d3", "log_2d"]):
            rep = verify_scalar_hardy(kind.strip(), n_nodes=r["n_nodes"], seed=sc.seed)
            rows.append({"check": kind.strip(), "value": rep.value, "holds": rep.holds})
    elif target == "lemmas":
        from .efimov import LEMMA_KINDS, boundary_lemma_check

        for kind in (r["kinds"].split(",") if r["kinds"] else LEMMA_KINDS):
            rep = boundary_lemma_check(kind.strip(), samples=r["samples"], seed=sc.seed)
            rows.append({"check": kind.strip(), "value": rep.min_margin, "holds": rep.holds})
    elif target == "exterior":
        from .efimov import exterior_positivity_check

        for e in r["eps"]:
            rep = exterior_positivity_check(system, pot, grid, r["b"], r["weight_beta"], e, seed=sc.seed)
            rows.append({"check": f"exterior eps={e:g}", "value": rep.margin, "holds": rep.positive})
    else:
        raise DomainError(f"unknown verify target {target!r}")
    if not all(row["holds"] for row in rows):
        sc.warnings.append("some checks failed")
    return rows, {}


RUNNERS = {"hardy": run_hardy, "geometry": run_geometry, "detect": run_detect, "threshold": run_threshold,
           "decay": run_decay, "count": run_count, "verify": run_verify}


# ---------------------------------------------------------------- output

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def emit_csv(rows: list, path: Path):
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in cols])


def run(sc: Scenario, out: Path) -> dict:
    need_grid = sc.subcommand not in ("hardy", "geometry", "verify") or sc.values["run"].get("target") == "exterior"
    system, pot, grid = build_inputs(sc, need_grid)
    rows, extra = RUNNERS[sc.subcommand](sc, system, pot, grid)
    shells = extra.pop("_shells", None) if isinstance(extra, dict) else None
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(rows, out / f"{sc.subcommand}.csv")
    if shells is not None:
        emit_csv([{"shell_radius": a, "shell_rms": b} for a, b in shells], out / f"{sc.subcommand}_shells.csv")
    record = {"scenario": sc.echo(), "scenario_hash": sc.digest(), "result": _clean(extra),
              "warnings": list(sc.warnings)}
    (out / f"{sc.subcommand}.meta.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="virtlevel", description="virtual levels of few-body operators")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=Path("virtlevel_out"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--strict", dest="strict", action="store_true", default=True)
    ap.add_argument("--no-strict", dest="strict", action="store_false")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"cannot read {args.config}: {exc}", file=_sys.stderr)
        return EXIT_DOMAIN
    try:
        sc = parse_scenario(text, args.subcommand, strict=args.strict, seed=args.seed)
        for w in sc.warnings:
            log.warning(w)
        t0 = time.perf_counter()
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                record = run(sc, args.out)
        else:
            record = run(sc, args.out)
        log.info("%s finished in %.2f s, scenario %s", args.subcommand, time.perf_counter() - t0,
                 record["scenario_hash"][:12])
    except DomainError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_DOMAIN
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=_sys.stderr)
        return EXIT_CONVERGENCE
    except ResourceError as exc:
        print(f"resource limit: {exc}", file=_sys.stderr)
        return EXIT_RESOURCE
    except OSError as exc:
        print(f"output error under {args.out}: {exc}", file=_sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

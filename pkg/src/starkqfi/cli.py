"""Command line entry point: ``starkqfi <command> [--config run.json] [overrides]``.

Every command resolves its configuration (defaults < config file < flags),
prints it, writes CSV tables plus a JSON summary that embeds the resolved
configuration and its hash, and drops a standalone plot script next to them.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 basis dimension above the configured cap.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from copy import deepcopy
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from .basis import FockBasis, dimension, fock_from_string, fock_to_string
from .gravimetry import PhysicalSetup, format_table, gradient_from_g, hubbard_J, sensitivity_table
from .hamiltonian import ModelParams, build_hamiltonian
from .io import config_hash, write_csv, write_json, write_plot_script, write_trajectory
from .observables import occupancy_series
from .propagator import PropagationError, make_propagator
from .qfi import QfiError

logger = logging.getLogger("starkqfi")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DIMENSION = 0, 2, 3, 4

COMMON = {
    "J": 1.0,
    "horizon": an.HORIZON,
    "dt": an.TIME_STEP,
    "window": an.WINDOW_FRACTION,
    "plateau_tolerance": an.PLATEAU_TOLERANCE,
    "method": "auto",
    "dense_threshold": 1024,
    "max_dimension": an.MAX_DIMENSION,
    "workers": None,
}

DEFAULTS = {
    "qfi-time": {"L": 11, "N": 2, "U_list": [0.0, 5.0, 20.0], "h_list": [5.0, 1.0, 0.1],
                 "trajectory_states": []},
    "scaling": {"kind": "size", "L": 11, "N": 2, "U": 0.0, "h": "critical",
                "L_list": [7, 9, 11, 13, 15, 17, 19], "N_list": [1, 2, 3, 4, 5],
                "h_list": [3.0, 4.0, 5.0, 6.0, 8.0, 10.0],
                "critical_grid": {"logspace": [0.05, 5.0, 25]}},
    "resonance": {"L": 11, "N": 4, "U_grid": {"start": 0.0, "stop": 20.0, "step": 0.5},
                  "h_grid": {"start": 2.0, "stop": 5.0, "step": 0.5},
                  "m_values": [1, 2, 3, 4], "coefficient": None},
    "occupancy": {"L": 11, "N": 3, "h": 4.0, "U_list": [4.0, 8.0, 10.0], "horizon": 100.0},
    "gravimetry": {"L": 11, "N_list": [2, 3, 4], "h": 4.0, "m": 4, "U_off": 0.0,
                   "profile": {}},
    "critical-point": {"L": 11, "N": 2, "U": 0.0, "h_grid": {"logspace": [0.05, 5.0, 25]}},
}


class ConfigError(ValueError):
    pass


class CellFailure(RuntimeError):
    pass


def expand_grid(spec, name: str) -> list[float]:
    """A list, ``{"start", "stop", "step"}`` (inclusive) or ``{"logspace": [lo, hi, n]}``."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, list):
        if not spec:
            raise ConfigError(f"{name} is empty")
        return [float(x) for x in spec]
    if isinstance(spec, dict):
        if "logspace" in spec:
            lo, hi, n = spec["logspace"]
            if lo <= 0 or hi <= lo or int(n) < 2:
                raise ConfigError(f"bad logspace for {name}: {spec}")
            return np.logspace(np.log10(lo), np.log10(hi), int(n)).tolist()
        try:
            start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        except KeyError as exc:
            raise ConfigError(f"{name} range needs start/stop/step") from exc
        if step <= 0 or stop < start:
            raise ConfigError(f"bad range for {name}: {spec}")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(n)]
    raise ConfigError(f"cannot interpret {name}={spec!r}")


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    config = deepcopy(COMMON)
    config.update(deepcopy(DEFAULTS[command]))
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(loaded) - set(config) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key in ("horizon", "window", "workers"):
        value = getattr(args, key)
        if value is not None:
            config[key] = value
    if args.dense_oracle:
        config["method"] = "dense"
    config["workers"] = config["workers"] or os.cpu_count() or 1
    return config


def _options(config: dict) -> dict:
    return {
        "horizon": float(config["horizon"]),
        "dt": float(config["dt"]),
        "window_fraction": float(config["window"]),
        "plateau_tolerance": float(config["plateau_tolerance"]),
        "method": config["method"],
        "dense_threshold": int(config["dense_threshold"]),
        "max_dimension": int(config["max_dimension"]),
        "n_jobs": int(config["workers"]),
    }


def _guard(config: dict, L: int, N: int) -> None:
    if dimension(int(L), int(N)) > int(config["max_dimension"]):
        raise an.DimensionCapError(
            f"basis of (L={L}, N={N}) has dimension {dimension(int(L), int(N))} "
            f"> cap {config['max_dimension']}"
        )


def _summary(command: str, config: dict, results: dict) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "results": results,
    }


def _fit_dict(fit: an.PowerLawFit) -> dict:
    return {"exponent": fit.exponent, "prefactor": fit.prefactor, "r_squared": fit.r_squared,
            "points": [list(p) for p in fit.points]}


def cmd_qfi_time(config: dict, out: Path) -> dict:
    L, N, J = int(config["L"]), int(config["N"]), float(config["J"])
    _guard(config, L, N)
    t = an.time_grid(float(config["horizon"]), float(config["dt"]))
    rows, series = [], []
    for h in expand_grid(config["h_list"], "h_list"):
        for U in expand_grid(config["U_list"], "U_list"):
            params = ModelParams(L, N, J, U, h)
            q = an.qfi_time_series(params, t, method=config["method"],
                                   dense_threshold=int(config["dense_threshold"]),
                                   max_dimension=int(config["max_dimension"]))
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(t > 0, q / np.where(t > 0, t, 1.0) ** 2, np.nan)
            rows += [(U, h, tk, qk, rk) for tk, qk, rk in zip(t, q, ratio)]
            est = an.plateau((t, q), float(config["window"]), float(config["plateau_tolerance"]))
            entry = {"U": U, "h": h, "plateau": est.value, "spread": est.spread,
                     "accepted": est.accepted}
            if np.all(q[t >= (1 - float(config["window"])) * t[-1]] > 0):
                entry["time_exponent"] = _fit_dict(an.time_exponent(t, q, float(config["window"])))
            series.append(entry)
            if config["trajectory_states"]:
                _dump_trajectory(config, params, t, out)
    write_csv(out / "qfi_time.csv", ["U", "h", "t", "qfi", "qfi_over_t2"], rows)
    write_plot_script(out, "qfi_time", "qfi_time.csv", "normalised QFI against time")
    return {"series": series}


def _dump_trajectory(config: dict, params: ModelParams, t: np.ndarray, out: Path) -> None:
    basis = FockBasis(params.L, params.N)
    H = build_hamiltonian(params, basis)
    prop = make_propagator(H, method=config["method"], dense_threshold=int(config["dense_threshold"]))
    states = prop.evolve(an.initial_state_vector(basis), t)
    energies = np.einsum("ki,ki->k", states.conj(), (H @ states.T).T).real
    labels = [str(s) for s in config["trajectory_states"]]
    idx = [basis.rank(fock_from_string(s)) for s in labels]
    write_trajectory(out / f"trajectory_U{params.U:g}_h{params.h:g}.csv", t, states, energies,
                     idx, labels)


def _locate_hc(config: dict, L: int, N: int, U: float, opts: dict) -> an.CriticalPoint:
    grid = expand_grid(config["critical_grid"], "critical_grid")
    return an.critical_point(grid, L=L, N=N, U=U, J=float(config["J"]), **opts)


def cmd_scaling(config: dict, out: Path) -> dict:
    kind = config["kind"]
    opts = _options(config)
    J, U = float(config["J"]), float(config["U"])
    results: dict = {"kind": kind}
    if kind == "size":
        L_list = [int(x) for x in config["L_list"]]
        if len(L_list) < 4:
            raise ConfigError(f"L_list needs >= 4 sizes, got {L_list}")
        N = int(config["N"])
        for L in L_list:
            _guard(config, L, N)
        h = config["h"]
        if h == "critical":
            # h_c drifts with L; locate it at the median size of the fit
            L_ref = int(np.median(L_list))
            cp = _locate_hc(config, L_ref, N, U, opts)
            h = cp.h_c
            results["critical_point"] = {"L": L_ref, "h_c": cp.h_c, "at_boundary": cp.at_boundary}
        fit = an.size_scaling(L_list, N=N, U=U, h=float(h), J=J, **opts)
        xs, variable = L_list, "L"
    elif kind == "particle":
        N_list = [int(x) for x in config["N_list"]]
        if len(N_list) < 4:
            raise ConfigError(f"N_list needs >= 4 values, got {N_list}")
        L = int(config["L"])
        for N in N_list:
            _guard(config, L, N)
        h = config["h"]
        if h == "critical":
            cp = _locate_hc(config, L, int(config["N"]), U, opts)
            h = cp.h_c
            results["critical_point"] = {"L": L, "h_c": cp.h_c, "at_boundary": cp.at_boundary}
        fit = an.particle_scaling(N_list, L=L, U=U, h=float(h), J=J, **opts)
        xs, variable = N_list, "N"
    elif kind == "localized-h":
        L, N = int(config["L"]), int(config["N"])
        _guard(config, L, N)
        h_list = expand_grid(config["h_list"], "h_list")
        fit = an.localized_h_scaling(h_list, L=L, N=N, U=U, J=J, **opts)
        xs, variable, h = h_list, "h", None
    else:
        raise ConfigError(f"unknown scaling kind {kind!r}")
    results["h"] = h
    results["fit"] = _fit_dict(fit)
    by_x = dict(fit.points)
    rows = [(variable, x, by_x.get(float(x), float("nan"))) for x in xs]
    write_csv(out / "scaling.csv", ["variable", "x", "plateau"], rows)
    write_plot_script(out, "scaling", "scaling.csv", f"plateau against {variable}")
    return results


def cmd_critical_point(config: dict, out: Path) -> dict:
    L, N = int(config["L"]), int(config["N"])
    _guard(config, L, N)
    grid = expand_grid(config["h_grid"], "h_grid")
    cp = an.critical_point(grid, L=L, N=N, U=float(config["U"]), J=float(config["J"]),
                           **_options(config))
    write_csv(out / "critical_point.csv", ["h", "plateau"], zip(cp.h_grid, cp.plateaus))
    write_plot_script(out, "critical_point", "critical_point.csv", "plateau against tilt")
    failed = int(np.sum(~np.isfinite(cp.plateaus)))
    return {"h_c": cp.h_c, "peak_value": cp.peak_value, "at_boundary": cp.at_boundary,
            "failed_cells": failed}


def cmd_resonance(config: dict, out: Path) -> dict:
    L, N = int(config["L"]), int(config["N"])
    _guard(config, L, N)
    opts = _options(config)
    U_grid = expand_grid(config["U_grid"], "U_grid")
    h_grid = expand_grid(config["h_grid"], "h_grid")
    scan = an.resonance_scan(U_grid, h_grid, L=L, N=N, J=float(config["J"]), **opts)
    rows = scan.to_rows()
    header = ["U", "h", "L", "N", "plateau", "spread", "flag", "A_r"]
    write_csv(out / "resonance.csv", header, ([r[k] for k in header] for r in rows))
    write_plot_script(out, "resonance", "resonance.csv", "plateau and A_r over (U, h)")
    peaks = scan.peak_lines()
    step = scan.U_step
    lines = {}
    for m in config["m_values"]:
        for h, found in peaks.items():
            if scan.U_grid[0] < m * h < scan.U_grid[-1]:
                lines[f"m={m},h={h:g}"] = any(abs(u - m * h) <= step for u in found)
    results = {
        "peak_lines": {f"{h:g}": p for h, p in peaks.items()},
        "line_has_peak": lines,
        "failed_cells": len(scan.errors),
    }
    coef = config.get("coefficient")
    if coef:
        table = {}
        c_grid = expand_grid(coef.get("h_grid", h_grid), "coefficient.h_grid")
        for m in coef.get("m_values", [2, 4]):
            res = an.resonance_coefficient(c_grid, coef.get("N_list", [2, 3, 4]), int(m), L=L,
                                           J=float(config["J"]), **opts)
            table[str(m)] = {"h": c_grid, "A_r": {str(n): v for n, v in res.items()},
                             "n_spread": an.n_spread(res)}
        results["coefficient"] = table
    if scan.errors:
        results["errors"] = {f"{i},{j}": e for (i, j), e in scan.errors.items()}
    return results


def cmd_occupancy(config: dict, out: Path) -> dict:
    L, N, J, h = int(config["L"]), int(config["N"]), float(config["J"]), float(config["h"])
    _guard(config, L, N)
    basis = FockBasis(L, N)
    t = an.time_grid(float(config["horizon"]), float(config["dt"]))
    psi0 = an.initial_state_vector(basis)
    rows, summary = [], []
    for U in expand_grid(config["U_list"], "U_list"):
        H = build_hamiltonian(ModelParams(L, N, J, U, h), basis)
        prop = make_propagator(H, method=config["method"],
                               dense_threshold=int(config["dense_threshold"]))
        n_l, N_l = occupancy_series(prop.evolve(psi0, t), basis, t)
        for k, tk in enumerate(t):
            rows += [(U, h, tk, l, n_l[k, l], N_l[k, l]) for l in range(L)]
        total = N_l.sum(axis=1)
        summary.append({"U": U, "h": h, "mean_total_multi": float(total.mean()),
                        "max_total_multi": float(total.max()),
                        "max_sum_rule_error": float(np.max(np.abs(n_l.sum(axis=1) - N)))})
    write_csv(out / "occupancy.csv", ["U", "h", "t", "l", "n_l", "N_l"], rows)
    write_plot_script(out, "occupancy", "occupancy.csv", "site multiple occupancy against time")
    return {"initial_state": fock_to_string(basis.unrank(int(np.argmax(np.abs(psi0))))),
            "runs": summary}


def cmd_gravimetry(config: dict, out: Path) -> dict:
    L, h, m = int(config["L"]), float(config["h"]), int(config["m"])
    N_list = [int(n) for n in config["N_list"]]
    for N in N_list:
        _guard(config, L, N)
    try:
        setup = PhysicalSetup(**config["profile"])
    except TypeError as exc:
        valid = [f.name for f in fields(PhysicalSetup)]
        raise ConfigError(f"bad physical profile; fields are {valid}") from exc
    opts = _options(config)
    plateaus = []
    for N in N_list:
        est = an.NormalizedQFI(L=L, N=N, J=float(config["J"]), columns=("U", "h"), **opts).fit()
        off, res = est.transform([[float(config["U_off"]), h], [m * h, h]]).ravel()
        if not (np.isfinite(off) and np.isfinite(res)):
            raise CellFailure(f"plateau computation failed for N={N}")
        plateaus.append({"N": N, "plateau_off": off, "plateau_res": res, "A_r": res / off})
    table = sensitivity_table(setup, plateaus)
    for row, p in zip(table, plateaus):
        row.update(p)
    text = format_table(table)
    (out / "gravimetry.txt").write_text(text + "\n")
    write_csv(out / "gravimetry.csv", ["N", "plateau_off", "plateau_res", "A_r", "dg_g_off",
                                       "dg_g_res", "ratio"],
              ([r[k] for k in ("N", "plateau_off", "plateau_res", "A_r", "dg_g_off", "dg_g_res",
                               "ratio")] for r in table))
    print(text)
    return {"table": table, "profile": setup.to_dict(),
            "physical_tilt": gradient_from_g(setup), "J_over_ER": hubbard_J(setup)}


COMMANDS = {
    "qfi-time": cmd_qfi_time,
    "scaling": cmd_scaling,
    "resonance": cmd_resonance,
    "occupancy": cmd_occupancy,
    "gravimetry": cmd_gravimetry,
    "critical-point": cmd_critical_point,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="starkqfi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, help="JSON run configuration")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--horizon", type=float, default=None, help="evolution horizon in 1/J")
        p.add_argument("--window", type=float, default=None, help="plateau tail fraction")
        p.add_argument("--strict", action="store_true", help="exit 3 if any cell fails")
        p.add_argument("--dense-oracle", action="store_true",
                       help="force full diagonalisation for cross-checks")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args.command, args)
        out = Path(args.out or f"results/{args.command}")
        out.mkdir(parents=True, exist_ok=True)
        print(json.dumps(config, indent=2, sort_keys=True, default=str))
        results = COMMANDS[args.command](config, out)
    except an.DimensionCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (QfiError, an.InsufficientPointsError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, TypeError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PropagationError, CellFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_json(out / "summary.json", _summary(args.command, config, results))
    if args.strict and results.get("failed_cells"):
        print(f"{results['failed_cells']} cell(s) failed", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

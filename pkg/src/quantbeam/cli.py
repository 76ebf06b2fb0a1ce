"""Batch front-end: config parsing, solver dispatch, CSV/JSON artifacts.

Config files are JSON with physical quantities unit-suffixed in the key
names (power_dbm, gamma_db, theta_deg, p_lo_w).  Unknown keys anywhere are
an error: a typo should fail loudly, not silently fall back to a default.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible design,
4 solver failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import (
    DEFAULT_BITS,
    DEFAULT_GAMMA_DB,
    DEFAULT_N_RX,
    DEFAULT_N_TX,
    DEFAULT_N_USERS,
    DEFAULT_NOISE_DBM,
    DEFAULT_POWER_DBM,
    DEFAULT_REFLECT_DB,
    DEFAULT_SIGMA_G2_DB,
    DEFAULT_THETA_DEG,
    SystemConfig,
    db_to_lin,
    dbm_to_watt,
    lin_to_db,
)
from .conic import ConicSettings
from .errors import ConfigError, InfeasibleError, SolverError
from .metrics import PowerModel
from .mm import MMSettings
from .sim import (
    ALGORITHMS,
    ExperimentSpec,
    ee_sweep,
    roc_experiment,
    solve_robust,
    sweep,
    write_ee_csv,
    write_manifest,
    write_roc_csvs,
    write_sweep_csvs,
)
from .channel import generate_channels
from .quantization import INFINITE, build_profile

log = logging.getLogger("quantbeam")


# ---------------------------------------------------------------------------
# config schema


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _num(doc, key, default, where, allow_list=False):
    val = doc.get(key, default)
    ok_scalar = isinstance(val, (int, float)) and not isinstance(val, bool)
    if allow_list and isinstance(val, list):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
            return [float(v) for v in val]
        raise ConfigError(f"{where}.{key} list entries must be numbers")
    if not ok_scalar:
        raise ConfigError(f"{where}.{key} must be a number, got {val!r}")
    return float(val)


def _int(doc, key, default, where):
    val = doc.get(key, default)
    if not isinstance(val, (int,)) or isinstance(val, bool):
        raise ConfigError(f"{where}.{key} must be an integer, got {val!r}")
    return int(val)


def _bits_value(val, where):
    """Bit depths: positive integers or the string 'infinite', scalar or list."""
    if isinstance(val, str):
        if val.lower() == "infinite":
            return INFINITE
        raise ConfigError(f"{where} must be a positive integer or 'infinite', got {val!r}")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where} must be a positive integer or 'infinite', got {val!r}")
    return val


def _bits_entry(doc, key, default, where):
    val = doc.get(key, default)
    if isinstance(val, list):
        return [_bits_value(v, f"{where}.{key}[{i}]") for i, v in enumerate(val)]
    return _bits_value(val, f"{where}.{key}")


SYSTEM_KEYS = ("n_tx", "n_rx", "n_users", "power_dbm", "gamma_db",
               "noise_user_dbm", "noise_radar_dbm")
TARGET_KEYS = ("scenario", "theta_deg", "reflect_db", "sigma_g2_db", "trm")
BITS_KEYS = ("dac", "adc_bs", "adc_user")
EXPERIMENT_KEYS = ("axis", "grid", "trials", "snapshots", "seed", "algorithms",
                   "pfa_grid", "loading")
POWER_KEYS = ("p_lo_w", "p_rf_w", "c_dac_w", "c_adc_w", "kappa")
SOLVER_KEYS = ("eps_abs", "eps_rel", "max_iters", "eps_mm", "mm_max_iters")
TOP_KEYS = ("system", "target", "bits", "experiment", "power_model", "solver")


class RunConfig:
    """Parsed and validated run description with every default resolved."""

    def __init__(self, doc):
        _check_keys(doc, TOP_KEYS, "config")
        sys_doc = doc.get("system", {})
        _check_keys(sys_doc, SYSTEM_KEYS, "system")
        n_users = _int(sys_doc, "n_users", DEFAULT_N_USERS, "system")
        try:
            self.config = SystemConfig(
                n_tx=_int(sys_doc, "n_tx", DEFAULT_N_TX, "system"),
                n_rx=_int(sys_doc, "n_rx", DEFAULT_N_RX, "system"),
                n_users=n_users,
                power=float(dbm_to_watt(_num(sys_doc, "power_dbm", DEFAULT_POWER_DBM, "system"))),
                gamma=db_to_lin(np.asarray(_num(sys_doc, "gamma_db", DEFAULT_GAMMA_DB, "system",
                                                allow_list=True))),
                sigma_user2=dbm_to_watt(np.asarray(_num(sys_doc, "noise_user_dbm",
                                                        DEFAULT_NOISE_DBM, "system",
                                                        allow_list=True))),
                sigma_radar2=float(dbm_to_watt(_num(sys_doc, "noise_radar_dbm",
                                                    DEFAULT_NOISE_DBM, "system"))),
            )
        except ValueError as exc:  # per-user vector lengths must match n_users
            raise ConfigError(f"system section invalid: {exc}")

        tgt = doc.get("target", {})
        _check_keys(tgt, TARGET_KEYS, "target")
        scenario = tgt.get("scenario", "point")
        trm = None
        if "trm" in tgt:
            pair = tgt["trm"]
            try:
                trm = np.asarray(pair[0], dtype=float) + 1j * np.asarray(pair[1], dtype=float)
            except (TypeError, ValueError, IndexError):
                raise ConfigError("target.trm must be a [real, imag] matrix pair")

        bits_doc = doc.get("bits", {})
        _check_keys(bits_doc, BITS_KEYS, "bits")

        exp = doc.get("experiment", {})
        _check_keys(exp, EXPERIMENT_KEYS, "experiment")
        grid = exp.get("grid")
        if grid is not None:
            if not isinstance(grid, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in grid
            ):
                raise ConfigError("experiment.grid must be a list of numbers")
            if not grid:
                raise ConfigError("experiment.grid must be nonempty")
        algorithms = exp.get("algorithms", ["robust"])
        if not isinstance(algorithms, list) or not all(isinstance(a, str) for a in algorithms):
            raise ConfigError("experiment.algorithms must be a list of names")
        loading = exp.get("loading", 3.0)
        if loading != "calibrated":
            loading = _num(exp, "loading", 3.0, "experiment")
        pfa = exp.get("pfa_grid", [0.01, 0.05, 0.1, 0.3])
        if not isinstance(pfa, list):
            raise ConfigError("experiment.pfa_grid must be a list")
        self.seed = _int(exp, "seed", 0, "experiment")
        self.spec_kwargs = dict(
            scenario=scenario,
            theta_deg=_num(tgt, "theta_deg", DEFAULT_THETA_DEG, "target"),
            reflect_db=_num(tgt, "reflect_db", DEFAULT_REFLECT_DB, "target"),
            sigma_g2_db=_num(tgt, "sigma_g2_db", DEFAULT_SIGMA_G2_DB, "target"),
            trm=trm,
            dac_bits=_bits_entry(bits_doc, "dac", DEFAULT_BITS, "bits"),
            adc_bs_bits=_bits_entry(bits_doc, "adc_bs", DEFAULT_BITS, "bits"),
            adc_user_bits=_bits_entry(bits_doc, "adc_user", DEFAULT_BITS, "bits"),
            axis=exp.get("axis", "gamma_db"),
            grid=tuple(grid) if grid is not None else None,
            trials=_int(exp, "trials", 2000, "experiment"),
            snapshots=_int(exp, "snapshots", 64, "experiment"),
            algorithms=tuple(algorithms),
            pfa_grid=tuple(pfa),
            loading=loading,
        )

        pm = doc.get("power_model", {})
        _check_keys(pm, POWER_KEYS, "power_model")
        self.power_model = PowerModel(
            p_lo=_num(pm, "p_lo_w", PowerModel.p_lo, "power_model"),
            p_rf=_num(pm, "p_rf_w", PowerModel.p_rf, "power_model"),
            c_dac=_num(pm, "c_dac_w", PowerModel.c_dac, "power_model"),
            c_adc=_num(pm, "c_adc_w", PowerModel.c_adc, "power_model"),
            kappa=_num(pm, "kappa", PowerModel.kappa, "power_model"),
        )
        if not 0.0 < self.power_model.kappa <= 1.0:
            raise ConfigError("power_model.kappa must lie in (0, 1]")

        sv = doc.get("solver", {})
        _check_keys(sv, SOLVER_KEYS, "solver")
        self.conic = ConicSettings(
            eps_abs=_num(sv, "eps_abs", 1e-8, "solver"),
            eps_rel=_num(sv, "eps_rel", 1e-8, "solver"),
            max_iters=_int(sv, "max_iters", 100000, "solver"),
        )
        self.mm = MMSettings(
            eps_mm=_num(sv, "eps_mm", 1e-4, "solver"),
            max_iters=_int(sv, "mm_max_iters", 50, "solver"),
            conic=self.conic,
        )
        self.doc = doc

    def spec(self, need_grid=False, seed=None, algorithms=None, force_mm=False):
        kw = dict(self.spec_kwargs)
        if kw["grid"] is None:
            if need_grid:
                raise ConfigError("this command requires experiment.grid")
            kw["grid"] = ()
        kw["seed"] = self.seed if seed is None else int(seed)
        if algorithms:
            kw["algorithms"] = tuple(algorithms)
        kw["force_mm"] = force_mm
        return ExperimentSpec(**kw)

    def resolved_doc(self, seed):
        """Canonical document for hashing: input config plus the active seed."""
        doc = json.loads(json.dumps(self.doc))
        doc.setdefault("experiment", {})["seed"] = int(seed)
        return doc


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    return RunConfig(doc)


# ---------------------------------------------------------------------------
# commands


def _out_dir(args):
    path = args.out_dir or "."
    os.makedirs(path, exist_ok=True)
    return path


def cmd_solve(args):
    rc = load_config(args.config) if args.config else RunConfig({})
    seed = rc.seed if args.seed is None else args.seed
    spec = rc.spec(seed=seed, force_mm=args.force_mm)
    channels = generate_channels(rc.config, spec.target(), spec.seed)
    profile = build_profile(spec.bit_allocation(rc.config))
    log.info("solve: %d tx, %d rx, %d users, seed %d", rc.config.n_tx, rc.config.n_rx,
             rc.config.n_users, spec.seed)
    sol = solve_robust(rc.config, channels, profile, conic_settings=rc.conic,
                       mm_settings=rc.mm, force_mm=args.force_mm)
    sol.solver_info.pop("raw", None)
    sol.solver_info.pop("trace", None)

    out = os.path.join(_out_dir(args), "solution.json")
    sol.save(out)
    sq_db = lin_to_db(np.asarray(sol.sqinr_per_user)) if rc.config.n_users else np.zeros(0)
    print(f"solver:     {sol.solver_info.get('solver')} ({sol.solver_info.get('status')})")
    print(f"objective:  {sol.objective_value:.6g}")
    print(f"radar sqnr: {lin_to_db(sol.radar_sqnr):.4f} dB")
    for k, v in enumerate(sq_db):
        print(f"sqinr[{k}]:   {v:.4f} dB")
    print(f"iterations: {sol.solver_info.get('iterations')}")
    print(f"wrote {out}")
    return 0


def _run_artifact_cmd(args, runner):
    rc = load_config(args.config) if args.config else RunConfig({})
    seed = rc.seed if args.seed is None else args.seed
    algorithms = args.algorithms.split(",") if args.algorithms else None
    out = _out_dir(args)
    log.info("%s: seed %d, algorithms %s", args.command, seed,
             ",".join(algorithms) if algorithms else "from config")
    paths = runner(rc, seed, algorithms, out, args)
    write_manifest(out, rc.resolved_doc(seed), seed, paths)
    for p in paths:
        print(f"wrote {p}")
    print(f"wrote {os.path.join(out, 'manifest.json')}")
    return 0


def cmd_sweep(args):
    def runner(rc, seed, algorithms, out, args):
        spec = rc.spec(need_grid=True, seed=seed, algorithms=algorithms,
                       force_mm=args.force_mm)
        rows = sweep(spec, config=rc.config, conic_settings=rc.conic, mm_settings=rc.mm)
        return write_sweep_csvs(rows, spec.axis, out, prefix=f"sweep_{spec.axis}")
    return _run_artifact_cmd(args, runner)


def cmd_roc(args):
    def runner(rc, seed, algorithms, out, args):
        spec = rc.spec(seed=seed, algorithms=algorithms, force_mm=args.force_mm)
        result = roc_experiment(spec, config=rc.config, conic_settings=rc.conic,
                                mm_settings=rc.mm, threads=args.threads)
        return write_roc_csvs(result, out)
    return _run_artifact_cmd(args, runner)


def cmd_ee(args):
    def runner(rc, seed, algorithms, out, args):
        spec = rc.spec(need_grid=True, seed=seed, algorithms=algorithms,
                       force_mm=args.force_mm)
        rows = ee_sweep(spec, config=rc.config, power_model=rc.power_model,
                        conic_settings=rc.conic, mm_settings=rc.mm)
        return write_ee_csv(rows, out)
    return _run_artifact_cmd(args, runner)


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quantbeam",
        description="Robust sensing/communication beamforming under coarse quantization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, blurb in (
        ("solve", cmd_solve, "design beamformers for one configuration"),
        ("sweep", cmd_sweep, "solve along a grid (SQINR floor, power, antennas)"),
        ("roc", cmd_roc, "detection trials through the true quantizer chain"),
        ("ee", cmd_ee, "energy efficiency versus shared converter depth"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", help="JSON run configuration (defaults apply if omitted)")
        p.add_argument("--out-dir", help="artifact directory (default: current)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--force-mm", action="store_true",
                       help="use the iterative solver even when the exact path applies")
        p.add_argument("--algorithms", help=f"comma-separated subset of {'/'.join(ALGORITHMS)}")
        p.add_argument("--threads", type=int, default=os.cpu_count(),
                       help="worker threads for Monte-Carlo trials")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    level = os.environ.get("QUANTBEAM_LOG", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"error: infeasible design: {exc}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

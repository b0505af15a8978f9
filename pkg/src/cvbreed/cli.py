"""Batch command-line front end.

Scenario configs go in as flat key = value text (a TOML-compatible subset),
machine-readable CSV curves come out; every row echoes a hash of the resolved
config so outputs are traceable.  Commands: breed, comb, chsh, sweep,
selftest.  Exit codes: 0 success, 2 config error, 3 numerical-guard failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import GuardError, SimulationError
from .qgrid import make_grid
from . import selftest as selftest_mod


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Config parsing: flat "key = value" lines, # comments, scalar or [a, b] lists
# ---------------------------------------------------------------------------

def _parse_scalar(tok: str, path: str, line_no: int):
    tok = tok.strip()
    if tok.lower() in ("true", "false"):
        return tok.lower() == "true"
    if len(tok) >= 2 and tok[0] == tok[-1] and tok[0] in "'\"":
        return tok[1:-1]
    try:
        if any(c in tok for c in ".eE") and not tok.lstrip("+-").isdigit():
            return float(tok)
        return int(tok)
    except ValueError:
        try:
            return float(tok)
        except ValueError:
            raise ConfigError(f"{path}:{line_no}: cannot parse value {tok!r}")


def parse_config_text(text: str, path: str = "<config>") -> dict:
    out: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if not key:
            raise ConfigError(f"{path}:{line_no}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
        if val.startswith("["):
            if not val.endswith("]"):
                raise ConfigError(f"{path}:{line_no}: unterminated list")
            body = val[1:-1].strip()
            out[key] = [] if not body else [
                _parse_scalar(tok, path, line_no) for tok in _split_list(body, path, line_no)]
        else:
            out[key] = _parse_scalar(val, path, line_no)
    return out


def _split_list(body: str, path: str, line_no: int) -> list[str]:
    """Split on commas that are not inside quotes."""
    toks, cur, quote = [], [], None
    for ch in body:
        if quote:
            cur.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            cur.append(ch)
            quote = ch
        elif ch == ",":
            toks.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if quote:
        raise ConfigError(f"{path}:{line_no}: unterminated string in list")
    toks.append("".join(cur))
    return [t for t in toks if t.strip()]


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(p.read_text(), str(path))


def resolve(cfg: dict, schema: dict, command: str) -> dict:
    """Apply defaults and reject unknown keys."""
    common = {"grid_points": 1024, "grid_xmax": 12.0, "out": None,
              "json": False, "threads": 1, "seed": 0, "plot": False}
    merged_schema = dict(common)
    merged_schema.update(schema)
    resolved = dict(merged_schema)
    for key, val in cfg.items():
        if key not in merged_schema:
            raise ConfigError(f"unknown config key {key!r} for command {command!r}")
        resolved[key] = val
    return resolved


EXECUTION_KEYS = ("out", "json", "threads", "plot")


def config_hash(resolved: dict) -> str:
    """Hash of the scenario content; execution details (output path, thread
    count, mirrors) do not change what is computed and stay out of it."""
    text = "\n".join(f"{k} = {resolved[k]!r}" for k in sorted(resolved)
                     if k not in EXECUTION_KEYS)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    s = str(v)
    if "," in s or '"' in s:
        return '"' + s.replace('"', '""') + '"'
    return s


def write_rows(path: str, columns: list[str], rows: list[dict],
               mirror_json: bool, header_kv: dict) -> None:
    lines = [f"# {k} = {v}" for k, v in header_kv.items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")
    if mirror_json:
        jpath = str(Path(path).with_suffix(".json"))
        Path(jpath).write_text(json.dumps({"header": header_kv, "rows": rows},
                                          indent=1, sort_keys=True, default=float) + "\n")


def _run_tasks(tasks, threads: int):
    if threads <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [pool.submit(t) for t in tasks]
        return [f.result() for f in futs]


# ---------------------------------------------------------------------------
# breed: cat-breeding curves (fidelity vs success probability)
# ---------------------------------------------------------------------------

BREED_SCHEMA = {
    "p_list": [1, 2, 3, 4, 5],
    "dx1_list": [0.1, 0.2, 0.3, 0.4, 0.6],
    "ratio": 1.3,
    "n": 0,             # nonzero: breed this photon number instead of 2^p
}


def cmd_breed(resolved: dict) -> tuple[list[str], list[dict]]:
    from .breeding import Schedule, breed_cat, breed_n, cat_plan, fit_nearest_scs

    grid = make_grid(resolved["grid_xmax"], resolved["grid_points"])
    dx1_list = resolved["dx1_list"]
    if not dx1_list:
        raise ConfigError("dx1_list must not be empty")
    p_list = [0] if resolved["n"] else resolved["p_list"]
    if not p_list:
        raise ConfigError("p_list must not be empty")

    def one(p: int, dx1: float):
        schedule = Schedule.geometric(dx1, resolved["ratio"])
        if resolved["n"]:
            n = int(resolved["n"])
            state, ledger = breed_n(n, schedule, grid)
        else:
            n = 2 ** p
            state, ledger = breed_cat(cat_plan(p, schedule, grid), grid)
        fit = fit_nearest_scs(state, seed=(math.sqrt(n), math.sqrt(2.0)))
        return {
            "p": p if not resolved["n"] else int(resolved["n"]).bit_length(),
            "n": n,
            "dx1": dx1,
            "fidelity": fit.fidelity,
            "p_succ": ledger.p_succ,
            "alpha_fit": fit.params["alpha"],
            "s_prime_fit": fit.params["s_prime"],
        }

    tasks = [(p, dx1) for p in p_list for dx1 in dx1_list]
    rows = _run_tasks([lambda p=p, d=d: one(p, d) for p, d in tasks], resolved["threads"])
    rows.sort(key=lambda r: (r["p"], r["dx1"]))
    cols = ["p", "n", "dx1", "fidelity", "p_succ", "alpha_fit", "s_prime_fit"]
    return cols, rows


# ---------------------------------------------------------------------------
# comb: comb-breeding curves
# ---------------------------------------------------------------------------

COMB_SCHEMA = {
    "p_prime_list": [1, 2, 3],
    "dx1_list": [0.05, 0.1, 0.2],
    "ratio": 1.3,
    "s_prime": 0.5,
    "cat_p": 5,             # breeding depth of the input cat (alpha = 2^(p/2))
    "input": "analytic",    # "analytic" or "bred" input cat
}


def cmd_comb(resolved: dict) -> tuple[list[str], list[dict]]:
    from .breeding import Schedule, breed_cat, breed_comb, cat_plan, fit_nearest_comb
    from .qgrid import kernel_to_momentum
    from .optics import squeeze
    from .states import CatParams, squeezed_cat_shifted

    grid = make_grid(resolved["grid_xmax"], resolved["grid_points"])
    if not resolved["dx1_list"]:
        raise ConfigError("dx1_list must not be empty")
    if resolved["input"] not in ("analytic", "bred"):
        raise ConfigError("input must be 'analytic' or 'bred'")
    sp = resolved["s_prime"]
    alpha = 2.0 ** (resolved["cat_p"] / 2.0)
    a0 = math.pi / (math.sqrt(2.0) * sp * alpha)

    def input_cat(schedule):
        from .breeding import ResourceLedger
        from .qgrid import resample_kernel
        if resolved["input"] == "analytic":
            return squeezed_cat_shifted(CatParams("even", alpha, sp), grid), ResourceLedger.unit()
        state, ledger = breed_cat(cat_plan(resolved["cat_p"], schedule, grid), grid)
        # rotate the bred peak cat into the wave form, bring it back onto the
        # working grid, and rescale the envelope from 1/sqrt(2) to s'
        rotated = resample_kernel(kernel_to_momentum(state), grid)
        lam = math.sqrt(2.0) * sp
        return squeeze(rotated, lam), ledger

    def one(pp: int, dx1: float):
        schedule = Schedule.geometric(dx1, resolved["ratio"])
        cat, led0 = input_cat(schedule)
        state, ledger = breed_comb(pp, cat, a0, schedule, grid, input_ledger=led0)
        a_pred = a0 * 2.0 ** (pp / 2.0)
        fit = fit_nearest_comb(state, seed=(a_pred, a0 / math.pi, sp))
        return {
            "p_prime": pp,
            "dx1": dx1,
            "fidelity": fit.fidelity,
            "p_succ": ledger.p_succ,
            "a_fit": fit.params["a"],
            "s_fit": fit.params["s"],
            "s_prime_fit": fit.params["s_prime"],
            "condition_ok": fit.params["condition_ok"],
        }

    tasks = [(pp, d) for pp in resolved["p_prime_list"] for d in resolved["dx1_list"]]
    rows = _run_tasks([lambda pp=pp, d=d: one(pp, d) for pp, d in tasks], resolved["threads"])
    rows.sort(key=lambda r: (r["p_prime"], r["dx1"]))
    cols = ["p_prime", "dx1", "fidelity", "p_succ", "a_fit", "s_fit",
            "s_prime_fit", "condition_ok"]
    return cols, rows


# ---------------------------------------------------------------------------
# chsh: S and correlators vs transmission, with crossing search
# ---------------------------------------------------------------------------

CHSH_SCHEMA = {
    "configs": ["3,0", "6,2"],
    "theta": -math.pi / 4.0,
    "t_list": [1.0, 0.95, 0.9, 0.85, 0.8, 0.75],
    "presqueeze": True,
    "find_crossing": True,
    "frames": ["generation", "unsqueezed"],  # emitted when presqueeze = false
    "mod_width": 0.0,        # 0 = tight double herald
    "ledger": False,         # compose the full resource ledger (slower)
    "breed_dx1": 0.1,
    "breed_ratio": 1.3,
}


def cmd_chsh(resolved: dict) -> tuple[list[str], list[dict]]:
    from .bell import (chsh, find_crossing, run_pipeline, standard_config,
                       compose_pipeline_ledger, pipeline_resource_parts,
                       _noise_pair)
    from .breeding import Schedule
    from .optics import LossChannel

    grid = make_grid(resolved["grid_xmax"], resolved["grid_points"])
    t_list = resolved["t_list"]
    if not t_list:
        raise ConfigError("t_list must not be empty")
    if any(not (0.0 < t <= 1.0) for t in t_list):
        raise ConfigError("every transmission in t_list must lie in (0, 1]")
    rows = []
    for label in resolved["configs"]:
        cfg = standard_config(str(label), theta=resolved["theta"])
        width = resolved["mod_width"] or None
        pr = run_pipeline(cfg, grid, modulation_width=width)
        p_succ = float("nan")
        if resolved["ledger"]:
            schedule = Schedule.geometric(resolved["breed_dx1"], resolved["breed_ratio"])
            parts = pipeline_resource_parts(cfg, grid, schedule)
            p_succ = compose_pipeline_ledger(parts, pr.p_subtract, pr.p_modulation).p_succ
        crossing = float("nan")
        if resolved["find_crossing"]:
            crossing = find_crossing(pr.state, pr.binning,
                                     resolved["presqueeze"], cfg.theta)

        def emit(t: float, res, frame: str):
            rows.append({
                "config": cfg.label, "frame": frame, "T": t,
                "theta": cfg.theta, "S": res.s_value,
                "corr_xx": res.corr_xx, "corr_xp": res.corr_xp,
                "corr_px": res.corr_px, "corr_pp": res.corr_pp,
                "presqueeze": res.presqueeze,
                "p_succ": p_succ, "crossing_T": crossing,
            })

        for t in t_list:
            if resolved["presqueeze"]:
                if t < 1.0:
                    from .bell import _optimize_presqueeze
                    res = _optimize_presqueeze(pr.state, pr.binning, t, cfg.theta)
                else:
                    res = chsh(pr.state, pr.binning, theta=cfg.theta)
                emit(t, res, "optimized")
            else:
                for frame in resolved["frames"]:
                    if frame == "generation":
                        lam = 1.0
                    elif frame == "unsqueezed":
                        lam = 1.0 / cfg.s_prime
                    else:
                        raise ConfigError(f"unknown frame {frame!r}")
                    if t < 1.0:
                        nx, np_ = _noise_pair(t, lam)
                        res = chsh(pr.state, pr.binning, LossChannel(t), cfg.theta,
                                   noise_x=nx, noise_p=np_, presqueeze=lam)
                    else:
                        res = chsh(pr.state, pr.binning, theta=cfg.theta, presqueeze=lam)
                    emit(t, res, frame)
    rows.sort(key=lambda r: (r["config"], r["frame"], -r["T"]))
    cols = ["config", "frame", "T", "theta", "S", "corr_xx", "corr_xp",
            "corr_px", "corr_pp", "presqueeze", "p_succ", "crossing_T"]
    return cols, rows


# ---------------------------------------------------------------------------
# sweep: (S, P_succ) locus over the modulation window width, plus theta scan
# ---------------------------------------------------------------------------

SWEEP_SCHEMA = {
    "configs": ["3,0", "6,2"],
    "theta": -math.pi / 4.0,
    "mod_dx_list": [0.05, 0.15, 0.3],
    "sweep_mode": "common",  # scale all heralding windows together, or
    "theta_points": 0,       # "modulation": sweep only the modulation window
    "breed_dx1": 0.1,
    "breed_ratio": 1.3,
}


def cmd_sweep(resolved: dict) -> tuple[list[str], list[dict]]:
    from .bell import pipeline_success, standard_config
    from .breeding import Schedule

    grid = make_grid(resolved["grid_xmax"], resolved["grid_points"])
    if not resolved["mod_dx_list"] and not resolved["theta_points"]:
        raise ConfigError("mod_dx_list must not be empty")
    if resolved["sweep_mode"] not in ("common", "modulation"):
        raise ConfigError("sweep_mode must be 'common' or 'modulation'")
    schedule = Schedule.geometric(resolved["breed_dx1"], resolved["breed_ratio"])
    rows = []
    for label in resolved["configs"]:
        cfg = standard_config(str(label), theta=resolved["theta"])
        for r in pipeline_success(cfg, grid, resolved["mod_dx_list"], schedule,
                                  common_sweep=resolved["sweep_mode"] == "common"):
            r["kind"] = "locus"
            r["theta"] = cfg.theta
            rows.append(r)
        if resolved["theta_points"]:
            from .bell import theta_scan
            thetas = np.linspace(-math.pi, math.pi, int(resolved["theta_points"]))
            for th, res in zip(thetas, theta_scan(cfg, grid, thetas)):
                rows.append({"kind": "theta", "config": cfg.label,
                             "mod_width": grid.dx, "theta": float(th),
                             "s_value": res.s_value, "p_succ": float("nan"),
                             "p_modulation": float("nan"),
                             "p_subtract": float("nan"),
                             "expected_resources": float("nan"),
                             "minimal_resources": float("nan")})
    rows.sort(key=lambda r: (r["kind"], r["config"], r["mod_width"], r["theta"]))
    cols = ["kind", "config", "mod_width", "theta", "s_value", "p_succ",
            "p_modulation", "p_subtract", "expected_resources", "minimal_resources"]
    return cols, rows


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "breed": (BREED_SCHEMA, cmd_breed),
    "comb": (COMB_SCHEMA, cmd_comb),
    "chsh": (CHSH_SCHEMA, cmd_chsh),
    "sweep": (SWEEP_SCHEMA, cmd_sweep),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cvbreed",
                                 description="heralded cat/comb breeding and CHSH curves")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value config file")
        p.add_argument("--out", default=None, help="output CSV path")
        p.add_argument("--json", action="store_true", help="also write a JSON mirror")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--grid-points", type=int, default=None)
        p.add_argument("--grid-xmax", type=float, default=None)
        p.add_argument("--plot", action="store_true",
                       help="render a PNG next to the CSV")
    p = sub.add_parser("selftest")
    p.add_argument("--grid-points", type=int, default=1024)
    p.add_argument("--grid-xmax", type=float, default=12.0)
    p.add_argument("--tamper-fourier", action="store_true",
                   help="test hook: flip the transform sign to confirm the guard trips")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            ok = selftest_mod.run_selftest(args.grid_points, args.grid_xmax,
                                           fourier_sign=-1.0 if args.tamper_fourier else 1.0)
            return 0 if ok else 3
        schema, fn = COMMANDS[args.command]
        cfg = load_config(args.config)
        for flag in ("out", "json", "threads", "grid_points", "grid_xmax", "plot"):
            v = getattr(args, flag)
            if v not in (None, False):
                cfg[flag] = v
        resolved = resolve(cfg, schema, args.command)
        cols, rows = fn(resolved)
        h = config_hash(resolved)
        for row in rows:
            row["config_hash"] = h
        cols = cols + ["config_hash"]
        out = resolved["out"] or f"cvbreed_{args.command}.csv"
        write_rows(out, cols, rows, resolved["json"], {"command": args.command,
                                                       "config_hash": h})
        if resolved["plot"]:
            from . import plots
            plots.render(args.command, out, cols, rows)
        print(f"wrote {out} ({len(rows)} rows)")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (GuardError,) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return 3
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

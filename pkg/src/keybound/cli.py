"""Scenario runner.

Selects a built-in protocol scenario (or loads a custom problem from a JSON
config), sweeps one parameter, runs the dual solver (optionally the primal
oracle as well) at every point, and writes curve data as CSV or JSON lines.

Angles are degrees on the command line and in config files, radians
internally.  Output rows are ordered by sweep index no matter how the
per-point solves are scheduled, and identical invocations with the same
seed produce identical numbers (the wall-time column aside).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dual import DualSolverError, SolverOptions, key_rate_from_theta, maximize_theta
from .entropy import binary_entropy, fano_bound
from .operators import HermitianOperator
from .postselect import effective_constraints
from .primal import (
    OracleOptions,
    PrimalConvergenceError,
    PrimalInfeasibleError,
    solve_primal,
)
from .protocols import (
    ConstraintSet,
    KeyMapPOVM,
    KeyRateProblem,
    build_b92,
    build_bb84,
    build_mdi_bb84,
    build_n_mub,
    build_rotated,
    build_six_state,
    build_two_mub,
)

__all__ = [
    "SweepSpec",
    "CustomProblemConfig",
    "ConfigError",
    "run_scenario",
    "run_custom",
    "main",
]

CSV_COLUMNS = (
    "param",
    "theta_nats",
    "k_dual_bits",
    "k_primal_bits",
    "k_theory_bits",
    "p_pass",
    "seconds",
)

_INTEGER_PARAMS = {"n", "d"}
_SWEEPABLE = {"q", "theta", "p", "n", "d"}


class ConfigError(ValueError):
    """Invalid CLI arguments or custom-problem config (exit code 2)."""


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter: name and an inclusive start:stop:step grid."""

    param: str
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if self.param not in _SWEEPABLE:
            raise ConfigError(f"unknown sweep parameter {self.param!r}")
        if not self.step > 0:
            raise ConfigError("sweep step must be positive")
        if self.start > self.stop:
            raise ConfigError("sweep start must not exceed stop")
        if self.param in _INTEGER_PARAMS:
            for v in (self.start, self.stop, self.step):
                if v != int(v):
                    raise ConfigError(f"parameter {self.param!r} needs integer steps")

    def values(self) -> list:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        vals = [self.start + k * self.step for k in range(count)]
        if self.param in _INTEGER_PARAMS:
            vals = [int(v) for v in vals]
        return vals


#: scenario name -> (defaults, builder from params dict, primary param)
_SCENARIOS = {
    "bb84": ({"q": 0.05}, lambda p: build_bb84(p["q"]), "q"),
    "six-state": ({"q": 0.05}, lambda p: build_six_state(p["q"]), "q"),
    "two-mub": (
        {"d": 3, "q": 0.05},
        lambda p: build_two_mub(int(p["d"]), p["q"]),
        "q",
    ),
    "n-mub": (
        {"d": 3, "n": 2, "q": 0.05},
        lambda p: build_n_mub(int(p["d"]), int(p["n"]), p["q"]),
        "q",
    ),
    "rotated": (
        {"theta": 0.0, "q": 0.01, "level": 4},
        lambda p: build_rotated(math.radians(p["theta"]), p["q"], int(p["level"])),
        "q",
    ),
    "b92": (
        {"theta": 50.0, "p": 0.0},
        lambda p: build_b92(math.radians(p["theta"]), p["p"]),
        "theta",
    ),
    "mdi-bb84": (
        {"q": 0.05, "pz": 0.99},
        lambda p: build_mdi_bb84(p["q"], p["pz"]),
        "q",
    ),
}


def _theory_rate(scenario: str, params: dict) -> Optional[float]:
    if scenario in ("bb84", "mdi-bb84"):
        return max(0.0, 1.0 - 2.0 * binary_entropy(params["q"]))
    return None


@dataclass(frozen=True)
class _RunOptions:
    starts: int = 8
    seed: int = 0
    tol: float = 1e-9
    oracle: bool = False
    jobs: int = 1


def _solve_point(problem: KeyRateProblem, solver_opts: SolverOptions, oracle: bool) -> dict:
    t0 = time.perf_counter()
    dual = maximize_theta(problem, solver_opts)
    k_primal = None
    if oracle:
        _, p_pass, _ = effective_constraints(problem)
        pres = solve_primal(problem, OracleOptions())
        k_primal = max(0.0, p_pass * (pres.value - problem.hzazb))
    if problem.postselect is None:
        p_pass = float(problem.p_pass or 1.0)
    else:
        _, p_pass, _ = effective_constraints(problem)
    return {
        "theta_nats": dual.theta,
        "k_dual_bits": dual.key_rate,
        "k_primal_bits": k_primal,
        "p_pass": p_pass,
        "seconds": time.perf_counter() - t0,
    }


def run_scenario(
    name: str,
    sweep: Optional[SweepSpec],
    opts: _RunOptions,
    fixed: Optional[dict] = None,
) -> list:
    """One row (dict) per sweep point, ordered by sweep index."""
    if name not in _SCENARIOS:
        raise ConfigError(
            f"unknown scenario {name!r}; choose from {', '.join(sorted(_SCENARIOS))}"
        )
    defaults, builder, primary = _SCENARIOS[name]
    params = dict(defaults)
    for key, val in (fixed or {}).items():
        if key not in params:
            raise ConfigError(f"scenario {name!r} has no parameter {key!r}")
        params[key] = int(val) if key in _INTEGER_PARAMS or key == "level" else float(val)
    if sweep is not None:
        if sweep.param not in params:
            raise ConfigError(f"scenario {name!r} has no parameter {sweep.param!r}")
        points = [(v, {**params, sweep.param: v}) for v in sweep.values()]
    else:
        points = [(params[primary], params)]

    seeds = np.random.SeedSequence(opts.seed).generate_state(len(points), np.uint64)

    def work(item):
        (value, p), seed = item
        problem = builder(p)
        row = _solve_point(problem, SolverOptions(opts.starts, int(seed), opts.tol), opts.oracle)
        row["param"] = value
        row["k_theory_bits"] = _theory_rate(name, p)
        return row

    if opts.jobs > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=opts.jobs) as pool:
            rows = list(pool.map(work, zip(points, seeds)))
    else:
        rows = [work(item) for item in zip(points, seeds)]
    return rows


# ---------------------------------------------------------------------------
# custom problems
# ---------------------------------------------------------------------------


def _parse_matrix(obj, where: str, dim: int) -> np.ndarray:
    """Complex matrix from nested row-major [re, im] pairs."""
    if not isinstance(obj, list) or len(obj) != dim:
        raise ConfigError(f"{where}: expected {dim} rows")
    out = np.zeros((dim, dim), dtype=complex)
    for i, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != dim:
            raise ConfigError(f"{where}, row {i}: expected {dim} entries")
        for j, cell in enumerate(row):
            if (
                not isinstance(cell, list)
                or len(cell) != 2
                or not all(isinstance(x, (int, float)) for x in cell)
            ):
                raise ConfigError(f"{where}, row {i}, col {j}: expected [re, im]")
            out[i, j] = complex(cell[0], cell[1])
    return out


def _encode_matrix(m: np.ndarray) -> list:
    return [[[float(c.real), float(c.imag)] for c in row] for row in np.asarray(m, complex)]


@dataclass(frozen=True)
class CustomProblemConfig:
    """Parsed custom-problem description; see :meth:`from_dict` for the schema."""

    dim_a: int
    dim_b: int
    dim_m: int
    keymap: tuple
    constraint_ops: tuple
    constraint_vals: tuple
    hzazb: float
    kraus: Optional[np.ndarray] = None
    p_pass: Optional[float] = None

    @classmethod
    def from_dict(cls, doc: dict) -> "CustomProblemConfig":
        if not isinstance(doc, dict):
            raise ConfigError("top level must be a JSON object")
        try:
            dim_a = int(doc["dim_a"])
            dim_b = int(doc["dim_b"])
        except KeyError as exc:
            raise ConfigError(f"missing required field {exc.args[0]!r}") from None
        dim_m = int(doc.get("dim_m", 1))
        total = dim_a * dim_b * dim_m
        if "keymap" not in doc or not isinstance(doc["keymap"], list):
            raise ConfigError("field 'keymap': expected a list of matrices")
        keymap = tuple(
            _parse_matrix(m, f"keymap[{i}]", dim_a) for i, m in enumerate(doc["keymap"])
        )
        if "constraints" not in doc or not isinstance(doc["constraints"], list):
            raise ConfigError("field 'constraints': expected a list")
        ops, vals = [], []
        for i, entry in enumerate(doc["constraints"]):
            if not isinstance(entry, dict) or "operator" not in entry or "value" not in entry:
                raise ConfigError(f"constraints[{i}]: need 'operator' and 'value'")
            ops.append(_parse_matrix(entry["operator"], f"constraints[{i}].operator", total))
            vals.append(float(entry["value"]))
        hz = doc.get("hzazb")
        if not isinstance(hz, dict) or "mode" not in hz:
            raise ConfigError("field 'hzazb': expected {'mode': 'fano'|'explicit', ...}")
        if hz["mode"] == "explicit":
            hzazb = float(hz["value"])
        elif hz["mode"] == "fano":
            hzazb = fano_bound(float(hz["error_rate"]), int(hz.get("alphabet", dim_a)))
        else:
            raise ConfigError(f"hzazb mode {hz['mode']!r} unknown (fano|explicit)")
        kraus = None
        if "kraus" in doc:
            kraus = _parse_matrix(doc["kraus"], "kraus", total)
        p_pass = float(doc["p_pass"]) if "p_pass" in doc else None
        return cls(
            dim_a=dim_a,
            dim_b=dim_b,
            dim_m=dim_m,
            keymap=keymap,
            constraint_ops=tuple(ops),
            constraint_vals=tuple(vals),
            hzazb=hzazb,
            kraus=kraus,
            p_pass=p_pass,
        )

    @classmethod
    def from_json_file(cls, path: str) -> "CustomProblemConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_problem(self) -> KeyRateProblem:
        """Build the problem, re-running every domain-type invariant."""
        try:
            keymap = KeyMapPOVM(tuple(HermitianOperator(m) for m in self.keymap))
            constraints = ConstraintSet(
                tuple(HermitianOperator(m) for m in self.constraint_ops),
                tuple(self.constraint_vals),
            )
            return KeyRateProblem(
                dim_a=self.dim_a,
                dim_b=self.dim_b,
                keymap=keymap,
                constraints=constraints,
                hzazb=self.hzazb,
                postselect=self.kraus,
                p_pass=self.p_pass,
                dim_m=self.dim_m,
            )
        except ValueError as exc:
            raise ConfigError(f"config rejected: {exc}") from None


def run_custom(config: CustomProblemConfig, opts: _RunOptions) -> dict:
    """Single solve of a custom problem; same row schema as scenarios."""
    problem = config.to_problem()
    seed = int(np.random.SeedSequence(opts.seed).generate_state(1, np.uint64)[0])
    row = _solve_point(problem, SolverOptions(opts.starts, seed, opts.tol), opts.oracle)
    row["param"] = None
    row["k_theory_bits"] = None
    return row


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return format(v, ".12g")


def _write_rows(rows: list, fmt: str, stream) -> None:
    if fmt == "csv":
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    else:
        for row in rows:
            doc = {c: row[c] for c in CSV_COLUMNS}
            stream.write(json.dumps(doc) + "\n")


def _parse_sweep(text: str) -> SweepSpec:
    try:
        param, _, grid = text.partition("=")
        start, stop, step = (float(x) for x in grid.split(":"))
    except ValueError:
        raise ConfigError(
            f"bad --sweep {text!r}; expected PARAM=START:STOP:STEP"
        ) from None
    return SweepSpec(param.strip(), start, stop, step)


def _parse_fixed(items) -> dict:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"bad --fixed {item!r}; expected NAME=VALUE")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--fixed {name.strip()!r}: {value!r} is not a number") from None
    return out


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="keybound",
        description="Certified lower bounds on QKD key rates: dual solver sweeps.",
    )
    ap.add_argument("--scenario", help="built-in protocol: " + ", ".join(sorted(_SCENARIOS)))
    ap.add_argument("--sweep", metavar="PARAM=START:STOP:STEP", help="swept parameter grid")
    ap.add_argument(
        "--fixed",
        metavar="NAME=VALUE",
        action="append",
        help="fix a scenario parameter (repeatable); angles in degrees",
    )
    ap.add_argument("--config", metavar="PATH", help="custom problem JSON (overrides --scenario)")
    ap.add_argument("--oracle", action="store_true", help="also run the primal oracle")
    ap.add_argument("--starts", type=int, default=8, help="dual ascent restarts (default 8)")
    ap.add_argument("--seed", type=int, default=0, help="base RNG seed (default 0)")
    ap.add_argument("--tol", type=float, default=1e-9, help="dual convergence tol, nats")
    ap.add_argument("--jobs", type=int, default=1, help="concurrent sweep points (default 1)")
    ap.add_argument("--out", metavar="PATH", help="output file (default stdout)")
    ap.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        opts = _RunOptions(
            starts=args.starts,
            seed=args.seed,
            tol=args.tol,
            oracle=args.oracle,
            jobs=max(1, args.jobs),
        )
        if args.starts < 1:
            raise ConfigError("--starts must be at least 1")
        if args.config:
            rows = [run_custom(CustomProblemConfig.from_json_file(args.config), opts)]
        elif args.scenario:
            sweep = _parse_sweep(args.sweep) if args.sweep else None
            rows = run_scenario(args.scenario, sweep, opts, _parse_fixed(args.fixed))
        else:
            raise ConfigError("one of --scenario or --config is required")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DualSolverError, PrimalInfeasibleError, PrimalConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3

    buf = io.StringIO()
    _write_rows(rows, args.format, buf)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


if __name__ == "__main__":
    sys.exit(main())

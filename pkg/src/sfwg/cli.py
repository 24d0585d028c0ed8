"""``wg``: mesh generation, solves, convergence tables and verification.

Exit codes: 0 success, 1 configuration, 2 I/O, 3 solver, 4 verification.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import tomli

from .analysis import (
    CSV_HEADER,
    build_grid,
    convergence_rates,
    format_csv,
    format_table,
    solve_problem,
)
from .errors import CapacityError, MeshFormatError, SolverError, WGError
from .mesh import read_mesh, write_mesh
from .problems import PROBLEMS, get_problem, zero
from .verification import SUITES, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "example1"
    k: int = 1
    grid: str = "uniform"
    mesh: str | None = None
    levels: tuple = (3,)
    seed: int = 7
    magnitude: float = 0.2
    tol: float = 1e-12
    maxit: int | None = None
    condense: bool = False
    out: str | None = None
    format: str = "csv"
    suite: str | None = None
    zero_f: bool = False
    zero_g: bool = False

    def validate(self, command: str) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if not (isinstance(self.k, int) and 1 <= self.k <= 4):
            raise ConfigError(f"k must be an integer in [1, 4], got {self.k!r}")
        if self.grid not in ("uniform", "perturbed", "file"):
            raise ConfigError(f"unknown grid family {self.grid!r}")
        if self.grid == "file" and not self.mesh:
            raise ConfigError("--grid file needs --mesh PATH")
        lv = tuple(self.levels)
        if not lv or any(int(a) != a or a < 1 for a in lv) or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ConfigError(f"levels must be a nonempty increasing range of integers >= 1, got {lv}")
        if not 0 <= self.magnitude < 0.3:
            raise ConfigError(f"magnitude must lie in [0, 0.3), got {self.magnitude}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.maxit is not None and self.maxit < 1:
            raise ConfigError(f"maxit must be positive, got {self.maxit}")
        if self.format not in ("csv", "table"):
            raise ConfigError(f"unknown format {self.format!r}")
        if command == "convergence" and (len(lv) < 2 or self.grid == "file"):
            raise ConfigError("convergence needs at least two generated levels")
        if command in ("meshgen", "solve") and len(lv) != 1:
            raise ConfigError(f"{command} takes a single --level")
        if command == "verify" and self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite!r}; choose from {', '.join(SUITES)}")
        return self


def parse_levels(text: str) -> tuple:
    """``"5"`` or ``"5..7"`` to a tuple of levels."""
    try:
        if ".." in text:
            a, b = text.split("..")
            return tuple(range(int(a), int(b) + 1))
        return (int(text),)
    except ValueError:
        raise ConfigError(f"bad level range {text!r}; use L or A..B") from None


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors (exit 1), not argparse's 2
    def error(self, message):
        raise ConfigError(message)


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--problem")
    common.add_argument("--k", type=int)
    common.add_argument("--grid", choices=("uniform", "perturbed", "file"))
    common.add_argument("--mesh", help="mesh file for --grid file")
    lv = common.add_mutually_exclusive_group()
    lv.add_argument("--level", type=int)
    lv.add_argument("--levels", help="A..B")
    common.add_argument("--seed", type=int)
    common.add_argument("--magnitude", type=float)
    common.add_argument("--tol", type=float)
    common.add_argument("--maxit", type=int)
    common.add_argument("--condense", action="store_const", const=True)
    common.add_argument("--out")
    common.add_argument("--format", choices=("csv", "table"))
    common.add_argument("--config", help="TOML file; flags override it")
    common.add_argument("--zero-f", action="store_const", const=True, help="replace f by 0")
    common.add_argument("--zero-g", action="store_const", const=True, help="replace g by 0")

    p = _Parser(prog="wg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("meshgen", parents=[common], help="write a mesh file")
    sub.add_parser("solve", parents=[common], help="solve on one mesh")
    sub.add_parser("convergence", parents=[common], help="errors and rates over levels")
    v = sub.add_parser("verify", parents=[common], help="run a property suite")
    v.add_argument("--suite")
    return p


def load_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                raw = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        values = {key.replace("-", "_"): val for key, val in raw.items()}
        if "level" in values:
            values["levels"] = (values.pop("level"),)
        elif isinstance(values.get("levels"), str):
            values["levels"] = parse_levels(values["levels"])
        elif "levels" in values:
            values["levels"] = tuple(values["levels"])
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for name in known - {"levels"}:
        val = getattr(args, name, None)
        if val is not None:
            values[name] = val
    if args.level is not None:
        values["levels"] = (args.level,)
    elif args.levels is not None:
        values["levels"] = parse_levels(args.levels)
    return RunConfig(**values)


def _problem(cfg: RunConfig):
    prob = get_problem(cfg.problem)
    if cfg.zero_f or cfg.zero_g:
        prob = prob.with_data(zero if cfg.zero_f else None, zero if cfg.zero_g else None)
    return prob


def _mesh(cfg: RunConfig, level: int):
    if cfg.grid == "file":
        with open(cfg.mesh) as fh:
            return read_mesh(fh)
    return build_grid(cfg.grid, level, cfg.seed, cfg.magnitude)


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(x) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6e}"


def cmd_meshgen(cfg: RunConfig) -> int:
    mesh = _mesh(cfg, cfg.levels[0])
    _emit(cfg, write_mesh(mesh))
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    level = None if cfg.grid == "file" else cfg.levels[0]
    prob = _problem(cfg)
    res = solve_problem(_mesh(cfg, cfg.levels[0]), prob, cfg.k, cfg.tol, cfg.maxit,
                        cfg.condense, level)
    rep = res.report
    lines = [
        f"problem={prob.name} k={cfg.k} grid={cfg.grid} level={'' if level is None else level}",
        f"free_dofs={res.system.dofmap.n_free} iterations={rep.iterations} "
        f"residual={rep.residual:.3e} flag={rep.flag}",
    ]
    if res.errors is not None:
        if cfg.format == "csv":
            lines += [CSV_HEADER, res.errors.csv_row()]
        else:
            lines += [format_table([res.errors]).rstrip("\n")]
    else:
        uh = res.weak
        lines.append(f"max_abs_u0={_fmt(float(abs(uh.interior).max(initial=0.0)))} "
                     f"max_abs_ub={_fmt(float(abs(uh.trace).max(initial=0.0)))}")
    _emit(cfg, "\n".join(lines) + "\n")
    print(f"[wg] solve: {rep.wall_time:.3f} s in CG", file=sys.stderr)
    return EXIT_OK


def cmd_convergence(cfg: RunConfig) -> int:
    prob = _problem(cfg)
    if not prob.has_exact:
        raise ConfigError("convergence needs a problem with an exact solution")
    reports = []
    for level in cfg.levels:
        t0 = time.perf_counter()
        res = solve_problem(_mesh(cfg, level), prob, cfg.k, cfg.tol, cfg.maxit, cfg.condense, level)
        reports.append(res.errors)
        print(f"[wg] level {level}: {time.perf_counter() - t0:.3f} s, "
              f"{res.report.iterations} CG iterations", file=sys.stderr)
    l2 = convergence_rates([r.l2 for r in reports])
    en = convergence_rates([r.energy for r in reports])
    for r, a, b in zip(reports, l2, en):
        r.l2_rate, r.energy_rate = a, b
    if cfg.format == "csv":
        _emit(cfg, format_csv(reports))
    else:
        title = f"{prob.name}, k={cfg.k}, {cfg.grid} grids"
        _emit(cfg, format_table(reports, title))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, k: int | None = None, levels=None) -> int:
    """Run one suite; ``k`` and ``levels`` of ``None`` select its defaults."""
    checks = run_suite(cfg.suite, k, levels,
                       cfg.grid if cfg.grid != "file" else "uniform",
                       cfg.seed, cfg.magnitude, cfg.tol)
    failed = [c for c in checks if not c.passed]
    summary = {
        "suite": cfg.suite,
        "passed": not failed,
        "checks": [c.as_dict() for c in checks],
        "first_failure": failed[0].name if failed else None,
    }
    _emit(cfg, json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if failed:
        c = failed[0]
        print(f"[wg] verify {cfg.suite}: FAIL {c.name} value={c.value:.3e} "
              f"threshold={c.threshold:.3e}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        cfg = load_config(args).validate(args.command)
    except ConfigError as exc:
        print(f"wg: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TypeError, ValueError) as exc:
        print(f"wg: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"wg: {exc}", file=sys.stderr)
        return EXIT_IO
    start = time.perf_counter()
    try:
        if args.command == "meshgen":
            code = cmd_meshgen(cfg)
        elif args.command == "solve":
            code = cmd_solve(cfg)
        elif args.command == "convergence":
            code = cmd_convergence(cfg)
        else:
            given = _given_keys(args)
            code = cmd_verify(cfg, cfg.k if "k" in given else None,
                              cfg.levels if "levels" in given else None)
    except SolverError as exc:
        print(f"wg: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, MeshFormatError) as exc:
        print(f"wg: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, CapacityError, ValueError) as exc:
        print(f"wg: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WGError as exc:
        print(f"wg: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"[wg] {args.command}: {time.perf_counter() - start:.3f} s", file=sys.stderr)
    return code


def _given_keys(args) -> set:
    """Settings the user supplied by flag or config file."""
    given = set()
    if args.config:
        with open(args.config, "rb") as fh:
            given = {key.replace("-", "_") for key in tomli.load(fh)}
    if "level" in given:
        given.add("levels")
    if args.k is not None:
        given.add("k")
    if args.level is not None or args.levels is not None:
        given.add("levels")
    return given


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 solved, 1 usage / input error or failed verification,
2 infeasible, 3 numerical failure (or unbounded).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .applications import EXAMPLES, build_example
from .conic import SolverSettings
from .hierarchy import HierarchySolution, solution_from_json, solve_dual, solve_primal, verify_solution
from .model import InstanceError, TvSdp, instance_to_dict, load_instance, with_box
from .polynomial import Poly

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_FAILURE = 3

MODES = ("primal", "dual", "sweep")


class CliError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    mode: str = "primal"
    degrees: tuple[int, ...] = (2,)
    dual_level: int | None = None
    box: float | None = None
    tol: float = 1e-8
    max_iter: int = 200
    grid: int = 1001
    seed: int = 0
    jobs: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise CliError(f"unknown mode {self.mode!r}")
        if not self.degrees or min(self.degrees) < 0:
            raise CliError("degree must be >= 0")
        if self.dual_level is not None and self.dual_level < 0:
            raise CliError("dual level must be >= 0")
        if self.box is not None and not self.box > 0:
            raise CliError("box bound must be > 0")
        if self.grid < 2:
            raise CliError("grid needs at least 2 points")

    @property
    def settings(self) -> SolverSettings:
        return SolverSettings(tol=self.tol, max_iter=self.max_iter)


def parse_degrees(text: str) -> tuple[int, ...]:
    """'a..b' (inclusive) or a single integer."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1))
        return (int(text),)
    except ValueError:
        raise CliError(f"bad degree range {text!r}; expected a..b") from None


def exit_code(status: str) -> int:
    if status in ("optimal", "inaccurate"):
        return EXIT_OK
    if status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_FAILURE


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    return v


def dumps(payload: dict) -> str:
    # repr-based floats are shortest round-trip; sorted keys keep output stable
    return json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from None


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from None


def _load(path: str) -> TvSdp:
    try:
        return load_instance(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from None
    except InstanceError as exc:
        raise CliError(f"{path}: {exc}") from None


def solution_record(inst: TvSdp, sol: HierarchySolution) -> dict:
    rec = sol.to_json()
    rec["value"] = inst.reported(sol.objective)
    return rec


def _solve_one(inst: TvSdp, mode: str, d: int, settings: SolverSettings) -> dict:
    solver = solve_primal if mode == "primal" else solve_dual
    return solution_record(inst, solver(inst, d, settings))


def _banner() -> dict:
    return {"tvsdp_version": __version__}


def _sweep(inst: TvSdp, cfg: RunConfig) -> tuple[dict, int]:
    jobs = [("primal", d) for d in cfg.degrees]
    if cfg.dual_level is None:
        jobs += [("dual", d) for d in cfg.degrees]
    else:
        jobs.append(("dual", cfg.dual_level))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_solve_one, inst, m, d, cfg.settings) for m, d in jobs]
            records = [f.result() for f in futures]
    else:
        records = [_solve_one(inst, m, d, cfg.settings) for m, d in jobs]
    primal = {r["degree"]: r for r in records if r["mode"] == "primal"}
    dual = {r["degree"]: r for r in records if r["mode"] == "dual"}
    table = []
    for d in cfg.degrees:
        p = primal[d]
        q = dual[d if cfg.dual_level is None else cfg.dual_level]
        pv, qv = p["value"], q["value"]
        # bound gap in the sense the problem was posed
        gap = abs(qv - pv) if all(math.isfinite(v) for v in (pv, qv)) else math.nan
        table.append(
            {
                "degree": d,
                "dual_level": q["degree"],
                "primal": pv,
                "primal_status": p["status"],
                "dual": qv,
                "dual_status": q["status"],
                "gap": gap,
            }
        )
    codes = {exit_code(r["status"]) for r in records}
    code = EXIT_FAILURE if EXIT_FAILURE in codes else EXIT_INFEASIBLE if EXIT_INFEASIBLE in codes else EXIT_OK
    return {"records": records, "summary": table}, code


def format_table(rows: list[dict]) -> str:
    lines = [f"{'degree':>6} {'level':>5} {'primal':>14} {'dual':>14} {'gap':>12}"]
    for r in rows:
        lines.append(
            f"{r['degree']:>6} {r['dual_level']:>5} {_num(r['primal']):>14} {_num(r['dual']):>14} {_num(r['gap'], 4):>12}"
        )
    return "\n".join(lines) + "\n"


def _num(v, digits: int = 8) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{digits}g}" if digits == 4 else f"{v:.{digits}f}"


def cmd_solve(path: str, cfg: RunConfig) -> int:
    inst = _load(path)
    if cfg.box is not None:
        inst = with_box(inst, cfg.box)
    header = {
        **_banner(),
        "instance": inst.name or os.path.basename(path),
        "mode": cfg.mode,
        "box": cfg.box,
        "settings": {"tol": cfg.tol, "max_iter": cfg.max_iter},
    }
    if cfg.mode == "sweep":
        body, code = _sweep(inst, cfg)
        _write(dumps({**header, **body}), cfg.out)
        if cfg.out not in (None, "-"):
            sys.stdout.write(format_table(body["summary"]))
        return code
    if cfg.mode == "dual" and cfg.dual_level is not None:
        d = cfg.dual_level
    else:
        d = cfg.degrees[0]
    rec = _solve_one(inst, cfg.mode, d, cfg.settings)
    _write(dumps({**header, "result": rec}), cfg.out)
    return exit_code(rec["status"])


def cmd_example(name: str, seed: int, out: str | None) -> int:
    try:
        inst = build_example(name, seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    _write(dumps(instance_to_dict(inst)), out)
    return EXIT_OK


def _result_of(data: dict) -> dict:
    if "result" in data:
        return data["result"]
    if "records" in data:
        raise CliError("sweep output holds several solutions; solve a single degree to verify or sample it")
    return data


def cmd_verify(instance_path: str, solution_path: str, grid: int, tol: float, out: str | None) -> int:
    inst = _load(instance_path)
    rec = _result_of(_read_json(solution_path))
    x, cert = solution_from_json(rec)
    if x is None:
        raise CliError(f"{solution_path}: no primal trajectory (status {rec.get('status')!r})")
    box = _read_json(solution_path).get("box")
    if box is not None and inst.box is None:
        inst = with_box(inst, box)
    try:
        report = verify_solution(inst, x, cert, tol=tol, grid_points=grid)
    except (ValueError, IndexError) as exc:
        raise CliError(f"solution does not match instance: {exc}") from None
    _write(dumps({**_banner(), **report.to_json()}), out)
    return EXIT_OK if report.passed else EXIT_ERROR


def sample_rows(x: tuple[Poly, ...], points: int) -> tuple[list[str], list[list[float]]]:
    ts = np.linspace(0.0, 1.0, points)
    header = ["t"] + [f"x_{i + 1}" for i in range(len(x))]
    rows = [[float(t)] + [float(p(t)) for p in x] for t in ts]
    return header, rows


def cmd_sample(solution_path: str, points: int, csv_path: str | None) -> int:
    if points < 2:
        raise CliError("need at least 2 sample points")
    rec = _result_of(_read_json(solution_path))
    x, _ = solution_from_json(rec)
    if x is None:
        raise CliError(f"{solution_path}: no primal trajectory (status {rec.get('status')!r})")
    header, rows = sample_rows(x, points)
    if csv_path is None or csv_path == "-":
        fh, close = sys.stdout, False
    else:
        try:
            fh, close = open(csv_path, "w", encoding="utf-8", newline=""), True
        except OSError as exc:
            raise CliError(f"cannot write {csv_path}: {exc}") from None
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["%.17g" % v for v in row])
    finally:
        if close:
            fh.close()
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors, which would read as "infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tvsdp", description="Polynomial solutions and dual bounds for time-varying SDPs.")
    p.add_argument("--version", action="version", version=f"tvsdp {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve the primal or dual hierarchy")
    s.add_argument("instance")
    s.add_argument("--mode", choices=MODES, default="primal")
    s.add_argument("--degree", type=int, default=None, help="primal degree / dual level")
    s.add_argument("--degrees", default=None, help="degree range a..b (sweep)")
    s.add_argument("--dual-level", type=int, default=None)
    s.add_argument("--box", type=float, default=None, help="append |x_i| <= box")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1, help="parallel solves in sweep mode")
    s.add_argument("--out", default=None)

    e = sub.add_parser("example", help="write a built-in instance as JSON")
    e.add_argument("name", choices=EXAMPLES)
    e.add_argument("--seed", type=int, default=0, help="capacity draws (maxflow)")
    e.add_argument("--out", default=None)

    v = sub.add_parser("verify", help="check a primal solution against its instance")
    v.add_argument("instance")
    v.add_argument("solution")
    v.add_argument("--grid", type=int, default=1001)
    v.add_argument("--tol", type=float, default=1e-5)
    v.add_argument("--out", default=None)

    m = sub.add_parser("sample", help="sample a trajectory on a uniform grid")
    m.add_argument("solution")
    m.add_argument("--points", type=int, default=101)
    m.add_argument("--csv", default=None)
    return p


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "solve":
            if args.degrees is not None:
                degrees = parse_degrees(args.degrees)
            elif args.degree is not None:
                degrees = (args.degree,)
            elif args.mode == "dual" and args.dual_level is not None:
                degrees = (args.dual_level,)
            else:
                raise CliError("give --degree (or --degrees a..b for a sweep)")
            cfg = RunConfig(
                mode=args.mode,
                degrees=degrees,
                dual_level=args.dual_level,
                box=args.box,
                tol=args.tol,
                max_iter=args.max_iter,
                seed=args.seed,
                jobs=max(1, args.jobs),
                out=args.out,
            )
            return cmd_solve(args.instance, cfg)
        if args.command == "example":
            return cmd_example(args.name, args.seed, args.out)
        if args.command == "verify":
            return cmd_verify(args.instance, args.solution, args.grid, args.tol, args.out)
        if args.command == "sample":
            return cmd_sample(args.solution, args.points, args.csv)
    except CliError as exc:
        print(f"tvsdp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Batch driver: one Lanczos sweep, many quadrature evaluations, CSV + JSON out.

    blockradau run --config run.toml [--m-max N] [--enrich P --seed S]
                   [--reorth] [--no-oracle] [--out DIR] [--workers K]
    blockradau gen --problem problem.toml --out DIR
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import mmio
from .errors import BlockQuadError, InvalidSpec, NotStieltjes, RankDeficient, TooLarge
from .lanczos import lanczos_run
from .operators import ProblemSpec, build_problem, enrich
from .quadrature import PhiSpec, QuadratureSet, ReferenceOracle, nodes_weights, sweep
from .smallmat import loewner_geq, norm2
from .stieltjes import check_identities, extract, radau_matrix

log = logging.getLogger("blockradau")

CSV_HEADER = "phi,param,m,err_gauss,err_radau,err_hat,err_check,bound"
EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


@dataclass
class RunConfig:
    problem: ProblemSpec
    phis: list[PhiSpec]
    m_max: int
    enrich: int = 0
    seed: int = 0
    reorth: bool = False
    oracle: bool = True
    out: Path = Path("out")
    workers: int = 1
    nodes_weights: list[int] = field(default_factory=list)
    base_dir: Path = Path(".")

    def validate(self):
        self.problem.validate()
        if not self.phis:
            raise InvalidSpec("at least one phi entry is required")
        if self.m_max < 2:
            raise InvalidSpec("m_max must be at least 2 (pairs need m + 1 blocks)")
        if self.enrich < 0:
            raise InvalidSpec("enrich must be nonnegative")
        return self


@dataclass
class ConvergenceRecord:
    phi: str
    param: str
    m: int
    bound: float
    err_gauss: float | None = None
    err_radau: float | None = None
    err_hat: float | None = None
    err_check: float | None = None
    sandwich_ok: bool | None = None
    bound_ok: bool | None = None

    def csv_row(self) -> str:
        def fmt(v):
            return "" if v is None else f"{v:.16e}"

        cells = [self.phi, self.param, str(self.m), fmt(self.err_gauss), fmt(self.err_radau),
                 fmt(self.err_hat), fmt(self.err_check), fmt(self.bound)]
        return ",".join(cells)


def _parse_value(v) -> complex | float:
    if isinstance(v, str):
        c = complex(v.replace(" ", ""))
        return c.real if c.imag == 0 else c
    if isinstance(v, dict):
        c = complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
        return c.real if c.imag == 0 else c
    return float(v)


def parse_phis(entries) -> list[PhiSpec]:
    phis = []
    for entry in entries:
        kind = entry.get("kind")
        values = entry.get("values", entry.get("value"))
        if values is None:
            raise InvalidSpec(f"phi entry {entry!r} has no values")
        if not isinstance(values, list):
            values = [values]
        phis.extend(PhiSpec(kind, _parse_value(v)) for v in values)
    return phis


def load_config(path, overrides: dict[str, Any] | None = None) -> RunConfig:
    path = Path(path)
    with path.open("rb") as fh:
        raw = tomllib.load(fh)
    if "problem" not in raw:
        raise InvalidSpec("config has no [problem] section")
    prob = dict(raw["problem"])
    kind = prob.pop("kind", None)
    run = dict(raw.get("run", {}))
    if overrides:
        run.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(
        problem=ProblemSpec(kind, prob),
        phis=parse_phis(raw.get("phi", [])),
        m_max=int(run.get("m_max", 50)),
        enrich=int(run.get("enrich", 0)),
        seed=int(run.get("seed", 0)),
        reorth=bool(run.get("reorth", False)),
        oracle=bool(run.get("oracle", True)),
        out=Path(run.get("out", "out")),
        workers=int(run.get("workers", 1)),
        nodes_weights=[int(k) for k in run.get("nodes_weights", [])],
        base_dir=path.parent,
    )
    if not cfg.out.is_absolute() and (overrides or {}).get("out") is None:
        cfg.out = path.parent / cfg.out
    return cfg.validate()


def _records_for(phi: PhiSpec, sets: list[QuadratureSet], truth) -> list[ConvergenceRecord]:
    records = []
    for q in sets:
        rec = ConvergenceRecord(phi.label, phi.param_str, q.m, q.bound)
        if truth is not None:
            rec.err_gauss = norm2(truth - q.gauss)
            rec.err_radau = norm2(truth - q.radau)
            rec.err_hat = norm2(truth - q.hat)
            if q.check is not None:
                rec.err_check = norm2(truth - q.check)
            scale = max(1.0, norm2(truth))
            rec.bound_ok = bool(rec.err_gauss <= q.bound + 1e-9 * scale and rec.err_radau <= q.bound + 1e-9 * scale)
            if phi.is_real_resolvent:
                rec.sandwich_ok = bool(
                    loewner_geq(truth, q.gauss, 1e-9) and loewner_geq(q.radau, truth, 1e-9)
                )
        records.append(rec)
    return records


def run(cfg: RunConfig) -> dict:
    """Execute a configured study; writes ``convergence.csv`` and ``summary.json``."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    A, B = build_problem(cfg.problem, cfg.base_dir)
    timings["build"] = time.perf_counter() - t0
    n, p = B.shape
    Bq = enrich(B, cfg.enrich, cfg.seed) if cfg.enrich else B
    p_total = Bq.shape[1]

    m_max = cfg.m_max
    if m_max * p_total > n:
        m_max = n // p_total
        log.warning("m_max * block size exceeds n=%d; clamped m_max to %d", n, m_max)

    t0 = time.perf_counter()
    T, state = lanczos_run(A, Bq, m_max, reorth=cfg.reorth)
    timings["lanczos"] = time.perf_counter() - t0
    if state.breakdown == 1 or T.m < 1:
        raise RankDeficient(0)

    t0 = time.perf_counter()
    extraction_error = None
    try:
        params = extract(T)
    except NotStieltjes as exc:
        extraction_error = str(exc)
        log.warning("Stieltjes extraction stopped: %s", exc)
        params = extract(T.truncate(exc.index - 1)) if exc.index > 1 else None
    timings["extraction"] = time.perf_counter() - t0
    usable = params.m if params is not None else 0

    identities = None
    if params is not None:
        identities = check_identities(params, T.truncate(usable)).as_dict()

    oracle = ReferenceOracle(A, B) if cfg.oracle else None
    oracle_note = None
    truths: list = []
    t0 = time.perf_counter()
    for phi in cfg.phis:
        truth = None
        if oracle is not None:
            try:
                truth = oracle(phi)
            except TooLarge as exc:
                oracle_note = str(exc)
                log.warning("oracle skipped: %s", exc)
        truths.append(truth)
    timings["oracle"] = time.perf_counter() - t0

    def evaluate(k: int) -> list[ConvergenceRecord]:
        phi = cfg.phis[k]
        sets = [q.leading(p) for q in sweep(T.truncate(usable), phi, params=params)] if usable >= 2 else []
        return _records_for(phi, sets, truths[k])

    t0 = time.perf_counter()
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_phi = list(pool.map(evaluate, range(len(cfg.phis))))
    else:
        per_phi = [evaluate(k) for k in range(len(cfg.phis))]
    timings["evaluation"] = time.perf_counter() - t0

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "convergence.csv").open("w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for records in per_phi:
            for rec in records:
                fh.write(rec.csv_row() + "\n")

    for k in cfg.nodes_weights:
        if 1 <= k <= usable:
            _write_nodes_weights(out / f"nodes_weights_m{k}.csv", T.truncate(k), params)

    observations = []
    for phi, records in zip(cfg.phis, per_phi):
        entry = {"phi": phi.label, "param": phi.param_str, "pairs": len(records)}
        if records and records[0].err_gauss is not None:
            entry["bound_violations"] = sum(not r.bound_ok for r in records)
            if phi.is_real_resolvent:
                entry["sandwich_violations"] = sum(not r.sandwich_ok for r in records)
            entry["final_err_gauss"] = records[-1].err_gauss
            entry["final_err_hat"] = records[-1].err_hat
        if records:
            entry["final_bound"] = records[-1].bound
        observations.append(entry)

    summary = {
        "problem": {"kind": cfg.problem.kind, "n": n, "p": p, "p_extra": p_total - p},
        "m_max": m_max,
        "steps": T.m,
        "status": state.status,
        "breakdown_step": state.breakdown,
        "extraction_error": extraction_error,
        "stieltjes_floors": usable,
        "reorth": cfg.reorth,
        "seed": cfg.seed,
        "oracle": cfg.oracle and oracle_note is None,
        "oracle_note": oracle_note,
        "identity_check": identities,
        "observations": observations,
        "timings_s": timings,
    }
    with (out / "summary.json").open("w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def _write_nodes_weights(path: Path, Tk, params) -> None:
    p = Tk.p
    cols = ",".join(f"w{i + 1}{j + 1}" for i in range(p) for j in range(p))
    lines = [f"rule,node,{cols}"]
    rules = [("gauss", Tk)]
    if Tk.m >= 1 and params is not None:
        rules.append(("radau", radau_matrix(Tk, params.truncate(Tk.m))))
    for name, M in rules:
        nw = nodes_weights(M)
        for x, w in zip(nw.nodes, nw.weights):
            lines.append(",".join([name, f"{x:.16e}"] + [f"{v:.16e}" for v in w.ravel()]))
    path.write_text("\n".join(lines) + "\n")


def gen(problem_path, out_dir) -> Path:
    """Write ``A.mtx`` and ``B.txt`` for the problem described in a TOML file."""
    problem_path = Path(problem_path)
    with problem_path.open("rb") as fh:
        raw = tomllib.load(fh)
    prob = dict(raw.get("problem", raw))
    kind = prob.pop("kind", None)
    spec = ProblemSpec(kind, prob)
    A, B = build_problem(spec, problem_path.parent)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mmio.write_matrix_market(out / "A.mtx", A, comment=f"generated problem kind={kind}")
    mmio.write_block(out / "B.txt", B)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockradau", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a convergence study")
    r.add_argument("--config", required=True)
    r.add_argument("--m-max", type=int)
    r.add_argument("--enrich", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--reorth", action="store_true", default=None)
    r.add_argument("--no-oracle", dest="oracle", action="store_false", default=None)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)

    g = sub.add_parser("gen", help="write a generated problem to disk")
    g.add_argument("--problem", required=True)
    g.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen":
            out = gen(args.problem, args.out)
            print(f"wrote {out / 'A.mtx'} and {out / 'B.txt'}")
            return 0
        overrides = {
            "m_max": args.m_max,
            "enrich": args.enrich,
            "seed": args.seed,
            "reorth": args.reorth,
            "oracle": args.oracle,
            "out": args.out,
            "workers": args.workers,
        }
        cfg = load_config(args.config, overrides)
        summary = run(cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvalidSpec, tomllib.TOMLDecodeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RankDeficient as exc:
        print(f"error: block Lanczos broke down at step 1: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BlockQuadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{summary['steps']} steps ({summary['status']}); wrote {cfg.out / 'convergence.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

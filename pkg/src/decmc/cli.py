"""Command-line front-end: ``decmc analyze | sweep | check``.

Exit codes: 0 for a certified result (or a divergent model for ``check``),
2 for a result that is not certified, 1 for errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional

from .abstraction import BiasedChain, RandomWalkAbs
from .chain import LevelFn, MarkovModel, TargetSpec
from .errors import AbstractionError, ConfigurationError, DecmcError
from .models import BUILTIN_NAMES, builtin_model
from .numeric import DEFAULT_BUDGET, evaluate, evaluate_importance
from .ppda import BUNDLED, PpdaModel, check_divergence, level as ppda_level, load_bundled, load_model, min_n0_for_p, target_avoid_predicates
from .records import ALGOS, RunRecord, write_csv
from .smc import DEFAULT_STEP_CAP, SmcConfig, estimate, estimate_importance

log = logging.getLogger("decmc")

EXIT_OK, EXIT_ERROR, EXIT_UNCERTIFIED = 0, 1, 2
DEFAULT_TIMEOUT = 3600.0
DEFAULT_DELTA = 0.01
DEFAULT_EPSILON = 0.01


@dataclass
class LoadedModel:
    name: str
    model: MarkovModel
    spec: TargetSpec
    level: LevelFn
    ppda: Optional[PpdaModel]  # pPDA form used for divergence checks, if any


def load(path: Optional[str], builtin: Optional[str]) -> LoadedModel:
    """Resolve ``--builtin NAME`` or a model file.

    A missing file whose stem names a bundled model (``examples/pta.ppda``)
    falls back to the bundled copy.
    """
    if builtin is not None:
        w = builtin_model(builtin)
        to_ppda = getattr(w.model, "to_ppda", None)
        return LoadedModel(builtin, w.model, w.spec, w.level, to_ppda() if to_ppda else None)
    if path is None:
        raise ConfigurationError("give a model file or --builtin NAME")
    p = Path(path)
    if p.exists():
        m = load_model(p)
    elif p.stem in BUNDLED:
        log.info("%s not found; using the bundled %s model", path, p.stem)
        m = load_bundled(p.stem)
    else:
        raise ConfigurationError(f"model file {path} not found")
    return LoadedModel(p.stem, m, target_avoid_predicates(m), ppda_level, m)


def resolve_n0(lm: LoadedModel, p: float, n0) -> int:
    """Threshold for the abstraction; ``"auto"`` picks the smallest divergent one."""
    if n0 in (None, "auto"):
        if lm.ppda is None:
            raise ConfigurationError(f"--n0 auto needs a pPDA model; {lm.name} has none, give --n0")
        found = min_n0_for_p(lm.ppda, p)
        if found is None:
            raise AbstractionError(f"no N0 <= 10000 makes {lm.name} ({p}, N0)-divergent")
        return found
    return int(n0)


def check_is_applicable(lm: LoadedModel, p: float, n0: int) -> None:
    if lm.ppda is None:
        return  # the biased chain checks every visited state itself
    rep = check_divergence(lm.ppda, p, n0)
    if not rep.divergent:
        w = rep.witnesses[0] if rep.witnesses else None
        detail = f"; witness state={w[0]} letter={w[1]} n={w[2]} ratio={w[3]}" if w else "; limit test failed"
        raise AbstractionError(f"{lm.name} is not ({p}, {n0})-divergent{detail}", witness=w)


def run_one(lm: LoadedModel, algo: str, epsilon: float, delta: float = DEFAULT_DELTA,
            p: Optional[float] = None, n0=None, seed: int = 0, workers: int = 1,
            step_cap: Optional[int] = DEFAULT_STEP_CAP, budget: Optional[int] = DEFAULT_BUDGET,
            timeout: Optional[float] = DEFAULT_TIMEOUT) -> RunRecord:
    if algo not in ALGOS:
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    is_ = algo.endswith("-is")
    smc = algo.startswith("smc")
    rec = RunRecord(model=lm.name, algo=algo, epsilon=epsilon, delta=delta if smc else None,
                    seed=seed if smc else None, step_cap=step_cap if smc else None,
                    budget=budget if not smc else None, timeout=timeout)
    t0 = time.perf_counter()
    if is_:
        if p is None:
            raise ConfigurationError(f"{algo} needs --p")
        n0 = resolve_n0(lm, p, n0)
        rec.p, rec.n0 = p, n0
        check_is_applicable(lm, p, n0)
        abs_ = RandomWalkAbs(p, n0)
    if smc:
        cfg = SmcConfig(epsilon=epsilon, delta=delta, seed=seed, step_cap=step_cap,
                        workers=workers, timeout=timeout)
        if is_:
            chain = BiasedChain(lm.model, lm.spec, lm.level, abs_, exact=False)
            ci = estimate_importance(lm.model, lm.spec, chain, cfg)
        else:
            ci = estimate(lm.model, lm.spec, None, cfg)
        rec.lo, rec.hi, rec.mid = ci.lo, ci.hi, ci.midpoint
        rec.certified, rec.status = ci.certified, ci.status
        rec.n_samples, rec.mean_path_len = ci.n_samples, ci.mean_path_length
        if ci.capped:
            rec.message = f"{ci.capped} paths reached the step cap"
    else:
        if is_:
            ci = evaluate_importance(lm.model, lm.spec, lm.level, abs_, epsilon,
                                     budget=budget, timeout=timeout)
        else:
            ci = evaluate(lm.model, lm.spec, 1.0, epsilon, budget=budget, timeout=timeout)
        rec.lo, rec.hi, rec.mid = ci.lo, ci.hi, ci.midpoint
        rec.certified, rec.status = ci.certified, ci.status
        rec.states_expanded = ci.states_expanded
        if ci.underflow_count:
            rec.message = f"{ci.underflow_count} contributions below 2^-511 were truncated"
    rec.wall_ms = (time.perf_counter() - t0) * 1000.0
    return rec


# -- argument handling -------------------------------------------------------

def _n0_arg(s: str):
    if s == "auto":
        return s
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError("--n0 takes a natural number or 'auto'") from None
    if v < 0:
        raise argparse.ArgumentTypeError("--n0 must be nonnegative")
    return v


def _int_like(s: str) -> int:
    """Integer flag that also accepts forms like ``1e7``."""
    try:
        return int(s)
    except ValueError:
        pass
    try:
        d = Decimal(s)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if d != d.to_integral_value():
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    return int(d)


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive, decimal arithmetic) or a comma list; empty is allowed."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"bad grid {text!r}; use start:stop:step")
        start, stop, step = (Decimal(x) for x in parts)
        if step <= 0:
            raise ConfigurationError("grid step must be positive")
        out = []
        v = start
        while v <= stop:
            out.append(float(v))
            v += step
        return out
    return [float(x) for x in text.split(",") if x.strip()]


def _add_model_args(sp) -> None:
    sp.add_argument("model_path", nargs="?", help="pPDA model file")
    sp.add_argument("--builtin", choices=BUILTIN_NAMES, help="built-in model instead of a file")


def _add_run_args(sp) -> None:
    sp.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="interval width")
    sp.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="SMC error probability")
    sp.add_argument("--p", type=float, help="random-walk parameter of the abstraction")
    sp.add_argument("--n0", type=_n0_arg, default="auto", help="abstraction threshold or 'auto'")
    sp.add_argument("--seed", type=_int_like, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--step-cap", type=_int_like, default=DEFAULT_STEP_CAP)
    sp.add_argument("--budget", type=_int_like, default=DEFAULT_BUDGET, help="numeric expansion limit")
    sp.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="seconds per run")
    sp.add_argument("--json", action="store_true", help="print JSON instead of text")
    sp.add_argument("--csv", metavar="PATH", help="write the record(s) as CSV")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="decmc", description="Reachability in infinite Markov chains.")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run one analysis")
    _add_model_args(a)
    a.add_argument("--algo", choices=ALGOS, default="numeric")
    _add_run_args(a)

    s = sub.add_parser("sweep", help="run analyses over a grid of p or epsilon")
    _add_model_args(s)
    s.add_argument("--algo", default="smc-is,numeric-is", help="comma-separated algorithms")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--p-grid", help="start:stop:step or a comma list")
    g.add_argument("--epsilon-grid", help="start:stop:step or a comma list")
    _add_run_args(s)

    c = sub.add_parser("check", help="check (p, N0)-divergence")
    _add_model_args(c)
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--n0", type=_n0_arg, default="auto")
    c.add_argument("--n-check", type=int, default=100_000)
    c.add_argument("--json", action="store_true")
    return ap


def _render(rec: RunRecord) -> str:
    lines = [f"model {rec.model}  algo {rec.algo}"]
    if rec.p is not None:
        lines.append(f"abstraction p={rec.p} N0={rec.n0}")
    if rec.lo is not None:
        lines.append(f"interval [{rec.lo:.10g}, {rec.hi:.10g}]  = {rec.mid:.10g} +- {(rec.hi - rec.lo) / 2:.3g}")
    lines.append(f"certified {'yes' if rec.certified else 'no'}  status {rec.status}")
    if rec.n_samples is not None:
        lines.append(f"samples {rec.n_samples}  mean path length {rec.mean_path_len:.4g}")
    if rec.states_expanded is not None:
        lines.append(f"states expanded {rec.states_expanded}")
    lines.append(f"wall time {rec.wall_ms:.1f} ms")
    if rec.message:
        lines.append(rec.message)
    return "\n".join(lines)


def _write_csv(path: str, records: list) -> None:
    if path == "-":
        write_csv(records, sys.stdout)
        return
    with open(path, "w", newline="") as f:
        write_csv(records, f)


def _run_kwargs(args) -> dict:
    return dict(delta=args.delta, n0=args.n0, seed=args.seed, workers=args.workers,
                step_cap=args.step_cap, budget=args.budget, timeout=args.timeout)


def cmd_analyze(args) -> int:
    lm = load(args.model_path, args.builtin)
    rec = run_one(lm, args.algo, args.epsilon, p=args.p, **_run_kwargs(args))
    if args.json:
        print(rec.to_json())
    else:
        print(_render(rec))
    if args.csv:
        _write_csv(args.csv, [rec])
    return EXIT_OK if rec.certified else EXIT_UNCERTIFIED


def cmd_sweep(args) -> int:
    lm = load(args.model_path, args.builtin)
    algos = [a.strip() for a in args.algo.split(",") if a.strip()]
    for a in algos:
        if a not in ALGOS:
            raise ConfigurationError(f"unknown algorithm {a!r}")
    over_p = args.p_grid is not None
    grid = parse_grid(args.p_grid if over_p else args.epsilon_grid)
    records = []
    for x in grid:
        for algo in algos:
            p = x if over_p else args.p
            eps = args.epsilon if over_p else x
            try:
                rec = run_one(lm, algo, eps, p=p, **_run_kwargs(args))
            except DecmcError as exc:
                rec = RunRecord(model=lm.name, algo=algo, p=p, epsilon=eps, status="error",
                                message=str(exc), timeout=args.timeout)
            log.info("%s %s p=%s eps=%s -> %s", lm.name, algo, p, eps, rec.status)
            records.append(rec)
            if args.json:
                print(rec.to_json(), flush=True)
    if args.csv:
        _write_csv(args.csv, records)
    elif not args.json:
        write_csv(records, sys.stdout)
    return EXIT_OK


def cmd_check(args) -> int:
    lm = load(args.model_path, args.builtin)
    if lm.ppda is None:
        raise ConfigurationError(f"{lm.name} has no pPDA form to check")
    p = args.p
    auto = args.n0 == "auto"
    n0 = min_n0_for_p(lm.ppda, p) if auto else args.n0
    if n0 is None:
        out = {"model": lm.name, "p": p, "min_n0": None, "divergent": False}
        print(json.dumps(out) if args.json else f"no N0 <= 10000 makes {lm.name} ({p}, N0)-divergent")
        return EXIT_UNCERTIFIED
    rep = check_divergence(lm.ppda, p, n0, n_check=args.n_check)
    if args.json:
        d = {"model": lm.name, "p": p, **rep.to_dict()}
        if auto:
            d["min_n0"] = n0
        print(json.dumps(d))
    else:
        if auto:
            print(f"smallest N0 for p={p}: {n0}")
        verdict = "divergent" if rep.divergent else "NOT divergent"
        print(f"{lm.name} is {verdict} for p={p}, N0={n0}")
        scope = "all heights" if rep.complete else f"heights {n0}..{rep.verified_up_to} plus the limit test"
        print(f"verified: {scope}")
        for q, a, n, r in rep.witnesses:
            print(f"  witness: state {q} letter {a} height {n} up-ratio {r}")
    return EXIT_OK if rep.divergent else EXIT_UNCERTIFIED


def _setup_logging() -> None:
    level = os.environ.get("DECMC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handler = {"analyze": cmd_analyze, "sweep": cmd_sweep, "check": cmd_check}[args.command]
    try:
        return handler(args)
    except (DecmcError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 pass, 1 litmus expectation mismatch, 2 violation or soundness
bug (counterexample written), 3 budget exceeded, 64 usage error.

Reports and counterexamples go to ``--out`` (default ``tsocc-out``), or to
``$TSOCC_OUT`` when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import litmus as lt
from .axioms import BudgetExceeded as CandidateBudgetExceeded
from .mc import BudgetExceeded, PASS, explore, replay, write_counterexample

EXIT_OK, EXIT_MISMATCH, EXIT_VIOLATION, EXIT_BUDGET, EXIT_USAGE = 0, 1, 2, 3, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(x: str) -> int:
    v = int(x)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {x}")
    return v


def _outdir(args) -> Path:
    p = Path(os.environ.get("TSOCC_OUT") or args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(out: Path, name: str, data) -> Path:
    p = out / name
    p.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
    return p


def _model_args(p: argparse.ArgumentParser, procs: int = 2) -> None:
    p.add_argument("--procs", type=_positive, default=procs)
    p.add_argument("--addrs", type=_positive, default=2)
    p.add_argument("--vals", type=int, default=2)
    p.add_argument("--net-max", type=_positive, default=None, help="per-node buffer bound (default 2*procs)")
    p.add_argument("--max-states", type=_positive, default=None)
    p.add_argument("--max-seconds", type=float, default=None)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--no-symmetry", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tsocc", description="Check TSO-CC against TSO through the TSO-LB model.")
    ap.add_argument("--out", default="tsocc-out", help="report directory (overridden by $TSOCC_OUT)")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    verify = sub.add_parser("verify", help="protocol refinement checks")
    vsub = verify.add_subparsers(dest="what", required=True, parser_class=_Parser)
    ref = vsub.add_parser("refinement", help="explore the protocol with the Match invariant")
    _model_args(ref)
    ref.add_argument("--mutation", default=None, help="seed a known bug (negative control)")
    par = vsub.add_parser("param", help="abstract-node check plus concrete lemma check")
    _model_args(par)
    par.add_argument("--restrictions", default=None, help="restriction file (default: shipped)")
    par.add_argument("--lemmas", default=None, help="lemma file (default: shipped)")

    lit = sub.add_parser("litmus", help="litmus tests under both semantics")
    lsub = lit.add_subparsers(dest="what", required=True, parser_class=_Parser)
    run = lsub.add_parser("run", help="evaluate one test (file path or shipped name)")
    run.add_argument("test")
    run.add_argument("--engine", choices=("axiomatic", "tsolb", "both"), default="both")
    camp = lsub.add_parser("campaign", help="random differential campaign")
    camp.add_argument("--seed", type=int, default=0)
    camp.add_argument("--count", type=_positive, default=500)
    camp.add_argument("--max-threads", type=_positive, default=2)
    camp.add_argument("--max-instrs", type=_positive, default=4)

    tl = sub.add_parser("tsolb", help="TSO-LB model checks")
    tsub = tl.add_subparsers(dest="what", required=True, parser_class=_Parser)
    thm = tsub.add_parser("check-theorem", help="check every trace up to a length bound")
    thm.add_argument("--depth", type=int, default=8)
    thm.add_argument("--procs", type=_positive, default=2)
    thm.add_argument("--addrs", type=_positive, default=2)
    thm.add_argument("--vals", type=_positive, default=2)
    thm.add_argument("--backend", choices=("auto", "compiled", "python"), default="auto")

    ex = sub.add_parser("explore", help="state-space statistics")
    esub = ex.add_subparsers(dest="what", required=True, parser_class=_Parser)
    dump = esub.add_parser("dump", help="reachable-state count without invariant checks")
    _model_args(dump)
    return ap


# ------------------------------------------------------------------ commands
def _report_exploration(m, rep, out: Path, tag: str) -> int:
    print(f"{tag}: {rep.verdict} states={rep.states} transitions={rep.transitions} depth={rep.depth} "
          f"time={rep.seconds:.1f}s")
    data = rep.summary()
    data["config"] = m.config
    if rep.counterexample is not None:
        ok = replay(m, rep.counterexample)
        path = write_counterexample(m, rep.counterexample, out / f"{tag}.cex")
        data["counterexample_file"] = path
        data["counterexample_replays"] = ok
        print(f"violated {rep.violated}; counterexample ({len(rep.counterexample)} steps, "
              f"replays={ok}) written to {path}")
    _write_json(out, f"{tag}.json", data)
    return EXIT_OK if rep.verdict == PASS else EXIT_VIOLATION


def cmd_verify_refinement(args) -> int:
    from .protocol import build_model
    out = _outdir(args)
    m = build_model(args.procs, args.addrs, args.vals, args.net_max, args.mutation)
    rep = explore(m, max_states=args.max_states, max_seconds=args.max_seconds,
                  symmetry=not args.no_symmetry, workers=args.workers)
    return _report_exploration(m, rep, out, "refinement")


def cmd_verify_param(args) -> int:
    from . import param
    out = _outdir(args)
    rpath, lpath = param.shipped_paths()
    restrictions, _ = param.load_rules(args.restrictions or rpath)
    _, lemmas = param.load_rules(args.lemmas or lpath)
    am = param.abstractify(args.procs, args.addrs, args.vals, restrictions, lemmas, args.net_max)
    print(f"{len(restrictions)} restrictions, {len(lemmas)} lemmas")
    rep = param.check_parameterized(am, max_states=args.max_states, workers=args.workers,
                                    symmetry=not args.no_symmetry)
    for problem in rep.pairing:
        print(f"pairing: {problem}")
    code = _report_exploration(am.model, rep.abstract, out, "param-abstract")
    if rep.trigger:
        print(f"abstract message: {rep.trigger}")
    if rep.concrete is not None:
        code = max(code, _report_exploration(rep.concrete.model_ref, rep.concrete, out, "param-lemmas"))
    if rep.pairing:
        code = max(code, EXIT_VIOLATION)
    return code


def _load_test(name: str) -> lt.LitmusTest:
    p = Path(name)
    if p.exists():
        return lt.load(p)
    stem = p.stem if p.suffix == ".litmus" else name
    if stem in lt.builtin_names():
        return lt.builtin(stem)
    raise FileNotFoundError(f"no litmus file {name!r} and no shipped test named {stem!r}")


def _witness_text(v: lt.Verdict) -> Optional[str]:
    if not v.observable:
        return None
    if v.engine == "tsolb":
        from .tsolb import dump_trace
        return dump_trace(v.witness)
    ex = v.witness.execution
    lines = [f"registers {' '.join(f'{k}={x}' for k, x in sorted(v.witness.registers.items()))}"]
    lines += [f"rf {a} -> {b}" for a, b in sorted(ex.rf)]
    lines += [f"co {a} -> {b}" for a, b in sorted(ex.co)]
    return "\n".join(lines) + "\n"


def cmd_litmus_run(args) -> int:
    out = _outdir(args)
    t = _load_test(args.test)
    engines = lt.ENGINES if args.engine == "both" else (args.engine,)
    verdicts = {e: lt.evaluate(t, e) for e in engines}
    summary = []
    code = EXIT_OK
    for e, v in verdicts.items():
        path = None
        text = _witness_text(v)
        if text is not None:
            path = out / f"{t.name}.{e}.witness"
            path.write_text(text)
        expected = t.expectation.get(e) if t.expectation else None
        mark = ""
        if expected is not None and expected != v.verdict:
            mark = f" (expected {expected})"
            code = EXIT_MISMATCH
        print(f"{t.name} {e} {v.verdict}{mark}")
        summary.append({"name": t.name, "engine": e, "verdict": v.verdict,
                        "witness": None if path is None else str(path)})
    if len(verdicts) == 2:
        cls = lt.Comparison(t.name, verdicts["axiomatic"], verdicts["tsolb"]).classification
        print(f"{t.name} {cls}")
        summary.append({"name": t.name, "classification": cls})
        if cls == lt.SOUNDNESS_BUG:
            code = EXIT_VIOLATION
    _write_json(out, f"litmus-{t.name}.json", summary)
    return code


def cmd_litmus_campaign(args) -> int:
    out = _outdir(args)
    counts = {lt.CONSISTENT: 0, lt.SOUNDNESS_BUG: 0, lt.STRICTNESS_GAP: 0}
    bugs = []
    for k in range(args.count):
        t = lt.generate_random(args.seed + k, args.max_threads, args.max_instrs)
        cls = lt.compare(t).classification
        counts[cls] += 1
        if cls == lt.SOUNDNESS_BUG:
            p = out / f"{t.name}.litmus"
            p.write_text(lt.format_test(t))
            bugs.append(str(p))
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    _write_json(out, "campaign.json", {"seed": args.seed, "count": args.count, "counts": counts,
                                       "soundness_bugs": bugs})
    return EXIT_VIOLATION if bugs else EXIT_OK


def cmd_tsolb_check_theorem(args) -> int:
    from .sweep import sweep, write_counterexamples
    out = _outdir(args)
    res = sweep(args.procs, args.addrs, args.vals, args.depth, args.backend)
    print(res.summary())
    files = write_counterexamples(res, out)
    _write_json(out, "theorem.json", {"procs": res.procs, "addrs": res.addrs, "vals": res.values,
                                      "depth": res.depth, "backend": res.backend, "traces": res.traces,
                                      "failures": res.failures, "seconds": round(res.seconds, 2),
                                      "counterexample_files": files})
    return EXIT_OK if res.passed else EXIT_VIOLATION


def cmd_explore_dump(args) -> int:
    from .protocol import build_model
    out = _outdir(args)
    m = build_model(args.procs, args.addrs, args.vals, args.net_max)
    m.invariants = []
    m.transition_invariants = []
    rep = explore(m, max_states=args.max_states, max_seconds=args.max_seconds,
                  symmetry=not args.no_symmetry, workers=args.workers, check_deadlock=False)
    print(json.dumps(rep.summary(), sort_keys=True))
    _write_json(out, "explore.json", dict(rep.summary(), config=m.config))
    return EXIT_OK


COMMANDS = {("verify", "refinement"): cmd_verify_refinement, ("verify", "param"): cmd_verify_param,
            ("litmus", "run"): cmd_litmus_run, ("litmus", "campaign"): cmd_litmus_campaign,
            ("tsolb", "check-theorem"): cmd_tsolb_check_theorem, ("explore", "dump"): cmd_explore_dump}


def run_command(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        return COMMANDS[(args.cmd, args.what)](args)
    except BudgetExceeded as e:
        print(f"budget exceeded: {e} {e.stats}", file=sys.stderr)
        return EXIT_BUDGET
    except CandidateBudgetExceeded as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (FileNotFoundError, ValueError) as e:
        print(f"tsocc: error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()

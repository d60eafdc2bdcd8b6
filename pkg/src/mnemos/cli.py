"""Command-line entry point: ``mnemos run|play|metrics|snapshot|validate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import MnemosError
from .harness import load_config, parse_seeds, run_experiment, validate_config, make_arm_session
from .metrics import ccs, ptr
from .memory_store import MemoryStore
from .policy import POLICY_NAMES
from .session_engine import Session, Transcript
from .twentyq_env import (
    FullHistoryContext,
    ScriptedGuesser,
    SessionContext,
    load_corpus,
    run_match,
    validate_corpus,
)


def _overrides(args) -> dict:
    seeds = None
    if getattr(args, "seeds", None):
        seeds = parse_seeds(args.seeds)
    elif getattr(args, "seed", None) is not None:
        seeds = (args.seed,)
    arms = tuple(a.strip() for a in args.arms.split(",") if a.strip()) if getattr(args, "arms", None) else None
    return {
        "seeds": seeds,
        "arms": arms,
        "policy": getattr(args, "policy", None),
        "capacity": getattr(args, "capacity", None),
        "window": getattr(args, "window", None),
        "output_dir": getattr(args, "out", None),
        "parallelism": getattr(args, "parallelism", None),
    }


def _add_common(p, *, seed=True):
    p.add_argument("--config", type=Path, help="INI experiment config")
    if seed:
        p.add_argument("--seed", type=int, help="single match seed (unsigned 64-bit)")
    p.add_argument("--policy", choices=POLICY_NAMES)
    p.add_argument("--capacity", type=int, help="memory capacity N")
    p.add_argument("--window", type=int, help="recent-query window T")


def cmd_run(args) -> int:
    config = load_config(args.config, **_overrides(args))
    problems = validate_config(config)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    manifest = run_experiment(config)
    print(Path(manifest.files["comparison"]["table"]).read_text(encoding="utf-8"), end="")
    print(f"manifest: {Path(config.output_dir) / 'manifest.json'}")
    return 0


def cmd_play(args) -> int:
    config = load_config(args.config, **_overrides(args))
    corpus = load_corpus(config.corpus_path)
    arm = config.resolve_arm(args.arm)
    if arm == "full":
        provider = FullHistoryContext()
    else:
        session, lookback = make_arm_session(config, arm)
        provider = SessionContext(session, lookback=lookback)
    seed = args.seed if args.seed is not None else config.seeds[0]
    outcome = run_match(corpus, seed, ScriptedGuesser(corpus), context_provider=provider)
    print(f"game g{seed} arm={arm}")
    for r in outcome.records:
        guess = r.guess if r.guess is not None else "-"
        mark = " (correct)" if r.correct else (" (wrong)" if r.guess is not None else "")
        print(f"turn {r.turn:2d}  Q: {r.question}  A: {r.answer}  guess: {guess}{mark}")
    status = "success" if outcome.success else "failure"
    print(f"outcome: {status} in {outcome.turns_used} turns; keyword was {outcome.keyword!r}")
    if outcome.diagnostic:
        print(f"diagnostic: {outcome.diagnostic}")
    return 0


def cmd_metrics(args) -> int:
    mem = Transcript.read_jsonl(args.transcript)
    result = {"transcript": str(args.transcript), "turns": len(mem), "ccs": ccs(mem, window=args.context_window)}
    if args.baseline:
        base = Transcript.read_jsonl(args.baseline)
        result["baseline"] = str(args.baseline)
        result["ptr_percent"] = ptr(mem, base, window=args.context_window)
    print(json.dumps(result, indent=2))
    return 0


def cmd_snapshot(args) -> int:
    if args.action == "dump":
        config = load_config(args.config, **_overrides(args))
        session = Session(config.session_config(config.policy), session_id="snapshot")
        queries = [q for q in Path(args.queries).read_text(encoding="utf-8").splitlines() if q.strip()]
        for q in queries:
            session.run_turn(q)
        text = session.store.dumps()
    else:
        store = MemoryStore.loads(Path(args.path).read_text(encoding="utf-8"))
        text = store.dumps()
        print(repr(store), file=sys.stderr)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_validate(args) -> int:
    problems = []
    config = None
    if args.config:
        try:
            config = load_config(args.config)
        except (MnemosError, ValueError, OSError) as exc:
            problems.append(f"config: {exc}")
        else:
            problems += [f"config: {p}" for p in validate_config(config)]
    corpus_path = args.corpus or (config.corpus_path if config else None)
    try:
        corpus = load_corpus(corpus_path)
    except (OSError, ValueError, KeyError) as exc:
        problems.append(f"corpus: {exc}")
    else:
        problems += [f"corpus: {p}" for p in validate_corpus(corpus)]
        print(f"corpus: {len(corpus)} keywords, {len(corpus.vocabulary)} attributes")
    for p in problems:
        print(p)
    print("ok" if not problems else f"{len(problems)} problem(s)")
    return 0 if not problems else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mnemos", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the experiment matrix from a config file")
    _add_common(p)
    p.add_argument("--seeds", help='seed range, e.g. "0-199" or "1,2,3"')
    p.add_argument("--arms", help="comma-separated arms, e.g. baseline-rolling-1,memory-relevance")
    p.add_argument("--out", help="output directory")
    p.add_argument("--parallelism", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("play", help="play one seeded 20 Questions match with a turn log")
    _add_common(p)
    p.add_argument("--arm", default="memory",
                   help="full, baseline, memory, baseline-stateless, baseline-rolling-K or memory-POLICY")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("metrics", help="recompute CCS / PTR from transcript files")
    p.add_argument("transcript", type=Path)
    p.add_argument("--baseline", type=Path, help="baseline transcript with the same queries (enables PTR)")
    p.add_argument("--context-window", type=int, default=None, help="turns aggregated into the context vector")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("snapshot", help="dump or load a memory store snapshot")
    snap = p.add_subparsers(dest="action", required=True)
    d = snap.add_parser("dump", help="run queries (one per line) through a session and dump its store")
    _add_common(d, seed=False)
    d.add_argument("--queries", required=True, type=Path)
    d.add_argument("--out", type=Path)
    d.set_defaults(func=cmd_snapshot)
    ld = snap.add_parser("load", help="load a snapshot and write it back out")
    ld.add_argument("path", type=Path)
    ld.add_argument("--out", type=Path)
    ld.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("validate", help="lint a corpus and/or config file")
    p.add_argument("--config", type=Path)
    p.add_argument("--corpus", type=Path)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MnemosError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands: gen-cases, consult, cohort, train, eval, explain. Exit
codes: 0 success, 1 runtime failure, 2 usage error. Errors print to
stderr with the machine-parsable prefix "mdtsim:error:<kind>:".
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import AppConfig, default_config_json, load_config
from .domain import default_treatments, load_case, save_case, validate_case
from .errors import MdtError
from .rl.train import ALGOS, load_policy, save_model, train
from .sim import (
    case_seed_for,
    consult_case,
    evaluate_policy,
    generate_case,
    run_cohort,
)


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _cmd_gen_cases(args, config: AppConfig) -> int:
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.n):
        case = generate_case(case_seed_for(args.seed, i),
                             difficulty=config.case.difficulty,
                             blocks=config.case.block_ranges(),
                             case_id=f"case-{i:05d}")
        save_case(case, os.path.join(args.out, f"{case.id}.json"))
    print(f"wrote {args.n} cases to {args.out}")
    return 0


def _cmd_consult(args, config: AppConfig) -> int:
    case = load_case(args.case)
    checked = validate_case(case, config.case.feature_dim)
    if checked is not case:
        msgs = "; ".join(f"{v.code}: {v.message}" for v in checked)
        raise MdtError(f"invalid case: {msgs}")
    seed = args.seed if args.seed is not None else config.master_seed
    result, audit = consult_case(case, config, seed,
                                 trace=args.trace or config.trace)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, f"{case.id}.result.json"),
                result.to_dict())
    audit.write(os.path.join(args.out, f"{case.id}.audit.jsonl"))
    name = result.treatments[result.recommendation].name
    print(f"{case.id}: recommendation={name} "
          f"W={result.final_matrix.kendall_w:.4f} "
          f"rounds={result.rounds_used} reason={result.termination_reason}")
    return 0


def _cmd_cohort(args, config: AppConfig) -> int:
    out = args.out if args.out else os.path.join(config.out_dir, "cohort")
    os.makedirs(out, exist_ok=True)
    metrics = run_cohort(args.n, args.seed, config, out_dir=out,
                         workers=args.workers)
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def _cmd_train(args, config: AppConfig) -> int:
    os.makedirs(args.out, exist_ok=True)
    model, curve = train(args.algo, args.episodes, args.seed, config)
    save_model(model, os.path.join(args.out, "model.json"))
    with open(os.path.join(args.out, "curve.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(curve.to_csv())
    manifest = {
        "algo": args.algo,
        "episodes": args.episodes,
        "seed": args.seed,
        "rl": config.to_dict()["rl"],
        "consensus": config.to_dict()["consensus"],
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"trained {args.algo} for {args.episodes} episodes -> {args.out}")
    return 0


def _cmd_eval(args, config: AppConfig) -> int:
    policy = load_policy(args.model)
    table = evaluate_policy(policy, args.cohort_seed, args.n, config)
    doc = json.dumps(table, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(doc + "\n")
    print(doc)
    return 0


def _cmd_explain(args, config: AppConfig) -> int:
    with open(args.result, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    k = len(doc["j_scores"])
    t = args.treatment
    if not 0 <= t < k:
        raise MdtError(f"treatment index {t} outside [0,{k})")
    names = [t_.name for t_ in default_treatments()]
    name = names[t] if t < len(names) else str(t)
    comp = doc["j_components"]
    lines = [
        f"Case {doc['case_id']}: decision breakdown for option {t} ({name})",
        f"  composite objective J = {doc['j_scores'][t]:.4f}"
        f" (recommended: option {doc['recommendation']},"
        f" {doc['recommendation_name']})",
        f"    group support     {comp['consensus'][t]:.4f}",
        f"    clinical fit      {comp['clinical_fit'][t]:.4f}",
        f"    evidence quality  {comp['evidence_quality'][t]:.4f}",
        f"  agreement W={doc['final_matrix']['kendall_w']:.4f}"
        f" after {doc['rounds_used']} round(s),"
        f" terminated: {doc['termination_reason']}",
        "  evidence cited by agents preferring this option:",
    ]
    cited = False
    for op in doc["per_round_opinions"][-1]:
        prefs = op["raw_preferences"]
        if prefs.index(max(prefs)) != t:
            continue
        cited = True
        ev = op["evidence"]
        lines.append(f"    {op['agent_id']} (confidence {op['confidence']:.2f},"
                     f" grade {ev['grade']}):")
        for item in (*ev["guidelines"], *ev["literature"]):
            lines.append(f"      - [{item['kind']}] {item['citation']}"
                         f" (relevance {item['relevance']:.3f})")
        if op["concerns"]:
            lines.append(f"      concerns: {', '.join(op['concerns'])}")
    if not cited:
        lines.append("    (no agent ranked this option first)")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdtsim",
        description="Multi-agent treatment-board consensus simulator")
    parser.add_argument("--config", help="JSON config file (defaults embedded)")
    parser.add_argument("--print-config", action="store_true",
                        help="print the full default configuration and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-cases", help="generate synthetic cases")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("consult", help="run one consultation")
    p.add_argument("--case", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trace", action="store_true")

    p = sub.add_parser("cohort", help="run a cohort of consultations")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("train", help="train an interaction policy")
    p.add_argument("--algo", choices=ALGOS, required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="compare a trained policy to baseline")
    p.add_argument("--model", required=True)
    p.add_argument("--cohort-seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("explain", help="render a decision explanation")
    p.add_argument("--result", required=True)
    p.add_argument("--treatment", type=int, required=True)

    return parser


_COMMANDS = {
    "gen-cases": _cmd_gen_cases,
    "consult": _cmd_consult,
    "cohort": _cmd_cohort,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "explain": _cmd_explain,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.print_config:
        sys.stdout.write(default_config_json())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except MdtError as exc:
        kind = type(exc).__name__
        print(f"mdtsim:error:{kind}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"mdtsim:error:{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()

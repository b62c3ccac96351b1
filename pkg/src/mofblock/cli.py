"""Command-line entry point.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors (unreadable
or invalid input). All outputs are UTF-8 JSON or JSONL.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .assembly import AtomStructure, to_cif
from .codec import parse_response
from .dataset import (
    StructureRecord,
    emit_corpora,
    evaluate,
    load_dataset,
    read_json,
)
from .descriptors import describe
from .errors import MofBlockError, ParseError
from .frames import BuildingBlock
from .lattice import LatticeParams, as_matrix, matrix_to_params, niggli_reduce, params_to_matrix
from .matcher import DEFAULT_TOLERANCES, MatchTolerances, structures_match
from .policy_sim import Scenario, random_baseline, run_training
from .reward import SapoConfig, reward_from_text


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(obj, out=None):
    text = json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _tolerance(value: str) -> MatchTolerances:
    try:
        parts = [float(x) for x in value.split(",")]
        if len(parts) != 3:
            raise ValueError
        return MatchTolerances(*parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected stol,ltol,atol with positive values, got {value!r}")


def structure_from_json(obj) -> AtomStructure:
    """Accept a structure record (blocks + poses) or an atom-level structure."""
    if isinstance(obj, dict) and "blocks" in obj:
        return StructureRecord.from_dict(obj).assemble()
    if isinstance(obj, dict) and "species" in obj:
        return AtomStructure.from_dict(obj)
    raise MofBlockError("expected a structure record or an atom-level structure")


def _blocks_from_json(items):
    return [BuildingBlock.from_local(b["species"], b["local_coords"], smiles=b.get("smiles", "")) for b in items]


def _read_text(path):
    if path in (None, "-"):
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


# --- subcommands ----------------------------------------------------------------


def cmd_encode(args, mode):
    data = load_dataset(args.input)
    counts = emit_corpora(data.records, mode, args.output)
    counts["errors"] = [{"line": e.line, "id": e.record_id, "message": str(e)} for e in data.errors]
    counts["skipped_on_load"] = data.skipped
    _emit(counts)
    return 0


def cmd_parse(args):
    text = _read_text(args.input)
    try:
        p = parse_response(text, expected_blocks=args.expected_blocks, strict=args.strict_parse)
    except ParseError as exc:
        _emit({"ok": False, "kind": exc.kind, "offset": exc.offset, "message": exc.message})
        return 2
    _emit(
        {
            "ok": True,
            "lattice": dict(zip(("a", "b", "c", "alpha", "beta", "gamma"), p.lattice)),
            "poses": [{"translation": np.asarray(q.translation).tolist(), "euler": list(q.euler)} for q in p.poses],
        }
    )
    return 0


def cmd_assemble(args):
    rec = StructureRecord.from_dict(read_json(args.input))
    if args.response:
        parsed = parse_response(_read_text(args.response), expected_blocks=len(rec.blocks), strict=args.strict_parse)
        rec = StructureRecord(rec.id, parsed.lattice, rec.blocks, parsed.poses)
    structure = rec.assemble()
    if args.cif:
        sys.stdout.write(to_cif(structure, rec.id))
    else:
        _emit(structure.to_dict(), args.output)
    return 0


def cmd_match(args):
    s1 = structure_from_json(read_json(args.pred))
    s2 = structure_from_json(read_json(args.gt))
    tols = args.tolerances or list(DEFAULT_TOLERANCES)
    reports = []
    for t in tols:
        r = structures_match(s1, s2, t).to_dict()
        r.update({"stol": t.stol, "ltol": t.ltol, "atol": t.atol})
        reports.append(r)
    _emit(reports[0] if len(reports) == 1 else reports, args.output)
    return 0


def cmd_evaluate(args):
    tols = args.tolerances or list(DEFAULT_TOLERANCES)
    summary = evaluate(args.input, tols, args.samples, args.workers, args.strict_parse)
    if args.table:
        sys.stdout.write(summary.table() + "\n")
        if args.output:
            _emit(summary.to_dict(), args.output)
    else:
        _emit(summary.to_dict(), args.output)
    return 0


def cmd_reward(args):
    rows = []
    with open(args.input, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    for ln in lines:
        obj = json.loads(ln)
        gt_obj = obj["gt_structure"]
        if "blocks" in obj:
            blocks = _blocks_from_json(obj["blocks"])
        elif isinstance(gt_obj, dict) and "blocks" in gt_obj:
            blocks = StructureRecord.from_dict(gt_obj).blocks
        else:
            raise MofBlockError("reward input needs blocks")
        gt = structure_from_json(gt_obj)
        detail = reward_from_text(obj["response_text"], blocks, gt, strict=args.strict_parse).to_dict()
        if "id" in obj:
            detail["id"] = obj["id"]
        rows.append(detail)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for r in rows:
            out.write(json.dumps(r, sort_keys=True) + "\n")
    finally:
        if args.output:
            out.close()
    return 0


def cmd_train_sim(args):
    scenario = Scenario.from_dict(read_json(args.scenario)) if args.scenario else Scenario.synthetic()
    cfg = SapoConfig(args.G, args.tau_pos, args.tau_neg)
    result = run_training(
        scenario, args.steps, cfg, args.seed, args.lr, args.sft_steps, args.sft_lr,
        metrics_path=args.output,
    )
    _emit(
        {
            "sft_final_nll": result.sft_nll[-1] if result.sft_nll else None,
            "trailing_mean_reward": result.trailing_mean(min(100, max(args.steps, 1))),
            "random_baseline": random_baseline(scenario, 50, args.G, args.seed),
            "steps": args.steps,
            "seed": args.seed,
        }
    )
    return 0


def cmd_descriptors(args):
    s = structure_from_json(read_json(args.input))
    radii = None
    if args.radii:
        radii = {int(k) if k.isdigit() else k: float(v) for k, v in read_json(args.radii).items()}
    _emit(describe(s, args.probe_radius, args.grid, radii).to_dict(), args.output)
    return 0


def cmd_niggli(args):
    obj = read_json(args.input)
    if isinstance(obj, dict) and ("species" in obj or "blocks" in obj):
        L = structure_from_json(obj).lattice
    elif isinstance(obj, dict) and "lattice" in obj:
        obj = obj["lattice"]
        L = as_matrix(obj) if np.asarray(obj).shape == (3, 3) else params_to_matrix(LatticeParams.coerce(obj))
    elif np.asarray(obj).shape == (3, 3):
        L = as_matrix(obj)
    else:
        L = params_to_matrix(LatticeParams.coerce(obj))
    L_red, P = niggli_reduce(L)
    p = matrix_to_params(L_red)
    _emit(
        {
            "matrix": L_red.tolist(),
            "params": dict(zip(("a", "b", "c", "alpha", "beta", "gamma"), p)),
            "transform": P.tolist(),
        },
        args.output,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mofblock", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("-o", "--output", help="output path (stdout when omitted)")
        return p

    for name, mode in (("encode-cpt", "cpt"), ("encode-sft", "sft")):
        p = add(name, f"render a {mode.upper()} JSONL corpus from structure records")
        p.add_argument("input")
        p.set_defaults(func=lambda a, m=mode: cmd_encode(a, m), output_required=True)

    p = add("parse", "parse a response text into lattice and poses")
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("--expected-blocks", type=int)
    p.add_argument("--strict-parse", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = add("assemble", "assemble a structure record (optionally with a response)")
    p.add_argument("input")
    p.add_argument("--response", help="response text whose lattice and poses replace the record's")
    p.add_argument("--cif", action="store_true", help="write a P1 CIF instead of JSON")
    p.add_argument("--strict-parse", action="store_true")
    p.set_defaults(func=cmd_assemble)

    p = add("match", "match a predicted structure against a ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--tolerances", type=_tolerance, action="append", metavar="STOL,LTOL,ATOL")
    p.set_defaults(func=cmd_match)

    p = add("evaluate", "match rate and RMSE over a JSONL of evaluation cases")
    p.add_argument("input")
    p.add_argument("--tolerances", type=_tolerance, action="append", metavar="STOL,LTOL,ATOL")
    p.add_argument("--samples", type=int, help="use the first N candidates per case")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strict-parse", action="store_true")
    p.add_argument("--table", action="store_true", help="print an aligned text table")
    p.set_defaults(func=cmd_evaluate)

    p = add("reward", "rewards for JSONL rows of {response_text, gt_structure, blocks}")
    p.add_argument("input")
    p.add_argument("--strict-parse", action="store_true")
    p.add_argument("--workers", type=int, default=1, help="accepted for interface parity; rows run in order")
    p.set_defaults(func=cmd_reward)

    p = add("train-sim", "supervised warm start then policy-gradient steps on a toy policy")
    p.add_argument("--scenario", help="scenario JSON (default: built-in two-block cell)")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--G", type=int, default=8)
    p.add_argument("--tau-pos", type=float, default=1.0)
    p.add_argument("--tau-neg", type=float, default=1.05)
    p.add_argument("--lr", type=float, default=20.0)
    p.add_argument("--sft-steps", type=int, default=200)
    p.add_argument("--sft-lr", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_sim)

    p = add("descriptors", "cell volume, density and grid void fraction / cavity diameter")
    p.add_argument("input")
    p.add_argument("--probe-radius", type=float, default=0.0)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--radii", help="JSON object of element -> vdW radius overrides")
    p.set_defaults(func=cmd_descriptors)

    p = add("niggli", "Niggli-reduce a lattice (params, matrix or structure JSON)")
    p.add_argument("input")
    p.set_defaults(func=cmd_niggli)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "output_required", False) and not args.output:
        parser.error(f"{args.command} requires -o/--output")
    try:
        return args.func(args)
    except (MofBlockError, ValueError, KeyError, TypeError, OSError) as exc:
        sys.stderr.write(f"mofblock {args.command}: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

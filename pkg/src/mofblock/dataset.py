"""JSONL ingestion of block-decomposed structures, corpus emission and
batch evaluation of candidate responses."""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .assembly import AssemblySpec, AtomStructure, assemble, disassemble
from .codec import CptRecord, parse_response, render_cpt, render_sft, render_sft_response
from .elements import SYMBOLS
from .errors import MofBlockError, ParseError, SchemaViolationError
from .frames import BlockPose, BuildingBlock
from .lattice import LatticeParams
from .matcher import DEFAULT_TOLERANCES, MatchTolerances, match_all
from .rotations import EulerAngles

log = logging.getLogger(__name__)

MAX_BLOCKS = 200


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("mofblock").joinpath("schemas", f"{name}.json").read_text("utf-8")
    return json.loads(text)


def _validator(name: str):
    schema = load_schema(name)
    return jsonschema.Draft202012Validator(schema)


def validate_record_dict(d, name: str = "structure_record", line=None):
    errors = sorted(_validator(name).iter_errors(d), key=lambda e: list(e.path))
    if errors:
        rid = d.get("id") if isinstance(d, dict) else None
        where = "/".join(str(p) for p in errors[0].path) or "<root>"
        raise SchemaViolationError(f"{where}: {errors[0].message}", rid, line)


@dataclass
class StructureRecord:
    id: str
    lattice: LatticeParams
    blocks: list
    poses: list
    topology_code: str | None = None
    topology_description: str | None = None

    def __post_init__(self):
        self.lattice = LatticeParams.coerce(self.lattice)
        if len(self.blocks) != len(self.poses):
            raise SchemaViolationError(
                f"{len(self.blocks)} blocks but {len(self.poses)} poses", self.id
            )

    @classmethod
    def from_dict(cls, d, line=None) -> "StructureRecord":
        validate_record_dict(d, line=line)
        rid = d["id"]
        try:
            blocks = []
            for b in d["blocks"]:
                if len(b["species"]) != len(b["local_coords"]):
                    raise SchemaViolationError("block species and coordinates differ in length", rid, line)
                blocks.append(BuildingBlock.from_local(b["species"], b["local_coords"], smiles=b.get("smiles", "")))
            poses = [BlockPose(p["translation"], EulerAngles(*p["euler"])) for p in d["poses"]]
            return cls(
                rid,
                LatticeParams.coerce(d["lattice"]),
                blocks,
                poses,
                d.get("topology_code"),
                d.get("topology_description"),
            )
        except SchemaViolationError as exc:
            exc.line = line if exc.line is None else exc.line
            raise
        except (MofBlockError, ValueError, KeyError) as exc:
            raise SchemaViolationError(str(exc), rid, line) from None

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "lattice": dict(zip(("a", "b", "c", "alpha", "beta", "gamma"), self.lattice)),
            "blocks": [
                {
                    "species": [SYMBOLS[z] for z in b.species],
                    "local_coords": np.asarray(b.local_coords).tolist(),
                    "smiles": b.smiles,
                }
                for b in self.blocks
            ],
            "poses": [
                {"translation": np.asarray(p.translation).tolist(), "euler": list(p.euler)}
                for p in self.poses
            ],
        }
        if self.topology_code is not None:
            out["topology_code"] = self.topology_code
        if self.topology_description is not None:
            out["topology_description"] = self.topology_description
        return out

    def assemble(self) -> AtomStructure:
        return assemble(AssemblySpec(self.lattice, self.blocks, self.poses))

    def sft_pair(self) -> dict:
        return {
            "id": self.id,
            "prompt": render_sft(self.blocks),
            "response": render_sft_response(self.lattice, self.poses),
        }

    @classmethod
    def from_structure(cls, rid, structure: AtomStructure, partition, smiles=None,
                       topology_code=None, topology_description=None) -> "StructureRecord":
        """Converter from an atom-level cell plus a block partition (lists of
        atom indices) into the block-level record."""
        spec = disassemble(structure, partition, smiles)
        return cls(rid, spec.lattice, spec.blocks, spec.poses, topology_code, topology_description)


@dataclass
class DatasetLoad:
    records: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


def _jsonl(path):
    """Yield ``(line_number, object or exception)`` for non-blank lines."""
    with open(path, "rb") as fh:
        for n, raw in enumerate(fh, start=1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                yield n, exc
                continue
            if not text.strip():
                continue
            try:
                yield n, json.loads(text)
            except json.JSONDecodeError as exc:
                yield n, exc


def load_dataset(path) -> DatasetLoad:
    """Read a JSONL file of structure records.

    Bad lines are collected in ``errors`` as :class:`SchemaViolationError`
    (with record id and line number) rather than aborting the load; records
    with more than 200 blocks go to ``skipped``. Missing files raise
    ``OSError``.
    """
    result = DatasetLoad()
    for n, obj in _jsonl(path):
        if isinstance(obj, Exception):
            result.errors.append(SchemaViolationError(f"unreadable line: {obj}", None, n))
            continue
        try:
            if isinstance(obj, dict) and isinstance(obj.get("blocks"), list) and len(obj["blocks"]) > MAX_BLOCKS:
                reason = f"{len(obj['blocks'])} blocks exceeds the limit of {MAX_BLOCKS}"
                log.warning("record %s on line %d skipped: %s", obj.get("id"), n, reason)
                result.skipped.append({"id": obj.get("id"), "line": n, "reason": reason})
                continue
            result.records.append(StructureRecord.from_dict(obj, line=n))
        except SchemaViolationError as exc:
            log.warning("line %d: %s", n, exc)
            result.errors.append(exc)
    return result


def emit_corpora(records, mode: str, out_path) -> dict:
    """Write a ``cpt`` ({id, text}) or ``sft`` ({id, prompt, response}) JSONL
    corpus in input order. Returns emitted/skipped counts and skip reasons."""
    if mode not in ("cpt", "sft"):
        raise ValueError(f"unknown corpus mode {mode!r}")
    emitted, skipped = 0, []
    with open(out_path, "w", encoding="utf-8", newline="\n") as out:
        for rec in records:
            if mode == "cpt":
                if not rec.topology_code or not rec.topology_description:
                    skipped.append({"id": rec.id, "reason": "missing topology fields"})
                    continue
                cpt = CptRecord(rec.topology_code, rec.topology_description, rec.lattice, rec.blocks, rec.poses)
                row = {"id": rec.id, "text": render_cpt(cpt)}
            else:
                row = rec.sft_pair()
            out.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
            emitted += 1
    return {"emitted": emitted, "skipped": len(skipped), "reasons": skipped}


# --- evaluation ---------------------------------------------------------------


@dataclass
class EvalCase:
    id: str
    candidates: list
    gt: StructureRecord

    def __post_init__(self):
        if not self.candidates:
            raise SchemaViolationError("an evaluation case needs at least one candidate", self.id)

    @property
    def blocks(self):
        return self.gt.blocks

    @classmethod
    def from_dict(cls, d, line=None) -> "EvalCase":
        validate_record_dict(d, "eval_case", line)
        return cls(d["id"], list(d["candidates"]), StructureRecord.from_dict(d["gt"], line))

    def to_dict(self) -> dict:
        return {"id": self.id, "candidates": list(self.candidates), "gt": self.gt.to_dict()}


def load_eval_cases(path):
    cases, errors = [], []
    for n, obj in _jsonl(path):
        if isinstance(obj, Exception):
            errors.append(SchemaViolationError(f"unreadable line: {obj}", None, n))
            continue
        try:
            cases.append(EvalCase.from_dict(obj, n))
        except SchemaViolationError as exc:
            errors.append(exc)
    return cases, errors


def candidate_structure(text, blocks, strict=False):
    """Assembled structure for one response, or ``None`` if unusable."""
    try:
        parsed = parse_response(text, expected_blocks=len(blocks), strict=strict)
        return assemble(AssemblySpec(parsed.lattice, list(blocks), parsed.poses))
    except (ParseError, MofBlockError, ValueError):
        return None


def evaluate_case(case: EvalCase, tolerance_sets=DEFAULT_TOLERANCES, samples=None, strict=False) -> dict:
    """Best RMSE per tolerance set (``None`` when unmatched) and wall time."""
    start = time.perf_counter()
    gt = case.gt.assemble()
    texts = case.candidates[:samples] if samples else case.candidates
    best = [None] * len(tolerance_sets)
    for text in texts:
        s = candidate_structure(text, case.blocks, strict)
        if s is None:
            continue
        for k, report in enumerate(match_all(s, gt, tolerance_sets)):
            if report.matched and (best[k] is None or report.rmse < best[k]):
                best[k] = report.rmse
    return {"id": case.id, "best_rmse": best, "seconds": time.perf_counter() - start}


def _evaluate_star(args):
    return evaluate_case(*args)


@dataclass
class EvalSummary:
    tolerance_sets: list
    match_rate: list
    rmse: list
    avg_time: float
    n_cases: int
    per_case: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_cases": self.n_cases,
            "avg_time_s": self.avg_time,
            "results": [
                {
                    "stol": t.stol,
                    "ltol": t.ltol,
                    "atol": t.atol,
                    "match_rate": mr,
                    "rmse": None if math.isnan(r) else r,
                }
                for t, mr, r in zip(self.tolerance_sets, self.match_rate, self.rmse)
            ],
            "cases": self.per_case,
            "errors": self.errors,
        }

    def table(self) -> str:
        header = ["tolerances (stol, ltol, atol)", "MR (%)", "RMSE", "Avg. time (s)"]
        rows = [
            [
                f"({t.stol:g}, {t.ltol:g}, {t.atol:g})",
                f"{mr:.2f}",
                "-" if math.isnan(r) else f"{r:.4f}",
                f"{self.avg_time:.3f}",
            ]
            for t, mr, r in zip(self.tolerance_sets, self.match_rate, self.rmse)
        ]
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(header, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        return "\n".join(lines)


def summarize(results, tolerance_sets, errors=()) -> EvalSummary:
    n = len(results)
    mrs, rmses = [], []
    for k in range(len(tolerance_sets)):
        hits = [r["best_rmse"][k] for r in results if r["best_rmse"][k] is not None]
        mrs.append(100.0 * len(hits) / n if n else 0.0)
        rmses.append(float(np.mean(hits)) if hits else float("nan"))
    avg = float(np.mean([r["seconds"] for r in results])) if results else 0.0
    return EvalSummary(list(tolerance_sets), mrs, rmses, avg, n, list(results), list(errors))


def evaluate_cases(cases, tolerance_sets=DEFAULT_TOLERANCES, samples=None, workers=1, strict=False,
                   errors=()) -> EvalSummary:
    """Table-style summary over cases. With ``workers > 1`` cases run in a
    process pool; results keep input order."""
    tolerance_sets = [t if isinstance(t, MatchTolerances) else MatchTolerances(*t) for t in tolerance_sets]
    jobs = [(c, tolerance_sets, samples, strict) for c in cases]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_star, jobs))
    else:
        results = [_evaluate_star(j) for j in jobs]
    return summarize(results, tolerance_sets, errors)


def evaluate(eval_path, tolerance_sets=DEFAULT_TOLERANCES, samples=None, workers=1, strict=False) -> EvalSummary:
    cases, errors = load_eval_cases(eval_path)
    err = [{"line": e.line, "id": e.record_id, "message": str(e)} for e in errors]
    return evaluate_cases(cases, tolerance_sets, samples, workers, strict, err)


def write_jsonl(rows, path):
    with open(path, "w", encoding="utf-8", newline="\n") as out:
        for row in rows:
            out.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))

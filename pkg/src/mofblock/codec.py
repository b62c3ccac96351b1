"""Text encoding of structures for pre-training and fine-tuning corpora, and
parsing of model responses back into block-level predictions.

Response format (one lattice line, then one line per block, in input order)::

    6.70 12.35 9.00 90.00 90.00 120.00
    [0] translation=(0.500 0.500 0.500) rotation=(0.000 0.000 0.000)
    [1] translation=(0.125 0.250 0.875) rotation=(-3.142 0.010 1.571)

Lattice values carry two decimals, translations and Euler angles (radians)
three, all rounded half-up.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import EmptyBlockListError, LatticeError, ParseError
from .frames import BlockPose, BuildingBlock, rotated_principal_axis
from .lattice import LatticeParams
from .rotations import EulerAngles, euler_to_matrix

TEMPLATE_ENV = "MOFBLOCK_TEMPLATE_DIR"

DEFAULT_TASK_DESCRIPTION = "Predict the crystal structure of a metal-organic framework"
DEFAULT_OUTPUT_FORMAT = (
    "the six lattice parameters a b c alpha beta gamma on the first line, then one line "
    "per building block: [i] translation=(x y z) rotation=(roll pitch yaw)"
)

# slack for values that rounding pushes just past a range boundary (3.14159 -> 3.142)
_ANGLE_SLACK = 1e-3

_PLACEHOLDER = re.compile(r"\[([A-Za-z][A-Za-z ]*)\]")
_NUMBER = re.compile(r"[+-]?\d+(?:\.\d+)?\Z", re.ASCII)
_INDEX_LINE = re.compile(r"\s*\[\s*(\d{1,9})\s*\]", re.ASCII)
_SEPARATORS = re.compile(r"[(),;]")
_STRICT_NUM = r"([+-]?\d+(?:\.\d+)?)"
_STRICT_LATTICE = re.compile(r"\A" + " ".join([_STRICT_NUM] * 6) + r"\Z", re.ASCII)
_STRICT_POSE = re.compile(
    r"\A\[(\d+)\] translation=\("
    + " ".join([_STRICT_NUM] * 3)
    + r"\) rotation=\("
    + " ".join([_STRICT_NUM] * 3)
    + r"\)\Z",
    re.ASCII,
)


def format_decimal(x: float, places: int) -> str:
    """Fixed-point rendering with round-half-up on the shortest repr."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot render non-finite value {x}")
    q = Decimal(repr(x)).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    s = f"{q:f}"
    if s.startswith("-") and Decimal(s) == 0:
        s = s[1:]
    return s


def format_values(values, places: int) -> str:
    return " ".join(format_decimal(v, places) for v in values)


def format_lattice(p) -> str:
    return format_values(LatticeParams.coerce(p), 2)


def format_pose(index: int, pose: BlockPose) -> str:
    return (
        f"[{index}] translation=({format_values(pose.translation, 3)}) "
        f"rotation=({format_values(pose.euler, 3)})"
    )


# --- templates ---------------------------------------------------------------


@lru_cache(maxsize=None)
def _read_template(directory: str | None, name: str) -> str:
    if directory:
        text = Path(directory, name).read_text(encoding="utf-8")
    else:
        text = resources.files("mofblock").joinpath("templates", name).read_text(encoding="utf-8")
    return text.rstrip("\n")


def load_template(name: str) -> str:
    """Template text; ``$MOFBLOCK_TEMPLATE_DIR`` overrides the packaged copy."""
    return _read_template(os.environ.get(TEMPLATE_ENV) or None, name)


def fill_template(template: str, values: dict) -> str:
    """Single-pass ``[Name]`` substitution; inserted text is never rescanned,
    so SMILES such as ``[Zn]`` survive intact."""

    def sub(m):
        key = m.group(1)
        return str(values[key]) if key in values else m.group(0)

    return _PLACEHOLDER.sub(sub, template)


# --- rendering ---------------------------------------------------------------


@dataclass
class CptRecord:
    topology_code: str
    topology_description: str
    lattice: LatticeParams
    blocks: list
    poses: list

    def __post_init__(self):
        self.lattice = LatticeParams.coerce(self.lattice)
        if len(self.blocks) != len(self.poses):
            raise ValueError("blocks and poses must be aligned")


def render_cpt(record: CptRecord) -> str:
    if not record.blocks:
        raise EmptyBlockListError("CPT record has no blocks")
    block_tpl = load_template("cpt_block.txt")
    place_tpl = load_template("cpt_placement.txt")
    properties = [
        fill_template(
            block_tpl,
            {
                "Index": f"[{i}]",
                "SMILES": b.smiles,
                "Molecular Weight": format_decimal(b.molecular_weight, 2),
                "PCA Span": f"({format_values(b.pca_span, 2)})",
            },
        )
        for i, b in enumerate(record.blocks)
    ]
    placements = []
    for i, pose in enumerate(record.poses):
        axis = rotated_principal_axis(euler_to_matrix(pose.euler))
        placements.append(
            fill_template(
                place_tpl,
                {
                    "Index": f"[{i}]",
                    "Translation": f"({format_values(pose.translation, 3)})",
                    "Rotation": f"({format_values(pose.euler, 3)})",
                    "Rotated Principal Axis": f"({format_values(axis, 3)})",
                },
            )
        )
    return fill_template(
        load_template("cpt.txt"),
        {
            "Topo Code": record.topology_code,
            "Topo Description": record.topology_description,
            "Lattice Parameters": format_lattice(record.lattice),
            "Block Properties": "\n".join(properties),
            "Block Placements": "\n".join(placements),
        },
    )


def render_sft(
    blocks,
    task_description: str = DEFAULT_TASK_DESCRIPTION,
    output_format: str = DEFAULT_OUTPUT_FORMAT,
) -> str:
    if not blocks:
        raise EmptyBlockListError("instruction needs at least one block")
    smiles = [b.smiles if isinstance(b, BuildingBlock) else str(b) for b in blocks]
    return fill_template(
        load_template("sft_instruction.txt"),
        {
            "Task Description": task_description,
            "Output Format": output_format,
            "SMILES List": " ".join(smiles),
        },
    )


def render_sft_response(lattice, poses) -> str:
    if not poses:
        raise EmptyBlockListError("response needs at least one pose")
    lines = [format_lattice(lattice)]
    lines.extend(format_pose(i, pose) for i, pose in enumerate(poses))
    return "\n".join(lines)


# --- parsing -----------------------------------------------------------------


@dataclass
class ParsedPrediction:
    lattice: LatticeParams
    poses: list = field(default_factory=list)


def _byte_offset(text: str, char_offset: int) -> int:
    return len(text[:char_offset].encode("utf-8", errors="surrogatepass"))


def _tokens(segment: str):
    """Split a line into (numbers, first malformed token or None)."""
    numbers, bad = [], None
    for tok in _SEPARATORS.sub(" ", segment).split():
        if "=" in tok:
            tok = tok.rsplit("=", 1)[1]
            if not tok:
                continue
        if _NUMBER.match(tok):
            numbers.append(tok)
        elif bad is None and any(ch in "0123456789" for ch in tok):
            bad = tok
    return numbers, bad


def _to_floats(tokens, text, offset):
    values = [float(t) for t in tokens]
    if not all(math.isfinite(v) for v in values):
        raise ParseError("range-error", _byte_offset(text, offset), "value overflows")
    return values


def _make_lattice(values, text, offset) -> LatticeParams:
    try:
        return LatticeParams(*values)
    except LatticeError as exc:
        raise ParseError("range-error", _byte_offset(text, offset), str(exc)) from None


def _make_pose(values, text, offset, strict: bool) -> BlockPose:
    t, (phi, omega, psi) = values[:3], values[3:]
    where = _byte_offset(text, offset)
    if abs(omega) > math.pi / 2 + _ANGLE_SLACK:
        raise ParseError("range-error", where, f"pitch {omega} outside [-pi/2, pi/2]")
    if strict:
        if max(abs(phi), abs(psi)) > math.pi + _ANGLE_SLACK:
            raise ParseError("range-error", where, "roll/yaw outside [-pi, pi]")
        if min(t) < 0 or max(t) > 1:
            raise ParseError("range-error", where, "translation outside [0, 1]")
    omega = min(max(omega, -math.pi / 2), math.pi / 2)
    phi = math.remainder(phi, 2 * math.pi) if abs(phi) > math.pi else phi
    psi = math.remainder(psi, 2 * math.pi) if abs(psi) > math.pi else psi
    return BlockPose(np.array(t), EulerAngles(phi, omega, psi))


def _lines(text: str):
    offset = 0
    for line in text.splitlines(keepends=True):
        yield offset, line.rstrip("\r\n")
        offset += len(line)


def parse_response(text, expected_blocks: int | None = None, strict: bool = False) -> ParsedPrediction:
    """Parse a response into a lattice and ordered poses.

    Raises :class:`ParseError` on any failure, never anything else. Lenient
    mode skips prose before the lattice line and around pose lines, accepts
    ``(x,y,z)`` or bare triples and wraps translations; strict mode accepts
    exactly the rendered format.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    elif not isinstance(text, str):
        raise ParseError("empty", 0, f"expected text, got {type(text).__name__}")
    if not text.strip():
        raise ParseError("empty", 0, "response is empty")
    if strict:
        prediction = _parse_strict(text)
    else:
        prediction = _parse_lenient(text)
    if expected_blocks is not None and len(prediction.poses) != expected_blocks:
        raise ParseError(
            "count-mismatch",
            len(text.encode("utf-8", errors="surrogatepass")),
            f"expected {expected_blocks} blocks, found {len(prediction.poses)}",
        )
    return prediction


def _check_indices(indices, text):
    for expected, (index, offset) in enumerate(indices):
        if index != expected:
            raise ParseError(
                "index-gap", _byte_offset(text, offset), f"expected block [{expected}], found [{index}]"
            )


def _parse_lenient(text: str) -> ParsedPrediction:
    lines = list(_lines(text))
    first_pose = next(
        (k for k, (_, line) in enumerate(lines) if _INDEX_LINE.match(line)), len(lines)
    )

    lattice_values, lattice_offset, malformed = None, 0, None
    for offset, line in reversed(lines[:first_pose]):
        numbers, bad = _tokens(line)
        if len(numbers) == 6 and bad is None:
            lattice_values, lattice_offset = numbers, offset
            break
        if bad is not None and malformed is None:
            malformed = (offset + line.find(bad), bad)
    if lattice_values is None:
        if malformed is not None:
            raise ParseError("malformed-number", _byte_offset(text, malformed[0]), f"bad number {malformed[1]!r}")
        if not any(ch in "0123456789" for ch in text):
            raise ParseError("empty", 0, "no numeric content")
        raise ParseError("missing-field", 0, "no line with six lattice parameters")
    lattice = _make_lattice(_to_floats(lattice_values, text, lattice_offset), text, lattice_offset)

    poses, indices = [], []
    for offset, line in lines[first_pose:]:
        m = _INDEX_LINE.match(line)
        if not m:
            continue
        numbers, bad = _tokens(line[m.end():])
        where = offset + m.end()
        if bad is not None:
            raise ParseError("malformed-number", _byte_offset(text, where), f"bad number {bad!r}")
        if len(numbers) < 6:
            raise ParseError("missing-field", _byte_offset(text, where), f"block [{m.group(1)}] has {len(numbers)} of 6 values")
        if len(numbers) > 6:
            raise ParseError("malformed-number", _byte_offset(text, where), f"block [{m.group(1)}] has extra values")
        indices.append((int(m.group(1)), offset))
        poses.append(_make_pose(_to_floats(numbers, text, where), text, where, strict=False))
    if not poses:
        raise ParseError("missing-field", _byte_offset(text, len(text)), "no block lines")
    _check_indices(indices, text)
    return ParsedPrediction(lattice, poses)


def _parse_strict(text: str) -> ParsedPrediction:
    lines = [(o, line) for o, line in _lines(text.rstrip())]
    offset, head = lines[0]
    m = _STRICT_LATTICE.match(head)
    if not m:
        raise ParseError("missing-field", _byte_offset(text, offset), "first line must hold six lattice values")
    lattice = _make_lattice(_to_floats(m.groups(), text, offset), text, offset)
    poses, indices = [], []
    for offset, line in lines[1:]:
        m = _STRICT_POSE.match(line)
        if not m:
            numbers, bad = _tokens(line)
            kind = "malformed-number" if bad is not None else "missing-field"
            raise ParseError(kind, _byte_offset(text, offset), f"malformed block line {line[:40]!r}")
        indices.append((int(m.group(1)), offset))
        poses.append(_make_pose(_to_floats(m.groups()[1:], text, offset), text, offset, strict=True))
    if not poses:
        raise ParseError("missing-field", _byte_offset(text, len(text)), "no block lines")
    _check_indices(indices, text)
    return ParsedPrediction(lattice, poses)

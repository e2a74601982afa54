"""Action units, strategy programs and their text format.

Grammar of the interpreter output (whitespace between tokens is free)::

    set      := strategy+
    strategy := ["New"] "Strategy" [INT] ":" INT ("step" | "steps") ":" step+
    step     := "(" INT ")" "(" NAME "," JOINT "," DELTA ")"
    NAME     := [A-Za-z][A-Za-z0-9 _-]*     (trimmed)
    JOINT    := "revolute" | "prismatic"    (case-insensitive)
    DELTA    := signed decimal | "+" | "-"

A strategy without an index ("Strategy: 1 step: ...") gets its position in
the set as index.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Union as _TypeUnion

DEFAULT_MAGNITUDE = {"revolute": 90.0, "prismatic": 0.5}


class JointKind(enum.Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"

    @classmethod
    def parse(cls, token: str) -> JointKind:
        return cls(token.strip().lower())


class StrategySyntaxError(SyntaxError):
    """Malformed strategy text. `line` and `column` are 1-based."""

    def __init__(self, message: str, text: str, pos: int):
        line = text.count("\n", 0, pos) + 1
        column = pos - (text.rfind("\n", 0, pos) + 1) + 1
        src_line = text.splitlines()[line - 1] if text.splitlines() and line <= len(text.splitlines()) else ""
        super().__init__(f"{message} (line {line}, column {column})", ("<strategy>", line, column, src_line))
        self.line = line
        self.column = column


class UnknownJoint(StrategySyntaxError):
    pass


class EmptyStrategySet(ValueError):
    pass


_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9 _-]*\Z")


@dataclass(frozen=True)
class ActionUnit:
    """(part, joint, delta): delta in degrees for revolute, fraction of the
    part's bounding-box extent for prismatic. Positive pulls the part away
    from the object body."""

    part_name: str
    joint: JointKind
    delta: float

    def __post_init__(self):
        if not _NAME_RE.match(self.part_name) or self.part_name != self.part_name.strip():
            raise ValueError(f"invalid part name {self.part_name!r}")
        if self.delta == 0 or not math.isfinite(self.delta):
            raise ValueError("delta must be non-zero and finite")
        object.__setattr__(self, "delta", float(self.delta))


@dataclass(frozen=True)
class Strategy:
    index: int
    steps: tuple[ActionUnit, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.index < 1:
            raise ValueError("strategy index must be positive")
        if not self.steps:
            raise ValueError("strategy needs at least one step")


@dataclass(frozen=True)
class StrategySet:
    strategies: tuple[Strategy, ...]

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        prev = 0
        for s in self.strategies:
            if s.index <= prev:
                raise ValueError("strategy indices must be strictly increasing from 1")
            prev = s.index

    def __len__(self) -> int:
        return len(self.strategies)

    def __iter__(self):
        return iter(self.strategies)


# -- program expressions -----------------------------------------------------

@dataclass(frozen=True)
class UnitExpr:
    unit: ActionUnit


@dataclass(frozen=True)
class UnionExpr:
    """Unordered alternatives; kept in preference order."""

    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("Union needs at least two children")


@dataclass(frozen=True)
class ListExpr:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("List needs at least two children")


ProgramExpr = _TypeUnion[UnitExpr, UnionExpr, ListExpr]


def _strategy_expr(s: Strategy) -> ProgramExpr:
    if len(s.steps) == 1:
        return UnitExpr(s.steps[0])
    return ListExpr(tuple(UnitExpr(u) for u in s.steps))


def to_expr(s: StrategySet) -> ProgramExpr:
    if not s.strategies:
        raise EmptyStrategySet("no strategies")
    exprs = tuple(_strategy_expr(st) for st in s.strategies)
    if len(exprs) == 1:
        return exprs[0]
    return UnionExpr(exprs)


def format_expr(e: ProgramExpr) -> str:
    if isinstance(e, UnitExpr):
        u = e.unit
        return f"({u.part_name}, {u.joint.value}, {format_delta(u.delta)})"
    if isinstance(e, UnionExpr):
        return "Union{" + ", ".join(format_expr(c) for c in e.children) + "}"
    return "List[" + ", ".join(format_expr(c) for c in e.children) + "]"


# -- parser --------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str, pos: int | None = None, cls=StrategySyntaxError):
        return cls(msg, self.text, self.pos if pos is None else pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self, literal: str) -> bool:
        self.skip_ws()
        return self.text.startswith(literal, self.pos)

    def peek_word(self, word: str) -> bool:
        self.skip_ws()
        end = self.pos + len(word)
        if self.text[self.pos:end].lower() != word.lower():
            return False
        return end >= len(self.text) or not self.text[end].isalnum()

    def expect(self, literal: str):
        if not self.peek(literal):
            found = self.text[self.pos:self.pos + 12] or "end of input"
            raise self.error(f"expected {literal!r}, found {found!r}")
        self.pos += len(literal)

    def expect_word(self, word: str):
        if not self.peek_word(word):
            found = self.text[self.pos:self.pos + 12] or "end of input"
            raise self.error(f"expected {word!r}, found {found!r}")
        self.pos += len(word)

    def integer(self) -> int:
        self.skip_ws()
        m = re.compile(r"\d+").match(self.text, self.pos)
        if not m:
            raise self.error("expected an integer")
        self.pos = m.end()
        return int(m.group())

    def maybe_integer(self) -> int | None:
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos].isdigit():
            return self.integer()
        return None

    def parse_set(self) -> StrategySet:
        if self.at_end():
            raise self.error("empty strategy text")
        strategies = []
        prev = 0
        while not self.at_end():
            start = self.pos
            s = self.parse_strategy(prev + 1)
            if s.index <= prev:
                raise self.error(f"strategy index {s.index} is not increasing", pos=start)
            strategies.append(s)
            prev = s.index
        return StrategySet(tuple(strategies))

    def parse_strategy(self, default_index: int) -> Strategy:
        start = self.pos
        if self.peek_word("New"):
            self.expect_word("New")
        self.expect_word("Strategy")
        index = self.maybe_integer()
        if index is None:
            index = default_index
        elif index < 1:
            raise self.error("strategy index must be positive", pos=start)
        self.expect(":")
        count_pos = self.pos
        count = self.integer()
        if self.peek_word("steps"):
            self.expect_word("steps")
        else:
            self.expect_word("step")
        self.expect(":")
        steps = []
        while self.peek("("):
            steps.append(self.parse_step(len(steps) + 1))
        if not steps:
            raise self.error("strategy has no steps")
        if count != len(steps):
            raise self.error(f"header announces {count} step(s) but {len(steps)} found", pos=count_pos)
        return Strategy(index, tuple(steps))

    def parse_step(self, expected: int) -> ActionUnit:
        self.expect("(")
        num_pos = self.pos
        num = self.integer()
        if num != expected:
            raise self.error(f"step number {num} out of order, expected {expected}", pos=num_pos)
        self.expect(")")
        self.expect("(")
        self.skip_ws()
        name_start = self.pos
        end = self.text.find(",", self.pos)
        close = self.text.find(")", self.pos)
        if end < 0 or (0 <= close < end):
            raise self.error("expected ',' after part name")
        name = self.text[self.pos:end].strip()
        if not _NAME_RE.match(name):
            raise self.error(f"invalid part name {name!r}", pos=name_start)
        self.pos = end + 1
        self.skip_ws()
        joint_pos = self.pos
        m = re.compile(r"[A-Za-z]+").match(self.text, self.pos)
        if not m:
            raise self.error("expected joint type")
        try:
            joint = JointKind.parse(m.group())
        except ValueError:
            raise self.error(f"unknown joint type {m.group()!r}", pos=joint_pos, cls=UnknownJoint) from None
        self.pos = m.end()
        self.expect(",")
        delta = self.parse_delta(joint)
        self.expect(")")
        return ActionUnit(name, joint, delta)

    def parse_delta(self, joint: JointKind) -> float:
        self.skip_ws()
        start = self.pos
        m = re.compile(r"([+-]?)(\d+(?:\.\d*)?|\.\d+)?").match(self.text, self.pos)
        sign, number = m.group(1), m.group(2)
        if number is None:
            if not sign:
                raise self.error("expected a signed number or a bare sign")
            self.pos = m.end()
            magnitude = DEFAULT_MAGNITUDE[joint.value]
            return magnitude if sign == "+" else -magnitude
        self.pos = m.end()
        value = float(number)
        if value == 0 or not math.isfinite(value):
            raise self.error("delta must be non-zero and finite", pos=start)
        return -value if sign == "-" else value


def parse_strategies(text: str) -> StrategySet:
    """Parse interpreter output into a StrategySet.

    Raises StrategySyntaxError (a SyntaxError subclass carrying line and
    column) on any malformed input; UnknownJoint for joint tokens other
    than revolute/prismatic.
    """
    if not isinstance(text, str):
        raise TypeError("text must be a string")
    return _Parser(text).parse_set()


# -- serializer ----------------------------------------------------------------

def format_delta(x: float) -> str:
    sign = "+" if x > 0 else "-"
    mag = abs(float(x))
    if mag.is_integer() and mag < 1e16:
        body = str(int(mag))
    else:
        # shortest repr, expanded to plain decimal so the grammar accepts it
        body = format(Decimal(repr(mag)), "f")
    return sign + body


def format_strategy(s: Strategy) -> str:
    n = len(s.steps)
    steps = " ".join(
        f"({i}) ({u.part_name}, {u.joint.value}, {format_delta(u.delta)})" for i, u in enumerate(s.steps, 1)
    )
    return f"Strategy {s.index}: {n} {'step' if n == 1 else 'steps'}: {steps}"


def serialize_strategies(s: StrategySet) -> str:
    if not s.strategies:
        raise EmptyStrategySet("cannot serialize an empty strategy set")
    return "\n".join(format_strategy(st) for st in s.strategies)


def strategies_to_json(s: StrategySet) -> dict:
    return {
        "strategies": [
            {
                "index": st.index,
                "steps": [{"part": u.part_name, "joint": u.joint.value, "delta": u.delta} for u in st.steps],
            }
            for st in s.strategies
        ]
    }


def strategies_from_json(doc: dict | str) -> StrategySet:
    if isinstance(doc, str):
        doc = json.loads(doc)
    return StrategySet(tuple(
        Strategy(int(st["index"]), tuple(
            ActionUnit(u["part"], JointKind.parse(u["joint"]), float(u["delta"])) for u in st["steps"]
        ))
        for st in doc["strategies"]
    ))

"""Plain-text scheduling instance format: parse, validate, serialize.

The format is line oriented. A header line carries five entity counts,
followed by one record line per entity, grouped in header order:

    ppoi <buildings> <solars> <batteries> <recurring> <onceoff>
    b <id> <small_rooms> <large_rooms>
    s <solar_id> <building_id>
    c <id> <capacity_kwh> <max_power_kw> <efficiency>
    r <id> <rooms> <S|L> <load_kw> <duration> <n_prec> <prec ids...>
    a <id> <rooms> <S|L> <load_kw> <duration> <value> <penalty> <n_prec> <prec ids...>

Tokens are whitespace separated; blank lines and surrounding whitespace are
tolerated. Ids must be dense from 0 within each record group. Once-off
(``a``) activities are parsed for completeness but never scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

SMALL = "S"
LARGE = "L"
ROOM_SIZES = (SMALL, LARGE)


class InstanceFormatError(ValueError):
    """Malformed instance text. Carries the 1-based offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Violation:
    """A single domain-rule violation; validation returns these as data."""

    kind: str
    message: str


@dataclass
class Building:
    id: int
    small_rooms: int
    large_rooms: int

    def rooms(self, size: str) -> int:
        return self.small_rooms if size == SMALL else self.large_rooms


@dataclass
class SolarMapping:
    id: int
    building_id: int


@dataclass
class Battery:
    id: int
    capacity: float      # kWh
    max_power: float     # kW, charge and discharge alike
    efficiency: float    # round-trip, in (0, 1]


@dataclass
class RecurringActivity:
    id: int
    rooms_required: int
    room_size: str       # "S" or "L"
    load: float          # kW while running, per activity
    duration: int        # 15-minute periods
    precedences: list[int] = field(default_factory=list)


@dataclass
class OnceOffActivity:
    id: int
    rooms_required: int
    room_size: str
    load: float
    duration: int
    value: float
    penalty: float
    precedences: list[int] = field(default_factory=list)


@dataclass
class Instance:
    buildings: list[Building] = field(default_factory=list)
    solars: list[SolarMapping] = field(default_factory=list)
    batteries: list[Battery] = field(default_factory=list)
    recurring: list[RecurringActivity] = field(default_factory=list)
    onceoff: list[OnceOffActivity] = field(default_factory=list)

    def total_rooms(self, size: str) -> int:
        return sum(b.rooms(size) for b in self.buildings)


def _int(token: str, what: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise InstanceFormatError(f"non-numeric {what} {token!r}", line) from None


def _float(token: str, what: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise InstanceFormatError(f"non-numeric {what} {token!r}", line) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise InstanceFormatError(f"non-finite {what} {token!r}", line)
    return value


def _expect_id(token: str, expected: int, what: str, line: int) -> int:
    value = _int(token, f"{what} id", line)
    if value != expected:
        raise InstanceFormatError(f"{what} id {value} out of order, expected {expected}", line)
    return value


def _room_size(token: str, line: int) -> str:
    if token not in ROOM_SIZES:
        raise InstanceFormatError(f"room size must be S or L, got {token!r}", line)
    return token


def _precedences(tokens: list[str], start: int, limit: int, what: str, line: int) -> list[int]:
    n = _int(tokens[start], "precedence count", line)
    if n < 0:
        raise InstanceFormatError(f"negative precedence count {n}", line)
    ids = tokens[start + 1:]
    if len(ids) != n:
        raise InstanceFormatError(
            f"expected {n} precedence ids, got {len(ids)}", line)
    out = []
    for tok in ids:
        pid = _int(tok, "precedence id", line)
        if not 0 <= pid < limit:
            raise InstanceFormatError(f"{what} precedence id {pid} out of range", line)
        out.append(pid)
    return out


def parse_instance(text: str) -> Instance:
    """Parse instance text. Raises InstanceFormatError with a line number."""
    lines = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise InstanceFormatError("missing header", 1)

    line, tokens = lines[0]
    if tokens[0] != "ppoi" or len(tokens) != 6:
        raise InstanceFormatError("header must be 'ppoi' followed by five counts", line)
    counts = [_int(t, "count", line) for t in tokens[1:]]
    if any(c < 0 for c in counts):
        raise InstanceFormatError("negative count in header", line)
    nb, ns, nc, nr, na = counts

    inst = Instance()
    cursor = 1

    def take(prefix: str, expected: int, what: str):
        nonlocal cursor
        rows = []
        while cursor < len(lines) and lines[cursor][1][0] == prefix:
            rows.append(lines[cursor])
            cursor += 1
        if len(rows) != expected:
            at = rows[-1][0] if rows else (lines[cursor][0] if cursor < len(lines) else lines[-1][0])
            raise InstanceFormatError(
                f"expected {expected} {what} lines, found {len(rows)}", at)
        return rows

    for line, tokens in take("b", nb, "building"):
        if len(tokens) != 4:
            raise InstanceFormatError("building line needs 4 tokens", line)
        small = _int(tokens[2], "small room count", line)
        large = _int(tokens[3], "large room count", line)
        if small < 0 or large < 0:
            raise InstanceFormatError("negative room count", line)
        inst.buildings.append(Building(_expect_id(tokens[1], len(inst.buildings), "building", line), small, large))

    for line, tokens in take("s", ns, "solar"):
        if len(tokens) != 3:
            raise InstanceFormatError("solar line needs 3 tokens", line)
        sid = _expect_id(tokens[1], len(inst.solars), "solar", line)
        bid = _int(tokens[2], "building id", line)
        if not 0 <= bid < nb:
            raise InstanceFormatError(f"solar building id {bid} out of range", line)
        inst.solars.append(SolarMapping(sid, bid))

    for line, tokens in take("c", nc, "battery"):
        if len(tokens) != 5:
            raise InstanceFormatError("battery line needs 5 tokens", line)
        bid = _expect_id(tokens[1], len(inst.batteries), "battery", line)
        cap = _float(tokens[2], "capacity", line)
        power = _float(tokens[3], "max power", line)
        eff = _float(tokens[4], "efficiency", line)
        if cap <= 0 or power <= 0:
            raise InstanceFormatError("battery capacity and power must be positive", line)
        if not 0 < eff <= 1:
            raise InstanceFormatError(f"efficiency {eff} outside (0, 1]", line)
        inst.batteries.append(Battery(bid, cap, power, eff))

    for line, tokens in take("r", nr, "recurring activity"):
        if len(tokens) < 7:
            raise InstanceFormatError("recurring activity line needs at least 7 tokens", line)
        aid = _expect_id(tokens[1], len(inst.recurring), "recurring activity", line)
        rooms = _int(tokens[2], "room count", line)
        size = _room_size(tokens[3], line)
        load = _float(tokens[4], "load", line)
        duration = _int(tokens[5], "duration", line)
        if rooms < 1 or duration < 1 or load < 0:
            raise InstanceFormatError("rooms/duration must be >= 1 and load >= 0", line)
        precs = _precedences(tokens, 6, nr, "recurring", line)
        inst.recurring.append(RecurringActivity(aid, rooms, size, load, duration, precs))

    for line, tokens in take("a", na, "once-off activity"):
        if len(tokens) < 9:
            raise InstanceFormatError("once-off activity line needs at least 9 tokens", line)
        aid = _expect_id(tokens[1], len(inst.onceoff), "once-off activity", line)
        rooms = _int(tokens[2], "room count", line)
        size = _room_size(tokens[3], line)
        load = _float(tokens[4], "load", line)
        duration = _int(tokens[5], "duration", line)
        value = _float(tokens[6], "value", line)
        penalty = _float(tokens[7], "penalty", line)
        if rooms < 1 or duration < 1 or load < 0:
            raise InstanceFormatError("rooms/duration must be >= 1 and load >= 0", line)
        precs = _precedences(tokens, 8, na, "once-off", line)
        inst.onceoff.append(OnceOffActivity(aid, rooms, size, load, duration, value, penalty, precs))

    if cursor < len(lines):
        line, tokens = lines[cursor]
        raise InstanceFormatError(f"unexpected line prefix {tokens[0]!r}", line)
    return inst


def _fmt(x: float) -> str:
    # keep integral values free of a trailing ".0" so round-trips stay tidy
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def serialize_instance(inst: Instance) -> str:
    out = [f"ppoi {len(inst.buildings)} {len(inst.solars)} {len(inst.batteries)} "
           f"{len(inst.recurring)} {len(inst.onceoff)}"]
    for b in inst.buildings:
        out.append(f"b {b.id} {b.small_rooms} {b.large_rooms}")
    for s in inst.solars:
        out.append(f"s {s.id} {s.building_id}")
    for c in inst.batteries:
        out.append(f"c {c.id} {_fmt(c.capacity)} {_fmt(c.max_power)} {_fmt(c.efficiency)}")
    for r in inst.recurring:
        prec = " ".join(str(p) for p in r.precedences)
        tail = f" {prec}" if prec else ""
        out.append(f"r {r.id} {r.rooms_required} {r.room_size} {_fmt(r.load)} "
                   f"{r.duration} {len(r.precedences)}{tail}")
    for a in inst.onceoff:
        prec = " ".join(str(p) for p in a.precedences)
        tail = f" {prec}" if prec else ""
        out.append(f"a {a.id} {a.rooms_required} {a.room_size} {_fmt(a.load)} "
                   f"{a.duration} {_fmt(a.value)} {_fmt(a.penalty)} {len(a.precedences)}{tail}")
    return "\n".join(out) + "\n"


def _find_cycle(recurring: list[RecurringActivity]) -> list[int] | None:
    # iterative DFS; precedence edges point predecessor -> activity
    color = {a.id: 0 for a in recurring}
    succs: dict[int, list[int]] = {a.id: [] for a in recurring}
    for a in recurring:
        for p in a.precedences:
            if p in succs:
                succs[p].append(a.id)
    for root in sorted(color):
        if color[root]:
            continue
        stack = [(root, iter(succs[root]))]
        color[root] = 1
        trail = [root]
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 0:
                    color[nxt] = 1
                    stack.append((nxt, iter(succs[nxt])))
                    trail.append(nxt)
                    advanced = True
                    break
                if color[nxt] == 1:
                    return trail[trail.index(nxt):] + [nxt]
            if not advanced:
                color[node] = 2
                stack.pop()
                trail.pop()
    return None


def validate_instance(inst: Instance) -> list[Violation]:
    """Domain checks beyond raw syntax. Empty result means a usable instance."""
    violations: list[Violation] = []
    nb, nr, na = len(inst.buildings), len(inst.recurring), len(inst.onceoff)

    for group, name in ((inst.buildings, "building"), (inst.solars, "solar"),
                        (inst.batteries, "battery"), (inst.recurring, "recurring activity"),
                        (inst.onceoff, "once-off activity")):
        for pos, item in enumerate(group):
            if item.id != pos:
                violations.append(Violation("id_order", f"{name} id {item.id} at position {pos}"))

    for s in inst.solars:
        if not 0 <= s.building_id < nb:
            violations.append(Violation(
                "index_range", f"solar {s.id} maps to missing building {s.building_id}"))

    for r in inst.recurring:
        for p in r.precedences:
            if not 0 <= p < nr:
                violations.append(Violation(
                    "index_range", f"recurring activity {r.id} precedence {p} out of range"))
    for a in inst.onceoff:
        for p in a.precedences:
            if not 0 <= p < na:
                violations.append(Violation(
                    "index_range", f"once-off activity {a.id} precedence {p} out of range"))

    cycle = _find_cycle(inst.recurring)
    if cycle is not None:
        path = " -> ".join(str(i) for i in cycle)
        violations.append(Violation("precedence_cycle", f"recurring precedence cycle: {path}"))

    for group, name in ((inst.recurring, "recurring"), (inst.onceoff, "once-off")):
        for act in group:
            have = inst.total_rooms(act.room_size)
            if act.rooms_required > have:
                violations.append(Violation(
                    "insufficient_rooms",
                    f"{name} activity {act.id} needs {act.rooms_required} "
                    f"{act.room_size} rooms, buildings hold {have}"))
    return violations

"""Schedule representation, feasibility checking and cost evaluation.

The objective for a month is

    cost = sum_t 0.25 * l_t * e_t / 1000  +  0.005 * (max_t l_t)^2

with ``l_t`` the net grid load in kW, ``e_t`` the price in $/MWh, and the
maximum taken as-is (it may be negative) before squaring.

Batteries run at full power or not at all. Charging at power P draws P kW
from the grid and stores 0.25*P*sqrt(eff) kWh; discharging drains 0.25*P kWh
of storage and offsets sqrt(eff)*P kW of grid load. State of charge starts
at 0 and must stay within [0, capacity].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .instance import Instance, Violation, SMALL, LARGE
from .series import Calendar, NetLoadSeries, PriceSeries, PERIODS_PER_DAY, WORK_START, WORK_END, WEEKDAYS

SOC_TOL = 1e-9
WEEK_PERIODS = WEEKDAYS * PERIODS_PER_DAY


class InfeasibleScheduleError(ValueError):
    """Schedule violates a hard constraint (battery SOC bounds, shape, ...)."""


@dataclass(frozen=True)
class Slot:
    """A weekly activity start: weekday (0=Mon..4=Fri) and period of day."""

    weekday: int
    period_of_day: int

    @property
    def week_key(self) -> int:
        return self.weekday * PERIODS_PER_DAY + self.period_of_day


@dataclass(frozen=True)
class Placement:
    activity_id: int
    slot: Slot
    rooms: tuple[tuple[int, str], ...]   # (building_id, room_size) per room used


class BatteryAction(IntEnum):
    IDLE = 0
    CHARGE = 1
    DISCHARGE = 2


ACTION_CODES = {BatteryAction.IDLE: "I", BatteryAction.CHARGE: "C", BatteryAction.DISCHARGE: "D"}
CODE_ACTIONS = {v: k for k, v in ACTION_CODES.items()}


@dataclass
class Schedule:
    placements: list[Placement]
    battery_plan: np.ndarray   # int8, shape (num_batteries, horizon)

    def copy(self) -> "Schedule":
        return Schedule(list(self.placements), self.battery_plan.copy())


def empty_schedule(inst: Instance, cal: Calendar) -> Schedule:
    plan = np.zeros((len(inst.batteries), cal.horizon), dtype=np.int8)
    return Schedule([], plan)


def activity_load_profile(inst: Instance, cal: Calendar, schedule: Schedule) -> np.ndarray:
    """kW added by recurring activities, materialized over the whole month.

    An activity runs every week at its slot; weeks where that weekday does
    not exist in the month contribute nothing.
    """
    profile = np.zeros(cal.horizon, dtype=float)
    for pl in schedule.placements:
        act = inst.recurring[pl.activity_id]
        for day in range(cal.days_in_month):
            if cal.day_of_week(day) == pl.slot.weekday:
                start = day * PERIODS_PER_DAY + pl.slot.period_of_day
                profile[start:start + act.duration] += act.load
    return profile


def simulate_batteries(inst: Instance, plan: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray, list[Violation]]:
    """Grid effect (kW per period), SOC trajectory, and any SOC violations."""
    plan = np.asarray(plan)
    if plan.ndim != 2 or plan.shape[0] != len(inst.batteries):
        raise InfeasibleScheduleError(
            f"battery plan must have shape ({len(inst.batteries)}, horizon)")
    horizon = plan.shape[1]
    effect = np.zeros(horizon, dtype=float)
    soc = np.zeros((len(inst.batteries), horizon), dtype=float)
    violations: list[Violation] = []
    for b, bat in enumerate(inst.batteries):
        actions = plan[b]
        charging = actions == BatteryAction.CHARGE
        discharging = actions == BatteryAction.DISCHARGE
        root = np.sqrt(bat.efficiency)
        delta = np.where(charging, 0.25 * bat.max_power * root,
                         np.where(discharging, -0.25 * bat.max_power, 0.0))
        trajectory = np.cumsum(delta)
        soc[b] = trajectory
        effect += np.where(charging, bat.max_power,
                           np.where(discharging, -root * bat.max_power, 0.0))
        low = trajectory < -SOC_TOL
        high = trajectory > bat.capacity + SOC_TOL
        if low.any():
            t = int(np.argmax(low))
            violations.append(Violation(
                "battery_soc", f"battery {bat.id} SOC below 0 at period {t}"))
        if high.any():
            t = int(np.argmax(high))
            violations.append(Violation(
                "battery_soc", f"battery {bat.id} SOC above capacity at period {t}"))
    return effect, soc, violations


def battery_profile(inst: Instance, schedule: Schedule) -> tuple[np.ndarray, np.ndarray]:
    """Grid effect and SOC trajectories; raises if SOC bounds are violated."""
    effect, soc, violations = simulate_batteries(inst, schedule.battery_plan)
    if violations:
        raise InfeasibleScheduleError("; ".join(v.message for v in violations))
    return effect, soc


def check_feasibility(inst: Instance, cal: Calendar, schedule: Schedule,
                      policy=None) -> list[Violation]:
    """All feasibility violations of a schedule, optionally plus policy ones."""
    violations: list[Violation] = []

    seen: dict[int, int] = {}
    for pl in schedule.placements:
        seen[pl.activity_id] = seen.get(pl.activity_id, 0) + 1
    for act in inst.recurring:
        count = seen.pop(act.id, 0)
        if count == 0:
            violations.append(Violation("unplaced_activity", f"activity {act.id} not placed"))
        elif count > 1:
            violations.append(Violation("duplicate_placement", f"activity {act.id} placed {count} times"))
    for aid in sorted(seen):
        violations.append(Violation("unknown_activity", f"placement for unknown activity {aid}"))

    placements = {pl.activity_id: pl for pl in schedule.placements
                  if 0 <= pl.activity_id < len(inst.recurring)}

    present = set(cal.present_weekdays())
    occupancy: dict[tuple[int, str], np.ndarray] = {}
    for aid in sorted(placements):
        pl = placements[aid]
        act = inst.recurring[aid]
        slot = pl.slot
        if not 0 <= slot.weekday < WEEKDAYS:
            violations.append(Violation("working_hours", f"activity {aid} on weekday {slot.weekday}"))
            continue
        if slot.weekday not in present:
            violations.append(Violation(
                "working_hours",
                f"activity {aid} on weekday {slot.weekday}, which never occurs this month"))
        if slot.period_of_day < WORK_START or slot.period_of_day + act.duration > WORK_END:
            violations.append(Violation(
                "working_hours",
                f"activity {aid} runs outside 9:00-17:00 (start {slot.period_of_day}, duration {act.duration})"))
        if len(pl.rooms) != act.rooms_required:
            violations.append(Violation(
                "room_mismatch",
                f"activity {aid} uses {len(pl.rooms)} rooms, needs {act.rooms_required}"))
        for building_id, size in pl.rooms:
            if size != act.room_size:
                violations.append(Violation(
                    "room_mismatch", f"activity {aid} assigned a {size} room, needs {act.room_size}"))
            if not 0 <= building_id < len(inst.buildings):
                violations.append(Violation(
                    "room_mismatch", f"activity {aid} assigned missing building {building_id}"))
                continue
            key = (building_id, size)
            if key not in occupancy:
                occupancy[key] = np.zeros(WEEK_PERIODS, dtype=np.int64)
            start = slot.week_key
            occupancy[key][start:start + act.duration] += 1

    for (building_id, size), usage in sorted(occupancy.items()):
        cap = inst.buildings[building_id].rooms(size)
        if (usage > cap).any():
            period = int(np.argmax(usage > cap))
            violations.append(Violation(
                "room_capacity",
                f"building {building_id} over its {cap} {size} rooms at week period {period}"))

    for aid in sorted(placements):
        act = inst.recurring[aid]
        start = placements[aid].slot.week_key
        for pid in act.precedences:
            if pid not in placements:
                continue
            pred = inst.recurring[pid]
            pred_end = placements[pid].slot.week_key + pred.duration
            if pred_end > start:
                violations.append(Violation(
                    "precedence", f"activity {aid} starts before predecessor {pid} ends"))

    plan = np.asarray(schedule.battery_plan)
    if plan.ndim != 2 or plan.shape != (len(inst.batteries), cal.horizon):
        violations.append(Violation(
            "battery_plan_shape",
            f"battery plan shape {plan.shape} != ({len(inst.batteries)}, {cal.horizon})"))
    else:
        _, _, soc_violations = simulate_batteries(inst, plan)
        violations.extend(soc_violations)

    if policy is not None and not any(v.kind == "battery_plan_shape" for v in violations):
        from .policies import policy_check
        violations.extend(policy_check(policy, inst, cal, schedule))
    return violations


def profile_cost(load: np.ndarray, prices: np.ndarray) -> float:
    """The objective on raw arrays: energy cost plus quadratic peak charge."""
    load = np.asarray(load, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if load.shape != prices.shape or load.ndim != 1 or load.size == 0:
        raise ValueError("load and prices must be 1-D, non-empty, equally long")
    energy = float(np.sum(0.25 * load * prices)) / 1000.0
    return energy + 0.005 * float(np.max(load)) ** 2


def total_load(base: NetLoadSeries, inst: Instance, cal: Calendar,
               schedule: Schedule) -> np.ndarray:
    """base + recurring activities + battery grid effect, per period."""
    effect, _ = battery_profile(inst, schedule)
    if len(base.values) != cal.horizon or len(effect) != cal.horizon:
        raise ValueError("series horizon disagrees with calendar")
    return base.values + activity_load_profile(inst, cal, schedule) + effect


def total_cost(base: NetLoadSeries, prices: PriceSeries, inst: Instance,
               cal: Calendar, schedule: Schedule) -> float:
    return profile_cost(total_load(base, inst, cal, schedule), prices.values)


def schedule_to_json(schedule: Schedule) -> str:
    """Canonical JSON text; placements sorted by activity id."""
    placements = [
        {
            "activity": pl.activity_id,
            "weekday": pl.slot.weekday,
            "period": pl.slot.period_of_day,
            "rooms": [[building, size] for building, size in pl.rooms],
        }
        for pl in sorted(schedule.placements, key=lambda p: p.activity_id)
    ]
    plan = [[ACTION_CODES[BatteryAction(int(a))] for a in row]
            for row in np.asarray(schedule.battery_plan)]
    return json.dumps({"placements": placements, "battery_plan": plan}, indent=2) + "\n"


def schedule_from_json(text: str) -> Schedule:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"bad schedule JSON: {exc}") from None
    if not isinstance(doc, dict) or "placements" not in doc or "battery_plan" not in doc:
        raise ValueError("schedule JSON needs 'placements' and 'battery_plan'")
    placements = []
    for entry in doc["placements"]:
        rooms = tuple((int(b), str(s)) for b, s in entry["rooms"])
        for _, size in rooms:
            if size not in (SMALL, LARGE):
                raise ValueError(f"bad room size {size!r}")
        placements.append(Placement(
            int(entry["activity"]),
            Slot(int(entry["weekday"]), int(entry["period"])),
            rooms))
    rows = doc["battery_plan"]
    horizon = len(rows[0]) if rows else 0
    plan = np.zeros((len(rows), horizon), dtype=np.int8)
    for i, row in enumerate(rows):
        if len(row) != horizon:
            raise ValueError("ragged battery plan")
        for t, code in enumerate(row):
            if code not in CODE_ACTIONS:
                raise ValueError(f"bad battery action code {code!r}")
            plan[i, t] = CODE_ACTIONS[code]
    return Schedule(placements, plan)

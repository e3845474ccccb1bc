"""Battery usage policies, from most to least restrictive.

Conservative          all batteries idle all month.
ForcedDischarge       no charging in working periods, and in every working
                      period where some battery holds enough charge for one
                      full-power discharge, at least one battery discharges.
NoForcedDischarge     no charging in working periods.
Liberal               charging must not lift the recurring-class load profile
                      above its own maximum: max_t(recurring_t + charge_t)
                      <= max_t(recurring_t).
VeryLiberal           anything the SOC bounds allow.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .instance import Instance, Violation
from .series import Calendar, working_period_mask
from .evaluator import BatteryAction, Schedule, activity_load_profile, simulate_batteries

POLICY_TOL = 1e-9


class BatteryPolicy(Enum):
    CONSERVATIVE = "conservative"
    FORCED_DISCHARGE = "forced-discharge"
    NO_FORCED_DISCHARGE = "no-forced-discharge"
    LIBERAL = "liberal"
    VERY_LIBERAL = "very-liberal"


def policy_check(policy: BatteryPolicy, inst: Instance, cal: Calendar,
                 schedule: Schedule) -> list[Violation]:
    """Violations of the given policy by the schedule's battery plan."""
    plan = np.asarray(schedule.battery_plan)
    violations: list[Violation] = []
    if policy is BatteryPolicy.VERY_LIBERAL or plan.size == 0:
        return violations

    if policy is BatteryPolicy.CONSERVATIVE:
        for b, bat in enumerate(inst.batteries):
            active = plan[b] != BatteryAction.IDLE
            if active.any():
                t = int(np.argmax(active))
                violations.append(Violation(
                    "policy", f"conservative: battery {bat.id} acts at period {t}"))
        return violations

    working = working_period_mask(cal)
    charging = plan == BatteryAction.CHARGE

    if policy in (BatteryPolicy.FORCED_DISCHARGE, BatteryPolicy.NO_FORCED_DISCHARGE):
        for b, bat in enumerate(inst.batteries):
            bad = charging[b] & working
            if bad.any():
                t = int(np.argmax(bad))
                violations.append(Violation(
                    "policy", f"battery {bat.id} charges in working period {t}"))

    if policy is BatteryPolicy.FORCED_DISCHARGE:
        _, soc, _ = simulate_batteries(inst, plan)
        soc_before = np.concatenate([np.zeros((soc.shape[0], 1)), soc[:, :-1]], axis=1)
        thresholds = np.array([0.25 * bat.max_power for bat in inst.batteries])
        could = soc_before >= thresholds[:, None] - POLICY_TOL
        obliged = working & could.any(axis=0)
        discharged = (plan == BatteryAction.DISCHARGE).any(axis=0)
        missed = obliged & ~discharged
        if missed.any():
            t = int(np.argmax(missed))
            violations.append(Violation(
                "policy", f"no battery discharges in working period {t} despite available charge"))

    if policy is BatteryPolicy.LIBERAL:
        recurring = activity_load_profile(inst, cal, schedule)
        powers = np.array([bat.max_power for bat in inst.batteries])
        charge_power = powers @ charging
        lifted = recurring + charge_power
        if lifted.max() > recurring.max() + POLICY_TOL:
            t = int(np.argmax(lifted))
            violations.append(Violation(
                "policy",
                f"charging lifts load to {lifted[t]:.3f} kW at period {t}, "
                f"above the recurring peak {recurring.max():.3f} kW"))
    return violations

"""Heuristic schedule construction and improvement.

Pipeline: greedy peak-leveling warm starts (batteries idle) -> pick the best
under the forecast -> simulated-annealing local search over slot shifts,
slot swaps and room reassignments, re-dispatching batteries greedily after
every accepted move. Deterministic for a fixed seed.

``dispatch_battery_exact`` enumerates all 3^T single-battery action
sequences for toy horizons and exists as a test oracle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .instance import Instance, RecurringActivity, validate_instance
from .series import (Calendar, NetLoadSeries, PriceSeries, PERIODS_PER_DAY,
                     WORK_START, WORK_END, WEEKDAYS, working_period_mask)
from .evaluator import (BatteryAction, Placement, Schedule, Slot, SOC_TOL,
                        activity_load_profile, profile_cost, total_cost)
from .policies import BatteryPolicy, POLICY_TOL

WEEK_PERIODS = WEEKDAYS * PERIODS_PER_DAY
_IMPROVE_TOL = 1e-12


class InfeasibleInstanceError(ValueError):
    """No feasible placement exists (rooms or precedences over-constrained)."""


@dataclass(frozen=True)
class OptimizerConfig:
    """Local-search knobs. A set time_limit trades determinism for wall time."""

    num_warm_starts: int = 46
    local_search_iterations: int = 2000
    random_seed: int = 0
    time_limit: float | None = None
    initial_temperature: float | None = None   # None: calibrated from sampled moves
    cooling_rate: float | None = None          # None: geometric decay to 1e-3 * T0


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float)


def _topological_order(inst: Instance, rng: np.random.Generator) -> list[int]:
    remaining = {a.id: len(a.precedences) for a in inst.recurring}
    succs: dict[int, list[int]] = {a.id: [] for a in inst.recurring}
    for a in inst.recurring:
        for p in a.precedences:
            succs[p].append(a.id)
    ready = sorted(aid for aid, deg in remaining.items() if deg == 0)
    order: list[int] = []
    while ready:
        idx = int(rng.integers(len(ready))) if len(ready) > 1 else 0
        aid = ready.pop(idx)
        order.append(aid)
        for nxt in succs[aid]:
            remaining[nxt] -= 1
            if remaining[nxt] == 0:
                ready.append(nxt)
        ready.sort()
    if len(order) != len(inst.recurring):
        raise InfeasibleInstanceError("cyclic precedences")
    return order


def _rolling_max(values: np.ndarray, window: int) -> np.ndarray:
    if window > values.size:
        return np.empty(0, dtype=values.dtype)
    return np.lib.stride_tricks.sliding_window_view(values, window).max(axis=1)


class _WeekGrid:
    """Weekly occupancy and load bookkeeping for greedy construction."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.load = np.zeros(WEEK_PERIODS)
        self.occ = {size: np.zeros((len(inst.buildings), WEEK_PERIODS), dtype=np.int64)
                    for size in ("S", "L")}

    def avail_per_building(self, size: str, key: int, duration: int) -> np.ndarray:
        caps = np.array([b.rooms(size) for b in self.inst.buildings], dtype=np.int64)
        if not caps.size:
            return caps
        used = self.occ[size][:, key:key + duration].max(axis=1)
        return caps - used

    def assign_rooms(self, act: RecurringActivity, key: int,
                     order: np.ndarray | None = None) -> tuple[tuple[int, str], ...] | None:
        avail = self.avail_per_building(act.room_size, key, act.duration)
        if order is None:
            # spread across buildings: most headroom first, id breaks ties
            order = np.lexsort((np.arange(avail.size), -avail))
        rooms: list[tuple[int, str]] = []
        needed = act.rooms_required
        for b in order:
            take = int(min(avail[b], needed))
            rooms.extend((int(b), act.room_size) for _ in range(take))
            needed -= take
            if needed == 0:
                return tuple(rooms)
        return None

    def place(self, act: RecurringActivity, key: int, rooms) -> None:
        self.load[key:key + act.duration] += act.load
        for b, size in rooms:
            self.occ[size][b, key:key + act.duration] += 1


def _greedy_build(inst: Instance, rng: np.random.Generator,
                  weekdays: tuple[int, ...]) -> list[Placement] | None:
    grid = _WeekGrid(inst)
    placements: dict[int, Placement] = {}
    keys: dict[int, int] = {}
    peak = 0.0
    for aid in _topological_order(inst, rng):
        act = inst.recurring[aid]
        if act.duration > WORK_END - WORK_START:
            return None
        lower = max((keys[p] + inst.recurring[p].duration for p in act.precedences), default=0)
        cand_keys: list[int] = []
        cand_peaks: list[float] = []
        for wd in weekdays:
            base = wd * PERIODS_PER_DAY
            window = grid.load[base + WORK_START:base + WORK_END]
            peaks = _rolling_max(window, act.duration) + act.load
            avail = np.zeros(peaks.size, dtype=np.int64)
            for b in range(len(inst.buildings)):
                cap = inst.buildings[b].rooms(act.room_size)
                occ_win = grid.occ[act.room_size][b, base + WORK_START:base + WORK_END]
                avail += np.maximum(cap - _rolling_max(occ_win, act.duration), 0)
            for rel in range(peaks.size):
                key = base + WORK_START + rel
                if key >= lower and avail[rel] >= act.rooms_required:
                    cand_keys.append(key)
                    cand_peaks.append(max(peak, float(peaks[rel])))
        if not cand_keys:
            return None
        best = min(cand_peaks)
        ties = [i for i, p in enumerate(cand_peaks) if p <= best + _IMPROVE_TOL]
        pick = ties[int(rng.integers(len(ties)))] if len(ties) > 1 else ties[0]
        key = cand_keys[pick]
        rooms = grid.assign_rooms(act, key)
        if rooms is None:
            return None
        grid.place(act, key, rooms)
        peak = max(peak, float(grid.load[key:key + act.duration].max()))
        keys[aid] = key
        placements[aid] = Placement(aid, Slot(key // PERIODS_PER_DAY, key % PERIODS_PER_DAY), rooms)
    return [placements[a.id] for a in inst.recurring]


def conservative_warm_starts(inst: Instance, cal: Calendar, n: int, seed: int) -> list[Schedule]:
    """n feasible schedules with idle batteries, greedily leveling weekly peaks.

    Random tie-breaking and insertion order make the starts diverse; pairwise
    distinctness is best effort when the slot space is tight.
    """
    if n < 1:
        raise ValueError("need at least one warm start")
    rng = np.random.default_rng(seed)
    out: list[Schedule] = []
    signatures: set[tuple] = set()
    idle = np.zeros((len(inst.batteries), cal.horizon), dtype=np.int8)
    weekdays = cal.present_weekdays()
    for _ in range(n):
        placements = None
        for _attempt in range(12):
            placements = _greedy_build(inst, rng, weekdays)
            if placements is None:
                continue
            sig = tuple((p.activity_id, p.slot.weekday, p.slot.period_of_day)
                        for p in placements)
            if sig not in signatures:
                break
        if placements is None:
            raise InfeasibleInstanceError("no feasible placement for some activity")
        signatures.add(tuple((p.activity_id, p.slot.weekday, p.slot.period_of_day)
                             for p in placements))
        out.append(Schedule(placements, idle.copy()))
    return out


# ---------------------------------------------------------------------------
# battery dispatch

def _battery_units(bat) -> tuple[float, float, float, float]:
    root = math.sqrt(bat.efficiency)
    charge_energy = 0.25 * bat.max_power * root   # kWh stored per charge period
    discharge_energy = 0.25 * bat.max_power       # kWh drained per discharge period
    discharge_grid = root * bat.max_power         # kW of grid relief while discharging
    return root, charge_energy, discharge_energy, discharge_grid


def _resolve_masks(T: int, policy: BatteryPolicy, calendar, working_mask, recurring_load):
    if working_mask is None:
        working_mask = working_period_mask(calendar) if calendar is not None \
            else np.zeros(T, dtype=bool)
    working_mask = np.asarray(working_mask, dtype=bool)
    if working_mask.size != T:
        raise ValueError("working mask length disagrees with the horizon")
    if recurring_load is None:
        recurring_load = np.zeros(T)
    recurring_load = np.asarray(recurring_load, dtype=float)
    if recurring_load.size != T:
        raise ValueError("recurring load length disagrees with the horizon")
    return working_mask, recurring_load


def _exact_delta(l: np.ndarray, prices: np.ndarray, cur_max: float,
                 changes: list[tuple[int, float]]) -> float:
    dl = np.zeros_like(l)
    for t, dkw in changes:
        dl[t] += dkw
    new_l = l + dl
    energy = 0.25 * float(np.sum(dl * prices)) / 1000.0
    return energy + 0.005 * (float(new_l.max()) ** 2 - cur_max ** 2)


def _pair_greedy(l_in: np.ndarray, prices: np.ndarray, bat,
                 charge_ok: np.ndarray, max_rounds: int | None = None,
                 init: np.ndarray | None = None) -> np.ndarray:
    """Insert profitable charge/discharge bundles until none improves the cost."""
    T = l_in.size
    _, ce, de, dg = _battery_units(bat)
    P = bat.max_power
    if init is None:
        actions = np.zeros(T, dtype=np.int8)
    else:
        actions = init.copy()
    soc_delta = np.where(actions == BatteryAction.CHARGE, ce,
                         np.where(actions == BatteryAction.DISCHARGE, -de, 0.0))
    l = l_in + np.where(actions == BatteryAction.CHARGE, P, 0.0) \
        - np.where(actions == BatteryAction.DISCHARGE, dg, 0.0)
    all_candidates = T <= 128

    rounds = 4 * T + 16 if max_rounds is None else max_rounds
    for _round in range(rounds):
        soc = np.cumsum(soc_delta)
        suffix_min = np.minimum.accumulate(soc[::-1])[::-1]
        idle = actions == BatteryAction.IDLE
        can_dis = idle & (suffix_min >= de - SOC_TOL)
        # capacity feasibility depends on the bundle's discharge position,
        # so it is checked per candidate below rather than masked here
        can_chg = idle & charge_ok
        cur_max = float(l.max())

        if all_candidates:
            dis_idx = np.flatnonzero(idle)
        else:
            masked_price = np.where(idle, prices, -np.inf)
            dis_idx = np.argsort(-masked_price, kind="stable")[:24]
            dis_idx = dis_idx[idle[dis_idx]]
            top_load = np.argsort(np.where(idle, -l, np.inf), kind="stable")[:4]
            dis_idx = np.unique(np.concatenate([dis_idx, top_load[idle[top_load]]]))
        chg_cost = 0.25 * P * prices / 1000.0 \
            + 0.005 * (np.maximum(cur_max, l + P) ** 2 - cur_max ** 2)
        chg_order = np.argsort(np.where(can_chg, chg_cost, np.inf), kind="stable")
        chg_order = chg_order[can_chg[chg_order]]

        best_delta = -_IMPROVE_TOL
        best_changes: list[tuple[int, int, float]] | None = None
        for d in dis_idx:
            d = int(d)
            deficit = de - float(suffix_min[d])
            changes: list[tuple[int, int, float]] = []
            if deficit <= SOC_TOL:
                if not can_dis[d]:
                    continue
            else:
                needed = int(math.ceil((deficit - SOC_TOL) / ce))
                # the discharge at d cancels any charge before it beyond d,
                # so capacity only binds on [c, d); bmax[c] = max soc[c..d-1]
                bmax = np.maximum.accumulate(soc[:d][::-1])[::-1] if d else None
                headroom = bat.capacity - ce + SOC_TOL
                added = np.zeros(T)
                for c in chg_order:
                    c = int(c)
                    if c >= d:
                        continue
                    if len(changes) == 0:
                        if bmax[c] > headroom:
                            continue
                        added[c] = ce
                    else:
                        added[c] = ce
                        path = soc[c:d] + np.cumsum(added)[c:d]
                        if float(path.max()) > bat.capacity + SOC_TOL:
                            added[c] = 0.0
                            continue
                    changes.append((c, BatteryAction.CHARGE, P))
                    if len(changes) == needed:
                        break
                if len(changes) < needed:
                    continue
                new_path = soc + np.cumsum(added)
                new_path[d:] -= de
                if float(new_path[d:].min()) < -SOC_TOL or \
                        float(new_path.max()) > bat.capacity + SOC_TOL:
                    continue
            changes.append((d, BatteryAction.DISCHARGE, -dg))
            delta = _exact_delta(l, prices, cur_max, [(t, kw) for t, _, kw in changes])
            if delta < best_delta:
                best_delta = delta
                best_changes = changes
        if best_changes is None:
            break
        for t, action, dkw in best_changes:
            actions[t] = action
            soc_delta[t] = ce if action == BatteryAction.CHARGE else -de
            l[t] += dkw
    return actions


REFINE_MAX_T = 128


def _lattice_dispatch(l_in: np.ndarray, prices: np.ndarray, bat,
                      policy: BatteryPolicy, working: np.ndarray,
                      charge_ok: np.ndarray) -> np.ndarray | None:
    """Peak-candidate dynamic program for a lossless battery on a short horizon.

    With efficiency 1 the state of charge moves on a lattice of
    0.25 * max_power steps. For each candidate peak level M the DP finds the
    energy-minimal feasible plan with load <= M; the best M wins. The result
    is exactly optimal whenever every feasible load is nonnegative; callers
    rescore the plan's true cost, so a negative-load profile only costs
    optimality, never correctness. Returns None when not applicable.
    """
    if bat.efficiency != 1.0:
        return None
    T = l_in.size
    P = bat.max_power
    unit = 0.25 * P
    K = int(math.floor(bat.capacity / unit + SOC_TOL))
    if K < 1:
        return None
    cand = np.unique(np.concatenate([l_in, l_in + P, l_in - P]))
    nM = cand.size
    INF = np.inf
    dp = np.full((nM, K + 1), INF)
    dp[:, 0] = 0.0
    acts = np.zeros((T, nM, K + 1), dtype=np.int8)
    for t in range(T):
        e = prices[t]
        ok_idle = l_in[t] <= cand + SOC_TOL
        ok_chg = l_in[t] + P <= cand + SOC_TOL
        ok_dis = l_in[t] - P <= cand + SOC_TOL
        forced = policy is BatteryPolicy.FORCED_DISCHARGE and working[t]
        new = np.where(ok_idle[:, None], dp + 0.25 * l_in[t] * e / 1000.0, INF)
        if forced:
            # holding a full discharge unit obliges draining it
            new[:, 1:] = INF
        act = np.zeros((nM, K + 1), dtype=np.int8)
        if charge_ok[t] and not forced:
            trial = np.where(ok_chg[:, None],
                             dp[:, :-1] + 0.25 * (l_in[t] + P) * e / 1000.0, INF)
            better = trial < new[:, 1:]
            new[:, 1:] = np.where(better, trial, new[:, 1:])
            act[:, 1:] = np.where(better, BatteryAction.CHARGE, act[:, 1:])
        trial = np.where(ok_dis[:, None],
                         dp[:, 1:] + 0.25 * (l_in[t] - P) * e / 1000.0, INF)
        better = trial < new[:, :-1]
        new[:, :-1] = np.where(better, trial, new[:, :-1])
        act[:, :-1] = np.where(better, BatteryAction.DISCHARGE, act[:, :-1])
        dp = new
        acts[t] = act
    totals = dp.min(axis=1) + 0.005 * cand ** 2
    m = int(np.argmin(totals))
    if not np.isfinite(totals[m]):
        return None
    k = int(np.argmin(dp[m]))
    plan = np.zeros(T, dtype=np.int8)
    for t in range(T - 1, -1, -1):
        a = int(acts[t, m, k])
        plan[t] = a
        if a == BatteryAction.CHARGE:
            k -= 1
        elif a == BatteryAction.DISCHARGE:
            k += 1
    return plan


def _max_without_each(values: np.ndarray) -> np.ndarray:
    """max_without_each(v)[t] = max of v with index t excluded."""
    prefix = np.concatenate([[-np.inf], np.maximum.accumulate(values)[:-1]])
    suffix = np.concatenate([np.maximum.accumulate(values[::-1])[::-1][1:],
                             [-np.inf]])
    return np.maximum(prefix, suffix)


def _refine_pair_plan(l_in: np.ndarray, prices: np.ndarray, bat,
                      charge_ok: np.ndarray, actions: np.ndarray) -> bool:
    """Apply the single best relocation or removal; True when one improved.

    Greedy pair insertion commits actions one bundle at a time, which can
    strand a charge in a pricey period or a discharge off the peak. This
    steepest-descent step considers moving any one committed action to any
    idle period, dropping a lone charge, and dropping a charge/discharge
    pair, scoring each candidate exactly.
    """
    _, ce, de, dg = _battery_units(bat)
    P = bat.max_power
    T = l_in.size
    charging = actions == BatteryAction.CHARGE
    discharging = actions == BatteryAction.DISCHARGE
    idle = actions == BatteryAction.IDLE
    l = l_in + np.where(charging, P, 0.0) - np.where(discharging, dg, 0.0)
    soc = np.cumsum(np.where(charging, ce, 0.0) - np.where(discharging, de, 0.0))
    cur_max = float(l.max())
    best_delta = -_IMPROVE_TOL
    best_changes: list[tuple[int, int]] | None = None

    for c in np.flatnonzero(charging):
        c = int(c)
        l_wo = l.copy()
        l_wo[c] -= P
        m0 = float(l_wo.max())
        # moving the charge later starves SOC on [c, t); earlier risks the cap
        fwd_ok = np.zeros(T, dtype=bool)
        if c < T - 1:
            fwd_ok[c + 1:] = np.minimum.accumulate(soc[c:T - 1]) >= ce - SOC_TOL
        back_ok = np.zeros(T, dtype=bool)
        if c > 0:
            back_ok[:c] = np.maximum.accumulate(soc[:c][::-1])[::-1] \
                <= bat.capacity - ce + SOC_TOL
        ts = np.flatnonzero(idle & charge_ok & (fwd_ok | back_ok))
        if ts.size:
            new_max = np.maximum(m0, l_wo[ts] + P)
            delta = 0.25 * P * (prices[ts] - prices[c]) / 1000.0 \
                + 0.005 * (new_max ** 2 - cur_max ** 2)
            i = int(np.argmin(delta))
            if delta[i] < best_delta:
                best_delta = float(delta[i])
                best_changes = [(c, BatteryAction.IDLE),
                                (int(ts[i]), BatteryAction.CHARGE)]
        # a lone charge may be droppable when later drains stay covered
        if float(soc[c:].min()) >= ce - SOC_TOL:
            delta = -0.25 * P * prices[c] / 1000.0 \
                + 0.005 * (m0 ** 2 - cur_max ** 2)
            if delta < best_delta:
                best_delta = float(delta)
                best_changes = [(c, BatteryAction.IDLE)]

    for d in np.flatnonzero(discharging):
        d = int(d)
        l_wo = l.copy()
        l_wo[d] += dg
        # destination load drops, so the peak needs leave-one-out maxima
        wo_t = _max_without_each(l_wo)
        fwd_ok = np.zeros(T, dtype=bool)
        if d < T - 1:
            fwd_ok[d + 1:] = np.maximum.accumulate(soc[d:T - 1]) \
                <= bat.capacity - de + SOC_TOL
        back_ok = np.zeros(T, dtype=bool)
        if d > 0:
            back_ok[:d] = np.minimum.accumulate(soc[:d][::-1])[::-1] \
                >= de - SOC_TOL
        ts = np.flatnonzero(idle & (fwd_ok | back_ok))
        if not ts.size:
            continue
        new_max = np.maximum(wo_t[ts], l_wo[ts] - dg)
        delta = 0.25 * dg * (prices[d] - prices[ts]) / 1000.0 \
            + 0.005 * (new_max ** 2 - cur_max ** 2)
        i = int(np.argmin(delta))
        if delta[i] < best_delta:
            best_delta = float(delta[i])
            best_changes = [(d, BatteryAction.IDLE),
                            (int(ts[i]), BatteryAction.DISCHARGE)]

    steps = np.where(charging, ce, 0.0) - np.where(discharging, de, 0.0)
    for c in np.flatnonzero(charging):
        c = int(c)
        for d in np.flatnonzero(discharging):
            d = int(d)
            trial = steps.copy()
            trial[c] = 0.0
            trial[d] = 0.0
            path = np.cumsum(trial)
            if float(path.min()) < -SOC_TOL or \
                    float(path.max()) > bat.capacity + SOC_TOL:
                continue
            l2 = l.copy()
            l2[c] -= P
            l2[d] += dg
            delta = 0.25 * (dg * prices[d] - P * prices[c]) / 1000.0 \
                + 0.005 * (float(l2.max()) ** 2 - cur_max ** 2)
            if delta < best_delta:
                best_delta = float(delta)
                best_changes = [(c, BatteryAction.IDLE),
                                (d, BatteryAction.IDLE)]

    if best_changes is None:
        return False
    for t, action in best_changes:
        actions[t] = action
    return True


def _fd_simulate(l_in: np.ndarray, bat, working: np.ndarray,
                 charges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Charge at flagged periods when capacity allows; drain in working periods."""
    T = l_in.size
    _, ce, de, dg = _battery_units(bat)
    actions = np.zeros(T, dtype=np.int8)
    l = l_in.copy()
    soc = 0.0
    for t in range(T):
        if charges[t] and soc + ce <= bat.capacity + SOC_TOL:
            actions[t] = BatteryAction.CHARGE
            soc += ce
            l[t] += bat.max_power
        elif working[t] and soc >= de - SOC_TOL:
            actions[t] = BatteryAction.DISCHARGE
            soc -= de
            l[t] -= dg
    return actions, l


def _fd_greedy(l_in: np.ndarray, prices: np.ndarray, bat,
               working: np.ndarray, max_rounds: int | None = None) -> np.ndarray:
    """Greedy charge placement for the forced-discharge regime.

    Discharges are not free choices here: the policy obliges draining during
    working periods, so only the charge set is searched, with exact
    simulation deciding what each candidate is worth.
    """
    T = l_in.size
    charges = np.zeros(T, dtype=bool)
    _, profile = _fd_simulate(l_in, bat, working, charges)
    cost = profile_cost(profile, prices)
    candidates_pool = np.flatnonzero(~working)
    refine = max_rounds is None and T <= REFINE_MAX_T

    def sim_cost() -> float:
        _, l_sim = _fd_simulate(l_in, bat, working, charges)
        return profile_cost(l_sim, prices)

    def add_rounds(limit: int) -> None:
        nonlocal cost
        for _round in range(limit):
            open_slots = candidates_pool[~charges[candidates_pool]]
            if not open_slots.size:
                return
            if refine:
                trial_set = open_slots
            else:
                by_price = open_slots[np.argsort(prices[open_slots], kind="stable")][:12]
                by_load = open_slots[np.argsort(l_in[open_slots], kind="stable")][:4]
                trial_set = np.unique(np.concatenate([by_price, by_load]))
            best_cost = cost - _IMPROVE_TOL
            best_c = None
            for c in trial_set:
                charges[c] = True
                trial_cost = sim_cost()
                charges[c] = False
                if trial_cost < best_cost:
                    best_cost = trial_cost
                    best_c = int(c)
            if best_c is None:
                return
            charges[best_c] = True
            cost = best_cost

    add_rounds(T if max_rounds is None else max_rounds)
    if refine:
        # the charge set fully determines the plan, so relocation and
        # removal of committed charges walk the set toward a local optimum
        for _sweep in range(100):
            best_cost = cost - _IMPROVE_TOL
            best_change: tuple[int, int | None] | None = None
            for c in np.flatnonzero(charges):
                c = int(c)
                charges[c] = False
                trial_cost = sim_cost()
                if trial_cost < best_cost:
                    best_cost = trial_cost
                    best_change = (c, None)
                for t in candidates_pool[~charges[candidates_pool]]:
                    t = int(t)
                    if t == c:
                        continue
                    charges[t] = True
                    trial_cost = sim_cost()
                    charges[t] = False
                    if trial_cost < best_cost:
                        best_cost = trial_cost
                        best_change = (c, t)
                charges[c] = True
            if best_change is None:
                break
            c, t = best_change
            charges[c] = False
            if t is not None:
                charges[t] = True
            cost = best_cost
            add_rounds(T)
    actions, _ = _fd_simulate(l_in, bat, working, charges)
    return actions


def dispatch_battery_heuristic(net_with_activities, prices, batteries,
                               policy: BatteryPolicy, calendar: Calendar | None = None, *,
                               working_mask=None, recurring_load=None,
                               max_rounds: int | None = None) -> np.ndarray:
    """Greedy battery plan over the given load profile; never worse than all-idle.

    The working mask defaults to the calendar's working periods;
    ``recurring_load`` feeds the Liberal policy's charge guard. ``max_rounds``
    caps greedy insertion rounds; plan quality is monotone in the cap.
    """
    net = _values(net_with_activities)
    price = _values(prices)
    T = net.size
    if price.size != T:
        raise ValueError("prices and load must be equally long")
    plan = np.zeros((len(batteries), T), dtype=np.int8)
    if policy is BatteryPolicy.CONSERVATIVE or not len(batteries) or T == 0:
        return plan
    working, recurring = _resolve_masks(T, policy, calendar, working_mask, recurring_load)
    rec_max = float(recurring.max())
    committed_charge = np.zeros(T)
    current = net.copy()
    refine = max_rounds is None and T <= REFINE_MAX_T
    for b, bat in enumerate(batteries):
        if policy is BatteryPolicy.FORCED_DISCHARGE:
            charge_ok = ~working
            actions = _fd_greedy(current, price, bat, working, max_rounds)
        else:
            if policy is BatteryPolicy.NO_FORCED_DISCHARGE:
                charge_ok = ~working
            elif policy is BatteryPolicy.LIBERAL:
                charge_ok = recurring + committed_charge + bat.max_power <= rec_max + POLICY_TOL
            else:
                charge_ok = np.ones(T, dtype=bool)
            actions = _pair_greedy(current, price, bat, charge_ok, max_rounds)
            if refine:
                for _ in range(200):
                    if not _refine_pair_plan(current, price, bat, charge_ok,
                                             actions):
                        break
                    actions = _pair_greedy(current, price, bat, charge_ok,
                                           None, actions)
        if refine:
            lattice = _lattice_dispatch(current, price, bat, policy, working,
                                        charge_ok)
            if lattice is not None:
                _, _, _, dg = _battery_units(bat)

                def true_cost(plan: np.ndarray) -> float:
                    load = current \
                        + np.where(plan == BatteryAction.CHARGE, bat.max_power, 0.0) \
                        - np.where(plan == BatteryAction.DISCHARGE, dg, 0.0)
                    return profile_cost(load, price)

                if true_cost(lattice) < true_cost(actions):
                    actions = lattice
        plan[b] = actions
        root, _, _, dg = _battery_units(bat)
        current = current + np.where(actions == BatteryAction.CHARGE, bat.max_power, 0.0) \
            - np.where(actions == BatteryAction.DISCHARGE, dg, 0.0)
        committed_charge += bat.max_power * (actions == BatteryAction.CHARGE)
    return plan


MAX_EXACT_HORIZON = 16


def dispatch_battery_exact(net_with_activities, prices, battery,
                           policy: BatteryPolicy, calendar: Calendar | None = None, *,
                           working_mask=None, recurring_load=None,
                           chunk: int = 200_000) -> np.ndarray:
    """Optimal single-battery plan by enumerating all 3^T action sequences.

    Test oracle only; the horizon is capped at 16 periods. Ties prefer the
    plan that idles earliest (all-idle wins when optimal).
    """
    net = _values(net_with_activities)
    price = _values(prices)
    T = net.size
    if T == 0 or price.size != T:
        raise ValueError("need equally long, non-empty load and prices")
    if T > MAX_EXACT_HORIZON:
        raise ValueError(f"horizon {T} too large for exhaustive dispatch (max {MAX_EXACT_HORIZON})")
    working, recurring = _resolve_masks(T, policy, calendar, working_mask, recurring_load)
    rec_max = float(recurring.max())
    _, ce, de, dg = _battery_units(battery)
    P = battery.max_power

    powers = 3 ** np.arange(T, dtype=np.int64)
    total = int(3 ** T)
    best_cost = np.inf
    best_code = 0
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (codes[:, None] // powers[None, :]) % 3
        charging = digits == BatteryAction.CHARGE
        discharging = digits == BatteryAction.DISCHARGE
        soc = np.cumsum(ce * charging - de * discharging, axis=1)
        feasible = (soc >= -SOC_TOL).all(axis=1) & (soc <= battery.capacity + SOC_TOL).all(axis=1)
        if policy is BatteryPolicy.CONSERVATIVE:
            feasible &= (digits == BatteryAction.IDLE).all(axis=1)
        elif policy in (BatteryPolicy.FORCED_DISCHARGE, BatteryPolicy.NO_FORCED_DISCHARGE):
            feasible &= ~(charging & working[None, :]).any(axis=1)
        if policy is BatteryPolicy.FORCED_DISCHARGE:
            soc_before = soc - (ce * charging - de * discharging)
            obliged = working[None, :] & (soc_before >= de - SOC_TOL)
            feasible &= ~(obliged & ~discharging).any(axis=1)
        if policy is BatteryPolicy.LIBERAL:
            lifted = recurring[None, :] + P * charging
            feasible &= (lifted <= rec_max + POLICY_TOL).all(axis=1)
        load = net[None, :] + P * charging - dg * discharging
        cost = 0.25 * (load @ price) / 1000.0 + 0.005 * load.max(axis=1) ** 2
        cost[~feasible] = np.inf
        i = int(np.argmin(cost))
        if cost[i] < best_cost:
            best_cost = float(cost[i])
            best_code = int(codes[i])
    return ((best_code // powers) % 3).astype(np.int8)


# ---------------------------------------------------------------------------
# local search

class _SearchState:
    """Incremental bookkeeping for the local search."""

    def __init__(self, inst: Instance, cal: Calendar, placements: list[Placement]):
        self.inst = inst
        self.cal = cal
        self.weekdays = cal.present_weekdays()
        self.placements: dict[int, Placement] = {}
        self.grid = _WeekGrid(inst)
        self.profile = np.zeros(cal.horizon)
        self.day_starts = [
            np.array([d * PERIODS_PER_DAY for d in range(cal.days_in_month)
                      if cal.day_of_week(d) == wd], dtype=np.int64)
            for wd in range(WEEKDAYS)]
        self.succs: dict[int, list[int]] = {a.id: [] for a in inst.recurring}
        for a in inst.recurring:
            for p in a.precedences:
                self.succs[p].append(a.id)
        for pl in placements:
            self.add(pl)

    def month_indices(self, slot: Slot, duration: int) -> np.ndarray:
        starts = self.day_starts[slot.weekday] + slot.period_of_day
        return (starts[:, None] + np.arange(duration)[None, :]).ravel()

    def add(self, pl: Placement) -> None:
        act = self.inst.recurring[pl.activity_id]
        self.grid.place(act, pl.slot.week_key, pl.rooms)
        self.profile[self.month_indices(pl.slot, act.duration)] += act.load
        self.placements[pl.activity_id] = pl

    def remove(self, aid: int) -> Placement:
        pl = self.placements.pop(aid)
        act = self.inst.recurring[aid]
        key = pl.slot.week_key
        self.grid.load[key:key + act.duration] -= act.load
        for b, size in pl.rooms:
            self.grid.occ[size][b, key:key + act.duration] -= 1
        self.profile[self.month_indices(pl.slot, act.duration)] -= act.load
        return pl

    def key_bounds(self, aid: int) -> tuple[int, int | None]:
        act = self.inst.recurring[aid]
        lower = 0
        for p in act.precedences:
            if p in self.placements:
                lower = max(lower, self.placements[p].slot.week_key
                            + self.inst.recurring[p].duration)
        upper = None
        for s in self.succs[aid]:
            if s in self.placements:
                limit = self.placements[s].slot.week_key - act.duration
                upper = limit if upper is None else min(upper, limit)
        return lower, upper

    def slot_candidates(self, aid: int) -> list[Slot]:
        """Feasible slots for an activity that is currently removed."""
        act = self.inst.recurring[aid]
        lower, upper = self.key_bounds(aid)
        out: list[Slot] = []
        for wd in self.weekdays:
            base = wd * PERIODS_PER_DAY
            for p in range(WORK_START, WORK_END - act.duration + 1):
                key = base + p
                if key < lower or (upper is not None and key > upper):
                    continue
                avail = self.grid.avail_per_building(act.room_size, key, act.duration)
                if int(np.maximum(avail, 0).sum()) >= act.rooms_required:
                    out.append(Slot(wd, p))
        return out

    def try_place(self, aid: int, slot: Slot,
                  order: np.ndarray | None = None) -> Placement | None:
        act = self.inst.recurring[aid]
        if slot.weekday not in self.weekdays:
            return None
        lower, upper = self.key_bounds(aid)
        key = slot.week_key
        if key < lower or (upper is not None and key > upper):
            return None
        if slot.period_of_day < WORK_START or slot.period_of_day + act.duration > WORK_END:
            return None
        rooms = self.grid.assign_rooms(act, key, order)
        if rooms is None:
            return None
        pl = Placement(aid, slot, rooms)
        self.add(pl)
        return pl


def _calibrate_temperature(state: _SearchState, load, prices,
                           rng: np.random.Generator, act_ids: list[int]) -> float:
    samples: list[float] = []
    cur_cost = profile_cost(load + state.profile, prices)
    for _ in range(24):
        aid = act_ids[int(rng.integers(len(act_ids)))]
        act = state.inst.recurring[aid]
        old = state.remove(aid)
        cands = state.slot_candidates(aid)
        cands = [s for s in cands if s != old.slot]
        if cands:
            slot = cands[int(rng.integers(len(cands)))]
            pl = state.try_place(aid, slot)
            if pl is not None:
                samples.append(abs(profile_cost(load + state.profile, prices) - cur_cost))
                state.remove(aid)
        state.add(old)
    positive = [s for s in samples if s > 0]
    if not positive:
        return 1e-6
    return max(float(np.mean(positive)), 1e-6)


def optimize(inst: Instance, cal: Calendar, forecast_net: NetLoadSeries,
             prices: PriceSeries, policy: BatteryPolicy,
             config: OptimizerConfig = OptimizerConfig(), *,
             report_sink: dict | None = None) -> tuple[Schedule, float]:
    """Best-found feasible, policy-satisfying schedule and its forecast cost.

    The returned cost never exceeds the best warm start's cost. With
    ``report_sink`` given, run statistics are written into that dict.
    """
    problems = validate_instance(inst)
    if problems:
        raise InfeasibleInstanceError("; ".join(v.message for v in problems))
    base = _values(forecast_net)
    price = _values(prices)
    if base.size != cal.horizon or price.size != cal.horizon:
        raise ValueError("series horizon disagrees with the calendar")

    rng = np.random.default_rng(config.random_seed)
    warm = conservative_warm_starts(inst, cal, config.num_warm_starts, config.random_seed)
    warm_costs = [total_cost(forecast_net, prices, inst, cal, w) for w in warm]
    best_warm = int(np.argmin(warm_costs))

    working = working_period_mask(cal)

    def dispatch(profile: np.ndarray, max_rounds: int | None = None) -> np.ndarray:
        return dispatch_battery_heuristic(
            base + profile, price, inst.batteries, policy,
            working_mask=working, recurring_load=profile,
            max_rounds=max_rounds)

    def battery_effect(plan: np.ndarray) -> np.ndarray:
        effect = np.zeros(cal.horizon)
        for b, bat in enumerate(inst.batteries):
            root, _, _, dg = _battery_units(bat)
            effect += np.where(plan[b] == BatteryAction.CHARGE, bat.max_power, 0.0)
            effect -= np.where(plan[b] == BatteryAction.DISCHARGE, dg, 0.0)
        return effect

    state = _SearchState(inst, cal, warm[best_warm].placements)
    plan = dispatch(state.profile)
    effect = battery_effect(plan)
    cur_cost = profile_cost(base + state.profile + effect, price)
    best_schedule = Schedule(list(state.placements.values()), plan.copy())
    best_cost = cur_cost

    act_ids = sorted(state.placements)
    iterations_run = 0
    accepted = 0
    deadline = None if config.time_limit is None else time.monotonic() + config.time_limit

    if act_ids and config.local_search_iterations > 0:
        temp = config.initial_temperature if config.initial_temperature is not None \
            else _calibrate_temperature(state, base + effect, price, rng, act_ids)
        iters = config.local_search_iterations
        cooling = config.cooling_rate if config.cooling_rate is not None \
            else (1e-3) ** (1.0 / iters)
        for _ in range(iters):
            iterations_run += 1
            if deadline is not None and iterations_run % 32 == 0 \
                    and time.monotonic() > deadline:
                break
            kind = rng.random()
            changed = False
            if kind < 0.55 or len(act_ids) < 2:
                changed = _move_shift(state, rng, act_ids, base, effect, price,
                                      cur_cost, temp)
            elif kind < 0.8:
                changed = _move_swap(state, rng, act_ids, base, effect, price,
                                     cur_cost, temp)
            else:
                changed = _move_rooms(state, rng, act_ids)
            if changed:
                accepted += 1
                # budgeted re-dispatch keeps per-move cost bounded on month
                # horizons; the final polish below runs uncapped
                plan = dispatch(state.profile, max_rounds=16)
                effect = battery_effect(plan)
                cur_cost = profile_cost(base + state.profile + effect, price)
                if cur_cost < best_cost - _IMPROVE_TOL:
                    best_cost = cur_cost
                    best_schedule = Schedule(list(state.placements.values()), plan.copy())
            temp = max(temp * cooling, 1e-12)

    best_profile = np.zeros(cal.horizon)
    for pl in best_schedule.placements:
        act = inst.recurring[pl.activity_id]
        best_profile[state.month_indices(pl.slot, act.duration)] += act.load
    polished = dispatch(best_profile)
    polished_cost = profile_cost(base + best_profile + battery_effect(polished), price)
    if polished_cost < best_cost:
        best_cost = polished_cost
        best_schedule = Schedule(list(best_schedule.placements), polished)

    best_schedule.placements.sort(key=lambda p: p.activity_id)
    if report_sink is not None:
        report_sink.update({
            "policy": policy.value,
            "seed": config.random_seed,
            "warm_start_costs": [float(c) for c in warm_costs],
            "best_warm_start_cost": float(warm_costs[best_warm]),
            "iterations": iterations_run,
            "accepted_moves": accepted,
            "final_cost": float(best_cost),
        })
    return best_schedule, float(best_cost)


def _accept(delta: float, temp: float, rng: np.random.Generator) -> bool:
    if delta <= 0:
        return True
    if temp <= 0:
        return False
    return bool(rng.random() < math.exp(-delta / temp))


def _move_shift(state: _SearchState, rng, act_ids, base, effect, price,
                cur_cost, temp) -> bool:
    aid = act_ids[int(rng.integers(len(act_ids)))]
    old = state.remove(aid)
    cands = [s for s in state.slot_candidates(aid) if s != old.slot]
    if not cands:
        state.add(old)
        return False
    slot = cands[int(rng.integers(len(cands)))]
    pl = state.try_place(aid, slot)
    if pl is None:
        state.add(old)
        return False
    delta = profile_cost(base + state.profile + effect, price) - cur_cost
    if _accept(delta, temp, rng):
        return True
    state.remove(aid)
    state.add(old)
    return False


def _move_swap(state: _SearchState, rng, act_ids, base, effect, price,
               cur_cost, temp) -> bool:
    i = int(rng.integers(len(act_ids)))
    j = int(rng.integers(len(act_ids) - 1))
    if j >= i:
        j += 1
    a, b = act_ids[i], act_ids[j]
    old_a = state.remove(a)
    old_b = state.remove(b)
    pl_a = state.try_place(a, old_b.slot)
    pl_b = state.try_place(b, old_a.slot) if pl_a is not None else None
    if pl_b is None:
        if pl_a is not None:
            state.remove(a)
        state.add(old_a)
        state.add(old_b)
        return False
    delta = profile_cost(base + state.profile + effect, price) - cur_cost
    if _accept(delta, temp, rng):
        return True
    state.remove(a)
    state.remove(b)
    state.add(old_a)
    state.add(old_b)
    return False


def _move_rooms(state: _SearchState, rng, act_ids) -> bool:
    aid = act_ids[int(rng.integers(len(act_ids)))]
    old = state.remove(aid)
    order = rng.permutation(len(state.inst.buildings))
    pl = state.try_place(aid, old.slot, order)
    if pl is None:
        state.add(old)
        return False
    return pl.rooms != old.rooms


def evaluate_against_actual(schedule: Schedule, actual_net: NetLoadSeries,
                            prices: PriceSeries, inst: Instance,
                            cal: Calendar) -> float:
    """Realized cost of a schedule against the actual net load."""
    return total_cost(actual_net, prices, inst, cal, schedule)

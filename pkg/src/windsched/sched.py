"""Batch-job scheduling against a predicted green-energy profile.

Model: time is divided into slots; a job runs at constant power for a whole
number of consecutive slots, non-preemptively, between its release slot and
its (exclusive) deadline. The per-slot cost charges brown energy drawn from
the grid plus, weighted by ``lam``, green energy that can neither be
consumed locally nor exported through the transformer:

    cost = sum_t  max(0, P_t - g_t)  +  lam * max(0, g_t - P_t - C)

with P_t the total running power, g_t the green supply, and C the export
capacity. Total datacenter power is capped by P_max in every slot.

Schedulers: exhaustive enumeration (the optimal-cost oracle, guarded by a
combination limit), a deterministic greedy that places jobs in descending
total-energy order, and a randomized greedy drawing each placement from the
k cheapest candidates using a seeded PCG64 generator, so equal seeds give
equal schedules on every platform.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .dataio import ATTRIBUTES, WeatherRecord
from .errors import DataError, InfeasibleError, MissingFieldError, SearchSpaceError
from .stats import CorrelationMatrix

DEFAULT_LAMBDA = 1.0
DEFAULT_RCL_SIZE = 3
DEFAULT_BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class Job:
    """A batch job drawing constant power for ``duration`` consecutive slots."""

    id: str
    power: float
    duration: int
    release: int = 0
    deadline: Optional[int] = None  # exclusive; None means the profile horizon

    def __post_init__(self):
        if not self.id:
            raise ValueError("job id must be non-empty")
        if self.power <= 0:
            raise ValueError(f"job {self.id}: power must be > 0")
        if self.duration < 1:
            raise ValueError(f"job {self.id}: duration must be >= 1 slot")
        if self.release < 0:
            raise ValueError(f"job {self.id}: release must be >= 0")
        if self.deadline is not None and self.release + self.duration > self.deadline:
            raise ValueError(f"job {self.id}: window shorter than duration")

    @property
    def energy(self) -> float:
        return self.power * self.duration

    def end_limit(self, horizon: int) -> int:
        return horizon if self.deadline is None else min(self.deadline, horizon)


@dataclass(eq=False)
class EnergyProfile:
    """Per-slot green energy plus the transformer and datacenter caps (MW)."""

    green: np.ndarray
    datacenter_cap: float
    export_capacity: float = 0.0
    slot_length: float = 3600.0

    def __post_init__(self):
        self.green = np.asarray(self.green, dtype=np.float64)
        if self.green.ndim != 1:
            raise ValueError("green must be a 1-d series")
        if np.any(~np.isfinite(self.green)) or np.any(self.green < 0):
            raise ValueError("green energy values must be finite and >= 0")
        if self.export_capacity < 0:
            raise ValueError("export capacity must be >= 0")
        if self.datacenter_cap <= 0:
            raise ValueError("datacenter cap must be > 0")
        if self.slot_length <= 0:
            raise ValueError("slot length must be > 0")
        self.green.setflags(write=False)

    @property
    def horizon(self) -> int:
        return len(self.green)

    def to_json_dict(self) -> dict:
        return {
            "green_mw": [float(g) for g in self.green],
            "datacenter_cap_mw": self.datacenter_cap,
            "export_capacity_mw": self.export_capacity,
            "slot_length_seconds": self.slot_length,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "EnergyProfile":
        return cls(
            green=np.asarray(data["green_mw"], dtype=np.float64),
            datacenter_cap=float(data["datacenter_cap_mw"]),
            export_capacity=float(data.get("export_capacity_mw", 0.0)),
            slot_length=float(data.get("slot_length_seconds", 3600.0)),
        )


def jobs_from_json_dict(data: dict) -> list[Job]:
    jobs = []
    for entry in data["jobs"]:
        jobs.append(
            Job(
                id=str(entry["id"]),
                power=float(entry["power_mw"]),
                duration=int(entry["duration_slots"]),
                release=int(entry.get("release_slot", 0)),
                deadline=None if entry.get("deadline_slot") is None else int(entry["deadline_slot"]),
            )
        )
    return jobs


def jobs_to_json_dict(jobs: Sequence[Job]) -> dict:
    return {
        "jobs": [
            {
                "id": j.id,
                "power_mw": j.power,
                "duration_slots": j.duration,
                "release_slot": j.release,
                "deadline_slot": j.deadline,
            }
            for j in jobs
        ]
    }


def _slot_cost(load: float, green: float, export_capacity: float, lam: float) -> float:
    brown = load - green
    if brown < 0.0:
        brown = 0.0
    curtailed = green - load - export_capacity
    if curtailed < 0.0:
        curtailed = 0.0
    return brown + lam * curtailed


def _check_jobs(jobs: Sequence[Job], profile: EnergyProfile) -> None:
    seen = set()
    for job in jobs:
        if job.id in seen:
            raise DataError(f"duplicate job id {job.id!r}")
        seen.add(job.id)
        if job.power > profile.datacenter_cap:
            raise InfeasibleError(
                f"job {job.id}: power {job.power} exceeds datacenter cap {profile.datacenter_cap}"
            )
        if not _window_starts(job, profile.horizon):
            raise InfeasibleError(
                f"job {job.id}: no start slot fits its window within horizon {profile.horizon}"
            )


def _window_starts(job: Job, horizon: int) -> range:
    return range(job.release, job.end_limit(horizon) - job.duration + 1)


def cost(
    assignments: Mapping[str, int],
    jobs: Sequence[Job],
    profile: EnergyProfile,
    lam: float = DEFAULT_LAMBDA,
) -> float:
    """Cost of a complete assignment, validating feasibility along the way.

    Raises InfeasibleError naming the violated constraint: a job missing
    from or unknown to the assignment, a start outside a job's window, or a
    slot where total load exceeds the datacenter cap.
    """
    load = _load_trace(assignments, jobs, profile)
    return _cost_of_load(load, profile, lam)


def _load_trace(assignments, jobs, profile) -> np.ndarray:
    by_id = {job.id: job for job in jobs}
    if set(assignments) != set(by_id):
        missing = sorted(set(by_id) - set(assignments))
        extra = sorted(set(assignments) - set(by_id))
        parts = []
        if missing:
            parts.append(f"unassigned jobs: {', '.join(missing)}")
        if extra:
            parts.append(f"unknown job ids: {', '.join(extra)}")
        raise InfeasibleError("; ".join(parts))
    load = np.zeros(profile.horizon)
    for job_id in sorted(assignments):
        job = by_id[job_id]
        start = assignments[job_id]
        if start not in _window_starts(job, profile.horizon):
            raise InfeasibleError(
                f"job {job.id}: start {start} outside window "
                f"[{job.release}, {job.end_limit(profile.horizon) - job.duration}]"
            )
        load[start : start + job.duration] += job.power
    over = np.nonzero(load > profile.datacenter_cap)[0]
    if over.size:
        t = int(over[0])
        raise InfeasibleError(
            f"slot {t}: load {load[t]} exceeds datacenter cap {profile.datacenter_cap}"
        )
    return load


def _cost_of_load(load: np.ndarray, profile: EnergyProfile, lam: float) -> float:
    total = 0.0
    for t in range(profile.horizon):
        total += _slot_cost(float(load[t]), float(profile.green[t]), profile.export_capacity, lam)
    return total


@dataclass(eq=False)
class Schedule:
    """A feasible assignment of every job to a start slot, with its cost."""

    assignments: dict[str, int]
    cost: float
    load: np.ndarray

    def __post_init__(self):
        self.assignments = {str(k): int(v) for k, v in sorted(self.assignments.items())}
        self.load = np.asarray(self.load, dtype=np.float64)
        self.load.setflags(write=False)

    @classmethod
    def build(
        cls,
        assignments: Mapping[str, int],
        jobs: Sequence[Job],
        profile: EnergyProfile,
        lam: float = DEFAULT_LAMBDA,
    ) -> "Schedule":
        """Construct with the cost recomputed from scratch (the stored value
        is by definition the recomputation)."""
        load = _load_trace(assignments, jobs, profile)
        return cls(assignments=dict(assignments), cost=_cost_of_load(load, profile, lam), load=load)

    def validate(self, jobs: Sequence[Job], profile: EnergyProfile, lam: float = DEFAULT_LAMBDA) -> None:
        """Re-derive cost and load from the assignments; raises on any drift."""
        load = _load_trace(self.assignments, jobs, profile)
        if not np.array_equal(load, self.load):
            raise InfeasibleError("stored load trace does not match assignments")
        recomputed = _cost_of_load(load, profile, lam)
        if recomputed != self.cost:
            raise InfeasibleError(f"stored cost {self.cost} != recomputed {recomputed}")

    def to_json_dict(self) -> dict:
        return {
            "assignments": dict(self.assignments),
            "cost": self.cost,
            "load_mw": [float(v) for v in self.load],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Schedule":
        return cls(
            assignments={str(k): int(v) for k, v in data["assignments"].items()},
            cost=float(data["cost"]),
            load=np.asarray(data["load_mw"], dtype=np.float64),
        )


def schedule_to_csv_text(schedule: Schedule, profile: EnergyProfile) -> str:
    """Per-slot breakdown (green, load, brown, curtailed) for plotting."""
    lines = ["slot,green_mw,load_mw,brown_mw,curtailed_mw"]
    for t in range(profile.horizon):
        g = float(profile.green[t])
        p = float(schedule.load[t])
        brown = max(0.0, p - g)
        curtailed = max(0.0, g - p - profile.export_capacity)
        lines.append(f"{t},{g!r},{p!r},{brown!r},{curtailed!r}")
    return "\n".join(lines) + "\n"


def brute_force(
    jobs: Sequence[Job],
    profile: EnergyProfile,
    lam: float = DEFAULT_LAMBDA,
    limit: int = DEFAULT_BRUTE_FORCE_LIMIT,
) -> Schedule:
    """Enumerate every start combination and return the cheapest feasible one.

    Ties resolve to the lexicographically smallest start vector in job-id
    order. Raises SearchSpaceError before enumerating if the combination
    count exceeds ``limit`` (exhaustive search scales exponentially), and
    InfeasibleError if no combination satisfies the power cap.
    """
    ordered = sorted(jobs, key=lambda j: j.id)
    _check_jobs(ordered, profile)
    start_lists = [list(_window_starts(job, profile.horizon)) for job in ordered]
    combinations = 1
    for starts in start_lists:
        combinations *= len(starts)
    if combinations > limit:
        raise SearchSpaceError(
            f"{combinations} start combinations exceed the limit of {limit}"
        )

    best_vector = None
    best_cost = np.inf
    cap = profile.datacenter_cap
    for vector in itertools.product(*start_lists):
        load = np.zeros(profile.horizon)
        feasible = True
        for job, start in zip(ordered, vector):
            load[start : start + job.duration] += job.power
        if np.any(load > cap):
            continue
        c = _cost_of_load(load, profile, lam)
        if c < best_cost:  # strict: first minimum wins, which is the lexicographic one
            best_cost = c
            best_vector = vector
        del feasible
    if best_vector is None:
        raise InfeasibleError("no feasible schedule exists for this instance")
    assignments = {job.id: start for job, start in zip(ordered, best_vector)}
    return Schedule.build(assignments, jobs, profile, lam)


def _placement_candidates(
    job: Job, load: np.ndarray, profile: EnergyProfile, lam: float
) -> list[tuple[float, int]]:
    """(incremental cost, start) for every capacity-feasible start, sorted
    cheapest first with earlier starts winning ties."""
    cap = profile.datacenter_cap
    out = []
    for start in _window_starts(job, profile.horizon):
        window = load[start : start + job.duration]
        if np.any(window + job.power > cap):
            continue
        delta = 0.0
        for t in range(start, start + job.duration):
            g = float(profile.green[t])
            delta += _slot_cost(float(load[t]) + job.power, g, profile.export_capacity, lam)
            delta -= _slot_cost(float(load[t]), g, profile.export_capacity, lam)
        out.append((delta, start))
    out.sort(key=lambda pair: (pair[0], pair[1]))
    return out


def _greedy_order(jobs: Sequence[Job]) -> list[Job]:
    # Highest-energy jobs pick their slots first; ids break ties.
    return sorted(jobs, key=lambda j: (-j.energy, j.id))


def greedy(
    jobs: Sequence[Job], profile: EnergyProfile, lam: float = DEFAULT_LAMBDA
) -> Schedule:
    """Deterministic greedy: place jobs in descending total-energy order,
    each at the feasible start with the lowest incremental cost."""
    _check_jobs(jobs, profile)
    load = np.zeros(profile.horizon)
    assignments: dict[str, int] = {}
    for job in _greedy_order(jobs):
        candidates = _placement_candidates(job, load, profile, lam)
        if not candidates:
            raise InfeasibleError(
                f"job {job.id}: no feasible start given prior placements"
            )
        start = candidates[0][1]
        assignments[job.id] = start
        load[start : start + job.duration] += job.power
    return Schedule.build(assignments, jobs, profile, lam)


def randomized_greedy(
    jobs: Sequence[Job],
    profile: EnergyProfile,
    lam: float = DEFAULT_LAMBDA,
    seed: int = 0,
    k: int = DEFAULT_RCL_SIZE,
) -> Schedule:
    """Greedy with a restricted candidate list: each placement is drawn
    uniformly from the k cheapest feasible starts.

    Draws come from numpy's PCG64 seeded with ``seed``, so the same seed
    reproduces the same schedule everywhere. k=1 degenerates to ``greedy``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_jobs(jobs, profile)
    rng = np.random.default_rng(seed)
    load = np.zeros(profile.horizon)
    assignments: dict[str, int] = {}
    for job in _greedy_order(jobs):
        candidates = _placement_candidates(job, load, profile, lam)
        if not candidates:
            raise InfeasibleError(
                f"job {job.id}: no feasible start given prior placements"
            )
        rcl = candidates[: min(k, len(candidates))]
        start = rcl[int(rng.integers(len(rcl)))][1]
        assignments[job.id] = start
        load[start : start + job.duration] += job.power
    return Schedule.build(assignments, jobs, profile, lam)


# ---------------------------------------------------------------------------
# Precomputed schedules selected by current weather through a decision tree.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """A representative weather condition and the profile that goes with it."""

    id: str
    weather: WeatherRecord
    profile: EnergyProfile


@dataclass(frozen=True)
class TreeLeaf:
    schedule_id: str


@dataclass(frozen=True)
class TreeNode:
    attribute: str
    threshold: float
    left: "TreeNode | TreeLeaf"  # taken when value < threshold
    right: "TreeNode | TreeLeaf"


@dataclass(eq=False)
class ScheduleTree:
    """Binary decision tree over weather attributes with precomputed schedules."""

    root: TreeNode | TreeLeaf
    schedules: dict[str, Schedule]

    def __post_init__(self):
        for leaf_id in self.leaf_ids():
            if leaf_id not in self.schedules:
                raise ValueError(f"leaf schedule {leaf_id!r} missing from the bank")

    def leaf_ids(self) -> list[str]:
        out = []

        def walk(node):
            if isinstance(node, TreeLeaf):
                out.append(node.schedule_id)
            else:
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out


def _attribute_order(corr: CorrelationMatrix) -> list[str]:
    # Strongest absolute correlation with wind energy first; the fixed
    # attribute order breaks ties (stable sort).
    return sorted(ATTRIBUTES, key=lambda a: -abs(corr.value("wind_energy", a)))


def build_schedule_tree(
    scenarios: Sequence[Scenario],
    jobs: Sequence[Job],
    corr: CorrelationMatrix,
    max_depth: int,
    lam: float = DEFAULT_LAMBDA,
) -> ScheduleTree:
    """Precompute greedy schedules per weather scenario and index them.

    Nodes split on attributes in descending absolute wind-energy correlation
    order; the threshold is the median of the attribute over the scenarios
    reaching the node (value < threshold goes left). An attribute whose
    split would leave one side empty is skipped at that node. Each leaf
    holds the greedy schedule of its lowest-id scenario.
    """
    if not scenarios:
        raise DataError("at least one scenario is required")
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise DataError("scenario ids must be unique")
    for s in scenarios:
        missing = s.weather.missing_fields()
        if missing:
            raise MissingFieldError(
                f"scenario {s.id}: weather is missing {', '.join(missing)}", fields=missing
            )

    order = _attribute_order(corr)
    bank: dict[str, Schedule] = {}

    def leaf_for(subset: Sequence[Scenario]) -> TreeLeaf:
        representative = min(subset, key=lambda s: s.id)
        if representative.id not in bank:
            bank[representative.id] = greedy(jobs, representative.profile, lam)
        return TreeLeaf(schedule_id=representative.id)

    def split(subset: Sequence[Scenario], depth: int, next_attr: int):
        if depth >= max_depth or len(subset) <= 1:
            return leaf_for(subset)
        for idx in range(next_attr, len(order)):
            attribute = order[idx]
            values = np.array([s.weather.value(attribute) for s in subset], dtype=np.float64)
            threshold = float(np.median(values))
            left = [s for s, v in zip(subset, values) if v < threshold]
            right = [s for s, v in zip(subset, values) if v >= threshold]
            if left and right:
                return TreeNode(
                    attribute=attribute,
                    threshold=threshold,
                    left=split(left, depth + 1, idx + 1),
                    right=split(right, depth + 1, idx + 1),
                )
        return leaf_for(subset)

    root = split(list(scenarios), 0, 0)
    return ScheduleTree(root=root, schedules=bank)


def descend(tree: ScheduleTree, record: WeatherRecord) -> str:
    """Root-to-leaf walk; returns the selected schedule id."""
    node = tree.root
    while isinstance(node, TreeNode):
        value = record.value(node.attribute)
        if value is None:
            raise MissingFieldError(
                f"record is missing {node.attribute!r}, which the tree tests",
                fields=(node.attribute,),
            )
        node = node.left if value < node.threshold else node.right
    return node.schedule_id


def select_schedule(tree: ScheduleTree, record: WeatherRecord) -> Schedule:
    """The precomputed schedule for the current weather condition."""
    return tree.schedules[descend(tree, record)]

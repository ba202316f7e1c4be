"""Actuation cycles: inflation and deflation legs, trajectories, crawling modes.

Inflation is fast; all contacts slip and the sheet re-settles at each step
with its in-plane center of mass and heading frozen (shape change only).
Deflation is slow and quasi-static; at each step one contact sticks (the
anchor) and the stick-slip solve advances the world pose.  Contact-set
changes and tip-overs are recorded as events; the number of contact changes
over the deflation leg of the canonical sweep is the design's N_change.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact import RestPose, find_resting_pose, hull_facets, pose_with_transform, track_pose
from .errors import (BranchJump, Degenerate, NoAnchor, NoClosure, NoRoot,
                     NoStablePose, TooShort, Unstable)
from .kinematics import FoldContinuation, detect_self_intersection, fold_geometry
from .pattern import CreasePattern, VertexDesign, build_pattern, validate_design
from .statics import FrictionModel, solve_stick_slip

STRAIGHT_KAPPA = 5e-3        # 1/mm; below this the local trajectory is straight
MIN_MODE_SAMPLES = 5         # shorter runs are merged into their neighbors
STALL_BETA = 176.0           # above this driven angle contact is too flat to resolve


@dataclass
class ActuationSchedule:
    beta_max: float = 180.0
    beta_min: float = 120.0
    dbeta: float = 0.5
    cycles: int = 1

    def __post_init__(self):
        if not 120.0 <= self.beta_min < self.beta_max <= 180.0:
            raise ValueError(
                f"need 120 <= beta_min < beta_max <= 180, got ({self.beta_min}, {self.beta_max})"
            )
        if self.dbeta <= 0:
            raise ValueError("dbeta must be positive")

    def down(self, from_beta, to_beta):
        n = int(round((from_beta - to_beta) / self.dbeta))
        return [from_beta - k * self.dbeta for k in range(1, n + 1)]

    def up(self, from_beta, to_beta):
        n = int(round((to_beta - from_beta) / self.dbeta))
        return [from_beta + k * self.dbeta for k in range(1, n + 1)]


@dataclass
class Sample:
    t_index: int
    beta: float
    com_xy: np.ndarray
    heading: float
    contact_ids: tuple
    phase: str               # "inflation" or "deflation"
    cycle: int
    moved: bool
    anchor_id: int | None = None
    event: str = ""


@dataclass
class Event:
    kind: str                # contact_change | tip_over | stall | fold_limit
    beta: float
    phase: str
    cycle: int
    old_ids: tuple = ()
    new_ids: tuple = ()


@dataclass
class Trajectory:
    samples: list = field(default_factory=list)
    events: list = field(default_factory=list)
    failure: str | None = None
    beta_reached: float | None = None

    def com_path(self, phase=None, cycle=None):
        pts = [
            s.com_xy
            for s in self.samples
            if (phase is None or s.phase == phase) and (cycle is None or s.cycle == cycle)
        ]
        return np.array(pts) if pts else np.zeros((0, 2))

    def deflation_events(self, cycle=None):
        return [e for e in self.events
                if e.phase == "deflation"
                and (cycle is None or e.cycle == cycle)
                and e.kind in ("contact_change", "tip_over")]


@dataclass
class Mode:
    kind: str                # straight | left | right
    beta_lo: float
    beta_hi: float
    length: float            # arc length of the COM path over the interval, mm
    alpha: float             # direction angle in the initial-heading frame, deg
    kappa_t: float           # total tangent-angle change, rad
    n_change_in_range: int
    n_samples: int


@dataclass
class ModeReport:
    modes: list
    n_change_total: int
    crawls: bool
    failure: str | None      # cannot_stand | facet_collision | no_anchor | ...
    beta_reached: float | None = None

    @property
    def kinds(self):
        return [m.kind for m in self.modes]

    def to_dict(self):
        return {
            "crawls": self.crawls,
            "failure": self.failure,
            "n_change": self.n_change_total,
            "beta_reached": self.beta_reached,
            "modes": [
                {
                    "kind": m.kind,
                    "beta_lo": m.beta_lo,
                    "beta_hi": m.beta_hi,
                    "length_mm": m.length,
                    "alpha_deg": m.alpha,
                    "kappa_t_rad": m.kappa_t,
                    "n_change_in_range": m.n_change_in_range,
                    "n_samples": m.n_samples,
                }
                for m in self.modes
            ],
        }


class CollisionError(Exception):
    """Facet collision during folding; the design cannot complete the sweep."""


class CrawlSimulator:
    """Stateful runner for one design: folds, poses, stick-slip trajectory."""

    def __init__(self, pattern: CreasePattern, friction: FrictionModel, weight=1.0):
        self.pattern = pattern
        self.friction = friction
        self.weight = weight
        self.cont = FoldContinuation(pattern)
        self._states = {}
        self._collision = {}
        self.pose: RestPose | None = None
        self.heading = 0.0
        self.t_index = 0
        self.cycle = 0
        self.trajectory = Trajectory()
        self.force_rows = []           # (beta, [(vid, N, Fs, psi), ...]) per deflation step

    # -- folding -----------------------------------------------------------

    def state_at(self, beta):
        key = round(beta, 6)
        if key not in self._states:
            gamma = self.cont.solve(beta)
            self._states[key] = fold_geometry(self.pattern, gamma, beta=beta)
        return self._states[key]

    def _check_collision(self, state, beta):
        key = round(beta, 6)
        if key not in self._collision:
            self._collision[key] = detect_self_intersection(state)
        if self._collision[key]:
            raise CollisionError(f"facet collision at beta={beta:.1f}")

    # -- bookkeeping ---------------------------------------------------------

    def _sample(self, beta, phase, moved, anchor_id=None, event=""):
        com = self.pose.com_proj.copy() if self.pose is not None else np.zeros(2)
        ids = tuple(sorted(self.pose.contact_ids)) if self.pose is not None else ()
        self.trajectory.samples.append(
            Sample(self.t_index, beta, com, self.heading, ids, phase, self.cycle,
                   moved, anchor_id, event)
        )
        self.t_index += 1

    def _event(self, kind, beta, phase, old_ids=(), new_ids=()):
        self.trajectory.events.append(
            Event(kind, beta, phase, self.cycle, tuple(sorted(old_ids)), tuple(sorted(new_ids)))
        )

    def _change_kind(self, state, old_pose):
        """tip_over when the old facet is still on the hull but lost stability."""
        if old_pose is None:
            return "contact_change"
        try:
            keys = {tuple(sorted(f.ids)) for f in hull_facets(state)}
        except NoStablePose:
            return "contact_change"
        return "tip_over" if tuple(sorted(old_pose.facet_ids)) in keys else "contact_change"

    # -- legs ------------------------------------------------------------------

    def run_inflation(self, from_beta, to_beta, schedule, record=True):
        """Fast leg: beta decreases, pose re-settles, no in-plane motion.

        Returns the lowest driven angle actually reached (a fold limit may
        stop the leg early).
        """
        for beta in schedule.down(from_beta, to_beta):
            try:
                state = self.state_at(beta)
            except (NoClosure, BranchJump):
                reached = self.cont.beta
                self.trajectory.beta_reached = reached
                if record:
                    self._event("fold_limit", beta, "inflation")
                return reached
            self._check_collision(state, beta)
            old = self.pose
            pose, ev = track_pose(state, self.pose)
            if pose is not None:
                self.pose = pose
            if record:
                if ev == "change" and beta <= STALL_BETA:
                    self._event(self._change_kind(state, old), beta, "inflation",
                                old.facet_ids, pose.facet_ids)
                self._sample(beta, "inflation", moved=False, event=ev or "")
        return to_beta

    def run_deflation(self, from_beta, to_beta, schedule):
        """Slow leg: beta increases, anchored stick-slip motion."""
        for beta in schedule.up(from_beta, to_beta):
            state = self.state_at(beta)
            self._check_collision(state, beta)
            old = self.pose
            pose, ev = track_pose(state, self.pose)
            if ev == "stall":
                self._sample(beta, "deflation", moved=False, event="stall")
                continue
            if ev in ("seat", "change"):
                self.pose = pose
                if ev == "change" and beta <= STALL_BETA:
                    self._event(self._change_kind(state, old), beta, "deflation",
                                old.facet_ids, pose.facet_ids)
                self._sample(beta, "deflation", moved=False, event=ev)
                continue
            if pose is None or pose.flat:
                self.pose = pose
                self._sample(beta, "deflation", moved=False)
                continue
            try:
                sol, (R_new, t_new) = solve_stick_slip(old, state, self.friction, self.weight)
            except (NoAnchor, NoRoot, Unstable, Degenerate):
                self.pose = pose      # frozen re-seat of the new shape
                self._sample(beta, "deflation", moved=False, event="no_anchor")
                continue
            self.pose = pose_with_transform(state, R_new, t_new, old.facet_ids,
                                            preferred_contacts=old.contact_ids)
            self.heading += sol.dphi
            self.force_rows.append(
                (beta, [(cf.vertex_id, cf.N, cf.F_s,
                         next(cp.psi for cp in self.pose.contacts if cp.vertex_id == cf.vertex_id))
                        for cf in sol.contact_forces])
            )
            self._sample(beta, "deflation", moved=True, anchor_id=sol.anchor_id)
        return to_beta

    # -- cycles -----------------------------------------------------------------

    def settle_at(self, beta_max, schedule):
        """Assembly: fold from flat down to beta_max with pose tracking."""
        state0 = self.state_at(180.0)
        self.pose = find_resting_pose(state0)
        if beta_max < 180.0:
            return self.run_inflation(180.0, beta_max, schedule, record=False)
        return beta_max

    def run_cycles(self, schedule: ActuationSchedule):
        try:
            reached_max = self.settle_at(schedule.beta_max, schedule)
            for c in range(schedule.cycles):
                self.cycle = c
                reached = self.run_inflation(reached_max, schedule.beta_min, schedule)
                if c == 0 and (self.pose is None or self.pose.flat):
                    self.trajectory.failure = "cannot_stand"
                    return self.trajectory
                self.run_deflation(reached, reached_max, schedule)
        except CollisionError:
            self.trajectory.failure = "facet_collision"
            return self.trajectory
        except NoStablePose:
            self.trajectory.failure = "cannot_stand"
            return self.trajectory
        if not any(s.moved for s in self.trajectory.samples):
            self.trajectory.failure = self.trajectory.failure or "no_anchor"
        return self.trajectory


# -- curvature and classification ---------------------------------------------


def curvature_profile(com_xy):
    """Local curvature, total turning, arc length and mean direction of a path.

    com_xy: (n, 2) ordered positions, n >= 3.  Zero-length steps are skipped.
    Curvature is |d theta| / ds on consecutive step pairs; kappa_t sums the
    absolute tangent-angle changes; alpha is the mean direction in degrees.
    """
    pts = np.asarray(com_xy, dtype=float)
    if len(pts) < 3:
        raise TooShort(f"need at least 3 samples, got {len(pts)}")
    seg = np.diff(pts, axis=0)
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    keep = seglen > 1e-12
    seg, seglen = seg[keep], seglen[keep]
    if len(seg) == 0:
        return {"kappa": np.zeros(0), "kappa_t": 0.0, "length": 0.0, "alpha": 0.0,
                "tangents": np.zeros(0)}
    tangents = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))
    if len(seg) == 1:
        return {"kappa": np.zeros(0), "kappa_t": 0.0, "length": float(seglen.sum()),
                "alpha": float(np.degrees(tangents[0])), "tangents": tangents}
    dtheta = np.diff(tangents)
    ds = 0.5 * (seglen[:-1] + seglen[1:])
    kappa = np.abs(dtheta) / np.where(ds > 1e-12, ds, 1.0)
    mean_dir = np.arctan2(np.sum(seg[:, 1]), np.sum(seg[:, 0]))
    return {
        "kappa": kappa,
        "kappa_t": float(np.sum(np.abs(dtheta))),
        "length": float(np.sum(seglen)),
        "alpha": float(np.degrees(mean_dir)),
        "tangents": tangents,
    }


def _merge_short_runs(runs):
    """Absorb runs shorter than MIN_MODE_SAMPLES into their longer neighbor."""
    runs = [list(r) for r in runs]
    changed = True
    while changed and len(runs) > 1:
        changed = False
        for j, (kind, a, b) in enumerate(runs):
            if b - a + 1 >= MIN_MODE_SAMPLES:
                continue
            neigh = [t for t in (j - 1, j + 1) if 0 <= t < len(runs)]
            target = max(neigh, key=lambda t: runs[t][2] - runs[t][1])
            lo = min(a, runs[target][1])
            hi = max(b, runs[target][2])
            merged = [runs[target][0], lo, hi]
            for idx in sorted((j, target), reverse=True):
                del runs[idx]
            runs.insert(min(j, target), merged)
            changed = True
            break
    return runs


def classify_deflation(samples, events, cycle=0):
    """Mode list for the deflation leg of one cycle."""
    defl = [s for s in samples if s.phase == "deflation" and s.cycle == cycle]
    moved = [s for s in defl if s.moved]
    if len(moved) < 3:
        return []
    pts = np.array([s.com_xy for s in moved])
    betas = np.array([s.beta for s in moved])
    seg = np.diff(pts, axis=0)                      # seg i: moved[i] -> moved[i+1]
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    tangents = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))
    theta0 = tangents[0]
    dtheta = np.diff(tangents)                      # dtheta i: seg i -> seg i+1
    ds = 0.5 * (seglen[:-1] + seglen[1:])
    kappa = np.abs(dtheta) / np.where(ds > 1e-12, ds, 1.0)

    kinds = []
    for i in range(len(seg)):
        local = []
        if i > 0:
            local.append((kappa[i - 1], dtheta[i - 1]))
        if i < len(dtheta):
            local.append((kappa[i], dtheta[i]))
        kmax, dth = max(local, key=lambda t: t[0]) if local else (0.0, 0.0)
        if kmax < STRAIGHT_KAPPA:
            kinds.append("straight")
        else:
            kinds.append("left" if dth > 0 else "right")

    event_betas = sorted(e.beta for e in events
                         if e.phase == "deflation" and e.cycle == cycle
                         and e.kind in ("contact_change", "tip_over"))

    # split segs into blocks at contact events (an event forces a mode boundary)
    blocks = []
    cur = [0]
    for i in range(1, len(kinds)):
        if any(betas[i] < eb <= betas[i + 1] for eb in event_betas):
            blocks.append(cur)
            cur = [i]
        else:
            cur.append(i)
    blocks.append(cur)

    modes = []
    for block in blocks:
        runs = _segment_runs([kinds[i] for i in block])
        runs = _merge_short_runs(runs)
        for kind, a, b in runs:
            i0, i1 = block[a], block[b]
            length = float(np.sum(seglen[i0:i1 + 1]))
            kap_t = float(np.sum(np.abs(dtheta[i0:i1]))) if i1 > i0 else 0.0
            vec = np.sum(seg[i0:i1 + 1], axis=0)
            alpha = float(np.degrees(np.arctan2(vec[1], vec[0]) - theta0))
            alpha = (alpha + 180.0) % 360.0 - 180.0
            b_lo, b_hi = float(betas[i0]), float(betas[i1 + 1])
            n_in = sum(1 for eb in event_betas if b_lo <= eb <= b_hi)
            modes.append(Mode(kind, b_lo, b_hi, length, alpha, kap_t, n_in, b - a + 1))
    return modes


def _segment_runs(kinds):
    runs = []
    for i, k in enumerate(kinds):
        if runs and runs[-1][0] == k:
            runs[-1][2] = i
        else:
            runs.append([k, i, i])
    return runs


def evaluate(design: VertexDesign, friction: FrictionModel, weight=1.0,
             schedule: ActuationSchedule | None = None):
    """Full single-design evaluation: (ModeReport, Trajectory, force rows)."""
    schedule = schedule or ActuationSchedule()
    flags = validate_design(design)
    if not flags.all_ok:
        reason = "not_developable" if not flags.developable else (
            "not_rigidly_foldable" if not flags.rigidly_foldable else "vertex_outside")
        return ModeReport([], 0, False, reason), Trajectory(failure=reason), []
    try:
        pattern = build_pattern(design)
    except Exception:
        return (ModeReport([], 0, False, "degenerate_pattern"),
                Trajectory(failure="degenerate_pattern"), [])
    sim = CrawlSimulator(pattern, friction, weight)
    try:
        sim.cont.tangent()
    except NoClosure:
        return (ModeReport([], 0, False, "no_fold_branch"),
                Trajectory(failure="no_fold_branch"), [])
    traj = sim.run_cycles(schedule)
    if traj.failure in ("facet_collision", "cannot_stand"):
        return (ModeReport([], 0, False, traj.failure, traj.beta_reached),
                traj, sim.force_rows)
    modes = classify_deflation(traj.samples, traj.events)
    n_change = len(traj.deflation_events(cycle=0))
    crawls = bool(modes)
    failure = None if crawls else (traj.failure or "no_anchor")
    return (ModeReport(modes, n_change, crawls, failure, traj.beta_reached),
            traj, sim.force_rows)


def classify_modes(design: VertexDesign, friction: FrictionModel, weight=1.0,
                   schedule: ActuationSchedule | None = None) -> ModeReport:
    """Canonical sweep (180 -> 120 -> 180 by default) and mode classification."""
    report, _, _ = evaluate(design, friction, weight, schedule)
    return report


def run_cycles(design: VertexDesign, schedule: ActuationSchedule,
               friction: FrictionModel, weight=1.0):
    """Multi-cycle trajectory for one design (CLI simulate entry point)."""
    pattern = build_pattern(design)
    sim = CrawlSimulator(pattern, friction, weight)
    traj = sim.run_cycles(schedule)
    return traj, sim

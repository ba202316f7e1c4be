"""Contact statics: normal forces, friction capacities, stick-slip anchor solve.

During slow deflation the sheet moves quasi-statically: one contact sticks
(the anchor) while the other two slip with fully mobilized friction opposing
their slip.  For a candidate anchor the only remaining rigid-body freedom is
the heading increment dphi about it; the vertical-axis moment balance of the
slip friction forces about the anchor determines dphi, and the anchor is
accepted when the in-plane force balance leaves it within its own friction
cone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import Degenerate, NoAnchor, NoRoot, Unstable

DPHI_LIMIT = np.deg2rad(20.0)     # bracket scan range for the heading increment
DPHI_SCAN = np.deg2rad(0.5)       # bracket scan step
SLIP_EPS = 1e-15                  # slip displacement below this exerts no friction


class FrictionModel:
    """Static friction coefficient as a function of the contact face angle psi.

    Either a constant, or a table of (psi_deg, mu_s) pairs with linear
    interpolation and flat extrapolation outside the tabulated range.
    """

    def __init__(self, mu=None, table=None):
        if (mu is None) == (table is None):
            raise ValueError("provide exactly one of mu or table")
        if mu is not None:
            if mu <= 0:
                raise ValueError("mu_s must be positive")
            self._mu = float(mu)
            self._psi = None
        else:
            psis = np.asarray([row[0] for row in table], dtype=float)
            mus = np.asarray([row[1] for row in table], dtype=float)
            if len(psis) == 0:
                raise ValueError("empty friction table")
            if np.any(np.diff(psis) <= 0):
                raise ValueError("table psi values must be strictly increasing")
            if psis[0] < 0 or psis[-1] > 180:
                raise ValueError("table psi values must lie in [0, 180] degrees")
            if np.any(mus <= 0):
                raise ValueError("mu_s must be positive everywhere")
            self._mu = None
            self._psi = psis
            self._mus = mus

    @classmethod
    def constant(cls, mu):
        return cls(mu=mu)

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["psi_deg", "mu_s"]:
                raise ValueError(f"friction CSV must have header 'psi_deg,mu_s', got {reader.fieldnames}")
            for row in reader:
                rows.append((float(row["psi_deg"]), float(row["mu_s"])))
        return cls(table=rows)

    def __call__(self, psi_deg):
        if self._mu is not None:
            return self._mu
        return float(np.interp(psi_deg, self._psi, self._mus))


@dataclass
class ContactForces:
    vertex_id: int
    N: float                 # normal force, weight units
    F_s: float               # static friction capacity mu_s(psi) * N
    f_t: np.ndarray          # in-plane tangential force on the sheet
    state: str               # "stick" or "slip"


@dataclass
class StepSolution:
    anchor_id: int
    dphi: float              # heading increment about the anchor, rad
    translation: np.ndarray  # in-plane COM displacement of this step, mm
    contact_forces: list     # ContactForces for the 3 contacts
    stick_margin: float      # F_s - |f_t| at the anchor
    rotation2d: np.ndarray   # (2, 2) in-plane rotation by dphi
    anchor_xy: np.ndarray    # fixed world position of the anchor
    com_xy: np.ndarray       # world COM after the step
    contact_xy: dict | None = None  # vertex id -> world position after the step


def normal_forces(contact_xy, com_xy, weight, b):
    """Normal forces from vertical force and moment balance (barycentric weights).

    contact_xy: (3, 2) world contact points; com_xy: (2,) COM projection.
    """
    p = np.asarray(contact_xy, dtype=float)
    c = np.asarray(com_xy, dtype=float)
    T = np.column_stack([p[0] - p[2], p[1] - p[2]])
    area2 = abs(np.linalg.det(T))
    if area2 < 2e-6 * b * b:
        raise Degenerate(f"contact triangle area {area2 / 2:.3g} below tolerance")
    lam12 = np.linalg.solve(T, c - p[2])
    lam = np.array([lam12[0], lam12[1], 1.0 - lam12[0] - lam12[1]])
    if np.any(lam < -1e-9):
        raise Unstable(f"COM outside the contact triangle (barycentric {lam})")
    return weight * lam


def static_friction(N, psi_deg, model: FrictionModel):
    """Friction capacity F_s = mu_s(psi) * N."""
    return model(psi_deg) * N


def _moment_residual(dphi_arr, q, p, anchor, Fs):
    """Vertical-axis moment of slip friction about the anchor, vectorized in dphi."""
    dphi_arr = np.atleast_1d(dphi_arr)
    c, s = np.cos(dphi_arr), np.sin(dphi_arr)
    M = np.zeros_like(dphi_arr)
    qa = q[anchor]
    pa = p[anchor]
    for j in range(3):
        if j == anchor:
            continue
        rel = q[j] - qa
        xj = np.stack([c * rel[0] - s * rel[1] + pa[0], s * rel[0] + c * rel[1] + pa[1]], axis=-1)
        du = xj - p[j]
        norm = np.hypot(du[..., 0], du[..., 1])
        norm = np.where(norm < SLIP_EPS, 1.0, norm)
        fj = -Fs[j] * du / norm[..., None]
        r = xj - pa
        M += r[..., 0] * fj[..., 1] - r[..., 1] * fj[..., 0]
    return M


def _slip_forces(dphi, q, p, anchor, Fs):
    c, s = np.cos(dphi), np.sin(dphi)
    R = np.array([[c, -s], [s, c]])
    qa, pa = q[anchor], p[anchor]
    forces = {}
    positions = {}
    for j in range(3):
        xj = R @ (q[j] - qa) + pa
        positions[j] = xj
        if j == anchor:
            continue
        du = xj - p[j]
        n = np.hypot(du[0], du[1])
        forces[j] = np.zeros(2) if n < SLIP_EPS else -Fs[j] * du / n
    return R, positions, forces


def _solve_anchor(q, p, anchor, Fs):
    """Heading increment about one anchor candidate from the moment balance."""
    grid = np.arange(-DPHI_LIMIT, DPHI_LIMIT + 0.5 * DPHI_SCAN, DPHI_SCAN)
    M = _moment_residual(grid, q, p, anchor, Fs)
    sign = np.sign(M)
    idx = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
    if len(idx) == 0:
        raise NoRoot("moment residual does not change sign in the scan window")
    # take the bracket closest to zero rotation
    mid = 0.5 * (grid[idx] + grid[idx + 1])
    k = idx[np.argmin(np.abs(mid))]
    lo, hi = grid[k], grid[k + 1]
    flo = M[k]
    for _ in range(80):
        mdl = 0.5 * (lo + hi)
        fm = _moment_residual(mdl, q, p, anchor, Fs)[0]
        if flo * fm <= 0:
            hi = mdl
        else:
            lo, flo = mdl, fm
        if hi - lo < 1e-12:
            break
    root = 0.5 * (lo + hi)
    # secant polish for machine-precision balance
    x0, x1 = lo, hi
    f0 = _moment_residual(x0, q, p, anchor, Fs)[0]
    f1 = _moment_residual(x1, q, p, anchor, Fs)[0]
    for _ in range(4):
        if abs(f1 - f0) < 1e-300:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if not lo - 1e-9 <= x2 <= hi + 1e-9:
            break
        x0, f0, x1, f1 = x1, f1, x2, _moment_residual(x2, q, p, anchor, Fs)[0]
    if abs(f1) < abs(_moment_residual(root, q, p, anchor, Fs)[0]):
        root = x1
    return root


def solve_anchor_step(p_prev, q_new, com_new, N, Fs, ids):
    """Try all three anchors; return the accepted StepSolution with max stick margin.

    p_prev: (3,2) previous world contact positions; q_new: (3,2) contact
    positions of the updated shape seated with the previous heading (before
    the rigid in-plane motion); com_new: (2,) seated COM of the updated shape.
    """
    best = None
    for a in range(3):
        try:
            dphi = _solve_anchor(q_new, p_prev, a, Fs)
        except NoRoot:
            continue
        R, positions, forces = _slip_forces(dphi, q_new, p_prev, a, Fs)
        f_anchor = -sum(forces.values())
        margin = Fs[a] - np.hypot(f_anchor[0], f_anchor[1])
        if margin < 0:
            continue
        if best is None or margin > best[0]:
            best = (margin, a, dphi, R, positions, forces, f_anchor)
    if best is None:
        raise NoAnchor("no contact point satisfies the sticking criterion")
    margin, a, dphi, R, positions, forces, f_anchor = best
    com_moved = R @ (com_new - q_new[a]) + p_prev[a]
    cf = []
    for j in range(3):
        if j == a:
            cf.append(ContactForces(ids[j], float(N[j]), float(Fs[j]), f_anchor.copy(), "stick"))
        else:
            cf.append(ContactForces(ids[j], float(N[j]), float(Fs[j]), forces[j].copy(), "slip"))
    return StepSolution(
        anchor_id=ids[a],
        dphi=float(dphi),
        translation=np.zeros(2),
        contact_forces=cf,
        stick_margin=float(margin),
        rotation2d=R,
        anchor_xy=p_prev[a].copy(),
        com_xy=com_moved,
        contact_xy={ids[j]: positions[j] for j in range(3)},
    )


def solve_stick_slip(prev_pose, next_shape, friction: FrictionModel, weight=1.0):
    """Quasi-static step: updated shape, same contact set, anchor-fixed motion.

    prev_pose: RestPose with 3 contacts; next_shape: FoldState at the next
    driven angle whose hull still supports the same contact facet.  Returns
    (StepSolution, new body->world transform (R, t)).
    """
    from .contact import seat_like

    ids = sorted(cp.vertex_id for cp in prev_pose.contacts)
    R_seat, t_seat, psi = seat_like(next_shape, prev_pose, ids)
    q = np.array([(R_seat @ next_shape.vertices3d[i - 1] + t_seat)[:2] for i in ids])
    p = np.array([next(cp.world_xy for cp in prev_pose.contacts if cp.vertex_id == i) for i in ids])
    com_new = (R_seat @ next_shape.com + t_seat)[:2]

    N = normal_forces(q, com_new, weight, next_shape.pattern.b)
    Fs = np.array([static_friction(N[j], psi[j], friction) for j in range(3)])
    sol = solve_anchor_step(p, q, com_new, N, Fs, ids)
    sol.translation = sol.com_xy - prev_pose.com_proj

    # world transform: rotate the seated body by dphi about the fixed anchor
    from .geometry import rot_z

    Rz = rot_z(sol.dphi)
    R_new = Rz @ R_seat
    anchor_body = next_shape.vertices3d[sol.anchor_id - 1]
    t_new = np.array([sol.anchor_xy[0], sol.anchor_xy[1], 0.0]) - R_new @ anchor_body
    return sol, (R_new, t_new)

"""Single-degree-of-freedom rigid folding of the vertex as a function of the driven angle.

Internally the fold of crease i is the signed deviation gamma_i (radians) from
the flat state: gamma > 0 folds as a mountain (the driven pouch side of the
sheet rises toward body +z), gamma < 0 as a valley.  The dihedral angle is
rho_i = 180 deg - |gamma_i|, so rho = 180 is flat.  The driven valley crease
carries rho = beta.

Loop closure: walking the four panels counterclockwise and returning to the
start must compose to the identity,

    L(gamma) = A(d2, g2) A(d3, g3) A(d4, g4) A(d1, g1) = I,

where A(d, g) is the rotation about the flat crease direction d by -g.  The
three free deviations are solved by Newton iteration with continuation from
the flat state; the branch is selected at flat via the tangent directions of
the two fold branches (null space of the linearized closure plus the quadratic
term on it).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BranchJump, NoClosure
from .geometry import rotation_about_axis, skew_residual
from .pattern import CENTER_ID, CreasePattern

RESIDUAL_TOL = 1e-10
CLOSURE_TOL = 1e-8      # Frobenius norm of L - I accepted as closed
JUMP_LIMIT_DEG = 10.0   # max per-step change of any fold angle on a tracked branch
_MIN_SUBSTEP_DEG = 1e-4


@dataclass
class FoldState:
    """Fold angles plus the 3D body-frame geometry at one driven angle."""

    pattern: CreasePattern
    beta: float                 # driven dihedral, degrees
    gamma: np.ndarray           # signed fold deviations, radians, creases 1..4
    rho: np.ndarray             # dihedral angles, degrees
    mv_signs: np.ndarray        # +1 mountain, -1 valley
    vertices3d: np.ndarray      # (9, 3) body-frame mm, vertex-centered
    com: np.ndarray             # (3,) body-frame mm
    panel_rotations: np.ndarray  # (4, 3, 3) flat->folded rotation per panel

    def panel_polygon3d(self, k):
        ids = [vid - 1 for vid in self.pattern.panels[k]]
        return self.vertices3d[ids]

    def panel_normal(self, k):
        return self.panel_rotations[k] @ np.array([0.0, 0.0, 1.0])

    def to_dict(self):
        return {
            "beta_deg": float(self.beta),
            "rho_deg": [float(r) for r in self.rho],
            "vertices_mm": self.vertices3d.tolist(),
            "com_mm": self.com.tolist(),
        }


class BranchHint:
    """Previous fold deviations, used to continue along one fold branch."""

    __slots__ = ("gamma", "beta")

    def __init__(self, gamma, beta):
        self.gamma = np.asarray(gamma, dtype=float)
        self.beta = float(beta)


def _crease_axes(pattern):
    d = pattern.crease_dirs
    return np.column_stack([d, np.zeros(4)])  # (4, 3)


def _loop_matrices(axes3, gamma):
    """Rotations A_i = Rot(d_i, -gamma_i) for the loop product."""
    return [rotation_about_axis(axes3[i], -gamma[i]) for i in range(4)]


def closure_matrix(pattern, gamma):
    """The loop product L(gamma); identity iff the fold closes."""
    axes3 = _crease_axes(pattern)
    A = _loop_matrices(axes3, gamma)
    return A[1] @ A[2] @ A[3] @ A[0]


def closure_residual(pattern, gamma):
    """Frobenius norm of L(gamma) - I."""
    return np.linalg.norm(closure_matrix(pattern, gamma) - np.eye(3))


def _residual_and_jacobian(axes3, gamma, free):
    """Skew residual of the loop product and its Jacobian wrt the free deviations."""
    A = _loop_matrices(axes3, gamma)
    order = (1, 2, 3, 0)  # crease indices in product order
    L = A[1] @ A[2] @ A[3] @ A[0]
    r = skew_residual(L)
    cols = {}
    prefix = np.eye(3)
    for idx in order:
        d_rot = prefix @ axes3[idx]
        K = np.array(
            [
                [0.0, -d_rot[2], d_rot[1]],
                [d_rot[2], 0.0, -d_rot[0]],
                [-d_rot[1], d_rot[0], 0.0],
            ]
        )
        cols[idx] = skew_residual(-K @ L)
        prefix = prefix @ A[idx]
    J = np.column_stack([cols[i] for i in free])
    return r, J, L


def branch_tangents(pattern):
    """Tangent directions (unit 4-vectors of gamma) of the two fold branches at flat.

    First order, closure requires sum gamma_i d_i = 0; the quadratic term of the
    loop rotation restricted to that null space selects the true branches.
    """
    axes3 = _crease_axes(pattern)
    M = pattern.crease_dirs.T  # (2, 4)
    _, s, Vt = np.linalg.svd(M)
    null = Vt[2:].T  # (4, 2) basis of the null space
    eps = 1e-3

    def qz(c):
        g = eps * (null @ c)
        L = closure_matrix(pattern, g)
        return skew_residual(L)[2] / eps**2

    qa = qz(np.array([1.0, 0.0]))
    qc = qz(np.array([0.0, 1.0]))
    qb = 0.5 * (qz(np.array([1.0, 1.0])) - qa - qc)
    disc = qb * qb - qa * qc
    scale = max(abs(qa), abs(qb), abs(qc), 1e-30)
    if disc < -1e-9 * scale * scale:
        raise NoClosure("no real fold branch at the flat state")
    disc = max(disc, 0.0)
    roots = []
    if abs(qa) > 1e-12 * scale:
        for sgn in (+1.0, -1.0):
            c1 = (-qb + sgn * np.sqrt(disc)) / qa
            roots.append(np.array([c1, 1.0]))
    else:
        roots.append(np.array([1.0, 0.0]))
        if abs(qb) > 1e-12 * scale:
            roots.append(np.array([-qc / (2 * qb), 1.0]))
        else:
            roots.append(np.array([0.0, 1.0]))
    tangents = []
    for c in roots:
        t = null @ c
        n = np.linalg.norm(t)
        if n > 1e-12:
            tangents.append(t / n)
    return tangents


def select_branch_tangent(pattern, valley_index):
    """Branch tangent putting the driven crease in a valley and the rest mountain-like.

    Returns the tangent oriented with gamma[valley] < 0.  Among drivable
    branches the one whose remaining creases are most mountain-like wins, which
    reproduces the three-mountain / one-valley assignment whenever it exists.
    """
    v = valley_index - 1
    best = None
    best_score = -np.inf
    for t in branch_tangents(pattern):
        if abs(t[v]) < 1e-9:
            continue
        t = -t if t[v] > 0 else t
        others = np.delete(t, v)
        score = others.min() / np.abs(t).max()
        if score > best_score:
            best_score = score
            best = t
    if best is None:
        raise NoClosure(
            f"crease {valley_index} cannot be driven as the valley of any fold branch"
        )
    return best


def feasible_valley_indices(pattern):
    """Creases that fold as the strict minority (valley) of some branch."""
    out = []
    for t in branch_tangents(pattern):
        for tt in (t, -t):
            j = int(np.argmin(tt))
            others = np.delete(tt, j)
            if tt[j] < -1e-9 and others.min() > 1e-9 * np.abs(tt).max():
                out.append(j + 1)
    return sorted(set(out))


def _newton(axes3, gamma0, free, max_iter=40):
    gamma = gamma0.copy()
    for _ in range(max_iter):
        r, J, L = _residual_and_jacobian(axes3, gamma, free)
        rn = np.abs(r).max()
        if rn < RESIDUAL_TOL and np.linalg.norm(L - np.eye(3)) < CLOSURE_TOL:
            return gamma, True
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return gamma, False
        mx = np.abs(step).max()
        if mx > 0.3:
            step *= 0.3 / mx
        gamma[list(free)] += step
    r, _, L = _residual_and_jacobian(axes3, gamma, free)
    ok = np.abs(r).max() < RESIDUAL_TOL and np.linalg.norm(L - np.eye(3)) < CLOSURE_TOL
    return gamma, ok


class FoldContinuation:
    """Tracks one fold branch of a pattern as the driven angle moves.

    Calls must be sequential in beta for reliable continuation; the tracker
    substeps internally when the requested move is too aggressive.
    """

    def __init__(self, pattern, valley_index=None):
        self.pattern = pattern
        self.valley_index = valley_index or pattern.design.valley_index
        self._axes3 = _crease_axes(pattern)
        self._free = tuple(i for i in range(4) if i != self.valley_index - 1)
        self._tangent = None
        self.beta = 180.0
        self.gamma = np.zeros(4)

    def tangent(self):
        if self._tangent is None:
            self._tangent = select_branch_tangent(self.pattern, self.valley_index)
        return self._tangent

    def reset(self, hint: BranchHint | None = None):
        if hint is None:
            self.beta = 180.0
            self.gamma = np.zeros(4)
        else:
            self.beta = hint.beta
            self.gamma = hint.gamma.copy()

    def hint(self):
        return BranchHint(self.gamma, self.beta)

    def solve(self, beta):
        """Fold deviations at the requested driven angle, continuing from the last solve."""
        if not 0.0 < beta <= 180.0:
            raise ValueError(f"beta must be in (0, 180], got {beta}")
        if beta == 180.0:
            self.beta, self.gamma = 180.0, np.zeros(4)
            return self.gamma.copy()
        self._advance(beta, depth=0)
        return self.gamma.copy()

    def _seed(self, beta):
        v = self.valley_index - 1
        dv = np.deg2rad(180.0 - beta)
        if np.abs(self.gamma).max() < 1e-12:
            t = self.tangent()
            seed = t * (dv / -t[v])
        else:
            seed = self.gamma.copy()
            # first-order rescale keeps the seed on the branch for small moves
            prev_dv = -self.gamma[v]
            if prev_dv > 1e-12:
                seed *= dv / prev_dv
        seed[v] = -dv
        return seed

    def _advance(self, beta, depth):
        step = beta - self.beta
        if abs(step) < 1e-15:
            return
        seed = self._seed(beta)
        gamma, ok = _newton(self._axes3, seed, self._free)
        jump = np.rad2deg(np.abs(gamma - self.gamma).max()) if ok else np.inf
        if ok and jump <= JUMP_LIMIT_DEG:
            self.beta, self.gamma = beta, gamma
            return
        if abs(step) <= _MIN_SUBSTEP_DEG:
            if ok:
                raise BranchJump(
                    f"fold angles jump {jump:.2f} deg across beta={beta:.4f}"
                )
            raise NoClosure(
                f"no closure on the tracked branch at beta={beta:.4f} "
                f"(fold limit near beta={self.beta:.4f})"
            )
        mid = 0.5 * (self.beta + beta)
        self._advance(mid, depth + 1)
        self._advance(beta, depth + 1)


def solve_fold_angles(pattern, beta, hint: BranchHint | None = None):
    """Dihedral angles rho[4] (degrees) satisfying loop closure at the driven angle.

    With a hint the returned branch is the one continuously connected to it;
    without, continuation starts from the flat state.  Raises NoClosure at a
    fold limit and BranchJump when continuation cannot stay on one branch.
    """
    cont = FoldContinuation(pattern)
    if hint is not None:
        cont.reset(hint)
    gamma = cont.solve(beta)
    return gamma_to_rho(gamma), cont.hint()


def gamma_to_rho(gamma):
    return 180.0 - np.abs(np.rad2deg(gamma))


def fold_geometry(pattern, gamma, beta=None) -> FoldState:
    """Forward kinematics: place rigid panels for the given fold deviations.

    Panel 1 is fixed and defines the body frame; the central vertex sits at the
    origin.  Coordinates are therefore vertex-centered versions of the flat
    sheet frame.
    """
    axes3 = _crease_axes(pattern)
    center = pattern.vertex(CENTER_ID)
    R = [np.eye(3)]
    for k in range(1, 4):  # crossing creases 2, 3, 4
        R.append(R[-1] @ rotation_about_axis(axes3[k], -gamma[k]))
    R = np.array(R)

    flat3 = np.column_stack([pattern.flat_vertices - center, np.zeros(9)])
    verts = np.zeros((9, 3))
    owner = {}
    for k in range(4):
        for vid in pattern.panels[k]:
            if vid not in owner:
                owner[vid] = k
    for vid, k in owner.items():
        verts[vid - 1] = R[k] @ flat3[vid - 1]

    areas = []
    weighted = np.zeros(3)
    for k in range(4):
        a, c = pattern.panel_area_centroid(k)
        c3 = np.array([c[0] - center[0], c[1] - center[1], 0.0])
        areas.append(a)
        weighted += a * (R[k] @ c3)
    com = weighted / sum(areas)

    rho = gamma_to_rho(gamma)
    signs = np.where(gamma >= 0, 1, -1)
    if beta is None:
        beta = rho[pattern.design.valley_index - 1]
    return FoldState(
        pattern=pattern,
        beta=float(beta),
        gamma=np.asarray(gamma, dtype=float).copy(),
        rho=rho,
        mv_signs=signs,
        vertices3d=verts,
        com=com,
        panel_rotations=R,
    )


def detect_self_intersection(state: FoldState) -> bool:
    """Whether any two panels of the folded state interpenetrate.

    Every panel contains the central vertex, so two panel planes meet in a line
    through it; panels overlap exactly when their spherical sector arcs (traced
    by the folded crease directions) cross.  Adjacent panels interpenetrate
    when their shared dihedral passes through zero.
    """
    if np.any(state.rho <= 1e-9):
        return True
    axes3 = _crease_axes(state.pattern)
    u = np.zeros((4, 3))
    for k in range(4):  # crease k+1 belongs to panel k (and panel k-1)
        u[k] = state.panel_rotations[k] @ axes3[k]
    from .geometry import great_arc_intersect

    # panel k spans the arc u[k] -> u[(k+1) % 4]
    for a, c in ((0, 2), (1, 3)):
        if great_arc_intersect(u[a], u[(a + 1) % 4], u[c], u[(c + 1) % 4]):
            return True
    return False

"""Placing a folded state on the substrate: contact sets, stability, tip-over.

A resting pose lays one facet of the convex hull of the nine pattern vertices
on the plane z = 0.  The pose is stable when the center of mass projects inside
that facet with margin.  Contact sets are lumped to exactly three vertices (an
edge in contact contributes its two endpoints), which makes the normal-force
balance statically determinate.

Facets containing the central vertex are never used for resting: the actuator
pouch spans the driven crease right at the vertex, so that region cannot touch
the substrate.  Two selection policies are provided.  "settle" picks the
stable facet with the lowest center of mass (the energy well a dynamically
slipping sheet falls into, used after each fast inflation step); "follow"
keeps the facet of a previous pose until it vanishes from the hull or loses
stability, then rolls or tips to a neighbor (quasi-static deflation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import NoStablePose
from .geometry import rot_z, rotation_about_axis, signed_distance_to_polygon
from .kinematics import FoldState
from .pattern import CENTER_ID, CORNER_IDS

MARGIN_TOL_FACTOR = 1e-3   # stability margin threshold, units of sheet width b
FLAT_Z_TOL = 1e-9


@dataclass
class ContactPoint:
    vertex_id: int              # 1..9 pattern label
    world_xy: np.ndarray
    adjacent_panels: tuple
    psi: float                  # contact face angle, degrees


@dataclass
class RestPose:
    rotation: np.ndarray        # (3, 3) body -> world
    translation: np.ndarray     # (3,)
    contacts: list              # 3 ContactPoint (or 4 corners for the flat sheet)
    support_polygon: np.ndarray  # (n, 2) convex polygon of contact points, CCW
    com_proj: np.ndarray        # (2,) COM projected on the substrate
    facet_ids: frozenset        # all hull-facet vertex ids on the ground
    facet_polygon: np.ndarray   # (m, 2) world xy of the full facet, CCW
    margin: float               # signed stability margin of the facet, mm
    flat: bool = False

    @property
    def contact_ids(self):
        return frozenset(cp.vertex_id for cp in self.contacts)

    @property
    def down_body(self):
        """World down direction expressed in the body frame."""
        return self.rotation.T @ np.array([0.0, 0.0, -1.0])

    def world_points(self, body_points):
        return body_points @ self.rotation.T + self.translation


@dataclass
class TipEvent:
    old_ids: frozenset
    new_ids: frozenset
    pose: RestPose


@dataclass
class _Facet:
    normal: np.ndarray          # outward unit normal, body frame
    offset: float               # plane: normal . x + offset = 0
    ids: tuple                  # pattern vertex ids on the facet
    polygon_ids: tuple          # ids ordered around the facet boundary


def hull_facets(state: FoldState):
    """Merged coplanar facets of the convex hull of the folded vertices."""
    pts = state.vertices3d
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise NoStablePose(f"degenerate convex hull: {exc}") from exc

    n_simp = len(hull.simplices)
    parent = list(range(n_simp))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    scale = max(np.abs(pts).max(), 1.0)
    for i in range(n_simp):
        for j in hull.neighbors[i]:
            if j < 0:
                continue
            if (
                np.abs(hull.equations[i, :3] - hull.equations[j, :3]).max() < 1e-9
                and abs(hull.equations[i, 3] - hull.equations[j, 3]) < 1e-7 * scale
            ):
                parent[find(i)] = find(j)

    groups = {}
    for i in range(n_simp):
        groups.setdefault(find(i), []).append(i)

    facets = []
    for members in groups.values():
        vset = sorted({int(v) for m in members for v in hull.simplices[m]})
        normal = hull.equations[members[0], :3].copy()
        normal /= np.linalg.norm(normal)
        offset = float(hull.equations[members[0], 3])
        # order the facet vertices around its centroid in the facet plane
        sub = pts[vset]
        centroid = sub.mean(axis=0)
        u = sub[0] - centroid
        u = u - normal * np.dot(u, normal)
        u /= np.linalg.norm(u)
        w = np.cross(normal, u)
        ang = np.arctan2((sub - centroid) @ w, (sub - centroid) @ u)
        order = np.argsort(ang)
        poly_ids = tuple(vset[i] + 1 for i in order)
        facets.append(
            _Facet(
                normal=normal,
                offset=offset,
                ids=tuple(v + 1 for v in vset),
                polygon_ids=poly_ids,
            )
        )
    return facets


def _seat_rotation(normal):
    """Minimal rotation taking the outward facet normal to world -z."""
    target = np.array([0.0, 0.0, -1.0])
    c = float(np.dot(normal, target))
    if c > 1.0 - 1e-14:
        return np.eye(3)
    if c < -1.0 + 1e-14:
        return rotation_about_axis(np.array([1.0, 0.0, 0.0]), np.pi)
    axis = np.cross(normal, target)
    axis /= np.linalg.norm(axis)
    return rotation_about_axis(axis, np.arccos(np.clip(c, -1.0, 1.0)))


def _best_z_align(R_target, R_base):
    """Angle d such that Rz(d) @ R_base is Frobenius-closest to R_target."""
    G = R_base @ R_target.T
    return np.arctan2(G[0, 1] - G[1, 0], G[0, 0] + G[1, 1])


def _facet_stability(state, facet):
    """Seated facet polygon (world xy, CCW), seated COM xy and stability margin."""
    R0 = _seat_rotation(facet.normal)
    ids = [vid - 1 for vid in facet.polygon_ids]
    poly = (state.vertices3d[ids] @ R0.T)[:, :2]
    area2 = 0.0
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        area2 += a[0] * b[1] - b[0] * a[1]
    if area2 < 0:
        poly = poly[::-1]
    com_xy = (R0 @ state.com)[:2]
    margin = signed_distance_to_polygon(com_xy, poly)
    return R0, poly, com_xy, margin


def _panel_substrate_angle(state, R, k):
    """Angle between panel k and the substrate for a body->world rotation R, degrees."""
    m = R @ state.panel_normal(k)
    return float(np.degrees(np.arccos(np.clip(abs(m[2]), 0.0, 1.0))))


def contact_psi(state, R, contact_ids):
    """Contact face angles psi (degrees) for each contact id, in the given order.

    A pair of contacts adjacent along the sheet boundary is an edge in
    contact; both endpoints take the angle of the panel containing that edge.
    Isolated vertex contacts take the smallest angle among their panels.
    """
    pattern = state.pattern
    ring = pattern.boundary_cycle
    edges = set()
    for i, j in combinations(sorted(contact_ids), 2):
        if i in ring and j in ring:
            pi, pj = ring.index(i), ring.index(j)
            if abs(pi - pj) in (1, len(ring) - 1):
                edges.add(frozenset((i, j)))
    psis = []
    for vid in contact_ids:
        panels = pattern.panels_of_vertex(vid)
        edge_for = next((e for e in edges if vid in e), None)
        if edge_for is not None:
            panel = pattern.panel_of_boundary_edge[edge_for]
            psis.append(_panel_substrate_angle(state, R, panel))
        else:
            psis.append(min(_panel_substrate_angle(state, R, k) for k in panels))
    return psis


def seat_like(state: FoldState, prev: RestPose, contact_ids):
    """Seat a new shape on the plane through the given contacts, heading-aligned.

    Returns (R, t, psi) where R, t place the contact plane on z = 0 with the
    heading of `prev` (the in-plane offset is arbitrary; anchor constraints fix
    it downstream) and psi are the contact face angles in contact_ids order.
    """
    pts = np.array([state.vertices3d[i - 1] for i in contact_ids])
    n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    ln = np.linalg.norm(n)
    if ln < 1e-12:
        raise NoStablePose("contact points are collinear")
    n = n / ln
    if np.dot(n, state.com - pts[0]) > 0:
        n = -n
    R0 = _seat_rotation(n)
    R = rot_z(_best_z_align(prev.rotation, R0)) @ R0
    tz = -(R @ pts[0])[2]
    t = np.array([0.0, 0.0, tz])
    psi = contact_psi(state, R, contact_ids)
    return R, t, psi


def _contact_points(state, facet, contact_ids, R, t):
    pattern = state.pattern
    ordered = sorted(contact_ids)
    psis = contact_psi(state, R, ordered)
    contacts = []
    for vid, psi in zip(ordered, psis):
        panels = tuple(pattern.panels_of_vertex(vid))
        world = R @ state.vertices3d[vid - 1] + t
        contacts.append(
            ContactPoint(vertex_id=vid, world_xy=world[:2].copy(), adjacent_panels=panels, psi=psi)
        )
    return contacts


def _triple_margin(pts, com_xy, triple):
    tri = np.array([pts[v] for v in triple])
    area2 = (tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1]) - (
        tri[2][0] - tri[0][0]
    ) * (tri[1][1] - tri[0][1])
    if area2 < 0:
        tri = tri[::-1]
    return signed_distance_to_polygon(com_xy, tri)


def _reduce_to_three(poly_ids, state, R0, com_xy, preferred=None):
    """Pick the three facet vertices whose triangle contains the COM with best margin.

    A still-valid preferred triple (from the previous step) is kept to avoid
    contact flicker on facets with more than three vertices.
    """
    if len(poly_ids) == 3:
        return tuple(sorted(poly_ids))
    pts = {vid: (R0 @ state.vertices3d[vid - 1])[:2] for vid in poly_ids}
    if preferred is not None and set(preferred) <= set(poly_ids):
        if _triple_margin(pts, com_xy, tuple(sorted(preferred))) > 0:
            return tuple(sorted(preferred))
    best, best_margin = None, -np.inf
    for triple in combinations(sorted(poly_ids), 3):
        m = _triple_margin(pts, com_xy, triple)
        if m > best_margin + 1e-12:
            best_margin = m
            best = triple
    return best


def _build_pose(state, facet, R0, poly, com_xy, margin, heading_R=None, com_target=None,
                preferred_contacts=None):
    R = R0
    if heading_R is not None:
        R = rot_z(_best_z_align(heading_R, R0)) @ R0
    anchor_vid = facet.ids[0]
    tz = -(R @ state.vertices3d[anchor_vid - 1])[2]
    t = np.array([0.0, 0.0, tz])
    com_world = R @ state.com + t
    if com_target is None:
        t[:2] -= com_world[:2]
    else:
        t[:2] += np.asarray(com_target) - com_world[:2]
    com_world = R @ state.com + t

    contact_ids = _reduce_to_three(facet.polygon_ids, state, R0, com_xy,
                                   preferred=preferred_contacts)
    contacts = _contact_points(state, facet, contact_ids, R, t)
    support = np.array([cp.world_xy for cp in contacts])
    # CCW support polygon
    area2 = 0.0
    for k in range(len(support)):
        a, b = support[k], support[(k + 1) % len(support)]
        area2 += a[0] * b[1] - b[0] * a[1]
    if area2 < 0:
        support = support[::-1]
    facet_world = state.vertices3d[[vid - 1 for vid in facet.polygon_ids]] @ R.T + t
    poly_world = facet_world[:, :2]
    a2 = 0.0
    for k in range(len(poly_world)):
        a, b = poly_world[k], poly_world[(k + 1) % len(poly_world)]
        a2 += a[0] * b[1] - b[0] * a[1]
    if a2 < 0:
        poly_world = poly_world[::-1]
    return RestPose(
        rotation=R,
        translation=t,
        contacts=contacts,
        support_polygon=support,
        com_proj=com_world[:2].copy(),
        facet_ids=frozenset(facet.ids),
        facet_polygon=poly_world,
        margin=margin,
    )


def _is_restable(facet):
    """Central-vertex facets host the pouch and cannot rest on the substrate."""
    return CENTER_ID not in facet.ids


def _ring_area(pts):
    a2 = 0.0
    n = len(pts)
    for k in range(n):
        p, q = pts[k], pts[(k + 1) % n]
        a2 += p[0] * q[1] - q[0] * p[1]
    return 0.5 * a2


def _flat_pose(state):
    pattern = state.pattern
    R = np.eye(3)
    com_body = state.com
    t = np.array([-com_body[0], -com_body[1], 0.0])
    contacts = [
        ContactPoint(
            vertex_id=vid,
            world_xy=(state.vertices3d[vid - 1] + t)[:2].copy(),
            adjacent_panels=tuple(pattern.panels_of_vertex(vid)),
            psi=0.0,
        )
        for vid in CORNER_IDS
    ]
    support = np.array([cp.world_xy for cp in contacts])
    return RestPose(
        rotation=R,
        translation=t,
        contacts=contacts,
        support_polygon=support,
        com_proj=np.zeros(2),
        facet_ids=frozenset(range(1, 10)),
        facet_polygon=support.copy(),
        margin=float(min(pattern.b, pattern.h) / 2),
        flat=True,
    )


FLAT_ESCAPE_TILT_DEG = 45.0   # max facet tilt accepted when first leaving the flat state


def stable_restable_facets(state: FoldState):
    """Stable candidate facets: restable, facing the substrate, COM supported.

    Returns {sorted vertex-id tuple: (com height, facet, stability info)}.
    """
    margin_tol = MARGIN_TOL_FACTOR * state.pattern.b
    out = {}
    for f in hull_facets(state):
        if not _is_restable(f) or f.normal[2] >= -1e-9:
            continue
        R0, poly, com_xy, margin = _facet_stability(state, f)
        if margin > margin_tol:
            height = -(np.dot(f.normal, state.com) + f.offset)
            out[tuple(sorted(f.ids))] = (height, f, (R0, poly, com_xy, margin))
    return out


def _pose_from_candidate(state, cand, heading_R, com_target, preferred_contacts=None):
    _, facet, (R0, poly, com_xy, margin) = cand
    return _build_pose(
        state, facet, R0, poly, com_xy, margin,
        heading_R=heading_R, com_target=com_target,
        preferred_contacts=preferred_contacts,
    )


def settle_pose(state: FoldState, hint: RestPose | None = None, flatish_only=False) -> RestPose:
    """Lowest-center-of-mass stable pose (the well a dynamically slipping sheet finds).

    With flatish_only, only facets tilted less than FLAT_ESCAPE_TILT_DEG from
    horizontal are considered; this models leaving the flat state, where
    strongly tilted marginal facets are unreachable.
    """
    cands = stable_restable_facets(state)
    if flatish_only:
        nz_max = -np.cos(np.deg2rad(FLAT_ESCAPE_TILT_DEG))
        cands = {k: v for k, v in cands.items() if v[1].normal[2] < nz_max}
    if not cands:
        raise NoStablePose("cannot stand: no stable underside facet")
    best = min(cands.values(), key=lambda c: c[0])
    heading_R = hint.rotation if hint is not None else None
    com_target = hint.com_proj if hint is not None else None
    return _pose_from_candidate(state, best, heading_R, com_target)


def track_pose(state: FoldState, prev: RestPose | None):
    """Advance the resting pose to a new folded shape with contact continuity.

    Returns (pose, event) where event is None (same contact facet), "seat"
    (first pose off the flat state), "change" (previous facet vanished or lost
    stability, re-settled in the lowest well), or "stall" (no stable facet;
    the previous pose is kept frozen).  The in-plane center of mass and
    heading of `prev` are always preserved.
    """
    if np.abs(state.vertices3d[:, 2]).max() < FLAT_Z_TOL:
        return find_resting_pose(state, hint=prev), ("stall" if prev is not None else None)
    if prev is None or prev.flat:
        try:
            return settle_pose(state, hint=prev, flatish_only=True), "seat"
        except NoStablePose:
            return prev, "stall" if prev is not None else None
    cands = stable_restable_facets(state)
    key = tuple(sorted(prev.facet_ids))
    if key in cands:
        pose = _pose_from_candidate(
            state, cands[key], prev.rotation, prev.com_proj,
            preferred_contacts=prev.contact_ids,
        )
        return pose, None
    if not cands:
        return prev, "stall"
    best = min(cands.values(), key=lambda c: c[0])
    pose = _pose_from_candidate(state, best, prev.rotation, prev.com_proj)
    return pose, "change"


def pose_with_transform(state: FoldState, R, t, facet_ids, preferred_contacts=None) -> RestPose:
    """RestPose for an explicitly placed body (e.g. after a stick-slip step).

    R, t must already seat the facet with the given vertex ids on z = 0.
    """
    key = tuple(sorted(facet_ids))
    facet = None
    for f in hull_facets(state):
        if tuple(sorted(f.ids)) == key:
            facet = f
            break
    if facet is None:
        raise NoStablePose(f"facet {key} is no longer on the hull")
    R0, poly, com_xy, margin = _facet_stability(state, facet)
    contact_ids = _reduce_to_three(facet.polygon_ids, state, R0, com_xy,
                                   preferred=preferred_contacts)
    contacts = _contact_points(state, facet, contact_ids, R, t)
    support = np.array([cp.world_xy for cp in contacts])
    if _ring_area(support) < 0:
        support = support[::-1]
    com_world = R @ state.com + t
    facet_world = state.vertices3d[[vid - 1 for vid in facet.polygon_ids]] @ R.T + t
    poly_world = facet_world[:, :2]
    if _ring_area(poly_world) < 0:
        poly_world = poly_world[::-1]
    return RestPose(
        rotation=R,
        translation=np.asarray(t, dtype=float).copy(),
        contacts=contacts,
        support_polygon=support,
        com_proj=com_world[:2].copy(),
        facet_ids=frozenset(facet.ids),
        facet_polygon=poly_world,
        margin=margin,
    )


def find_resting_pose(state: FoldState, hint: RestPose | None = None) -> RestPose:
    """Stable placement of the folded state on the substrate.

    Without a hint, the sheet settles in the lowest stable well (see
    settle_pose) centered at the origin with zero heading.  With a hint, the
    facet of the hint is kept while it remains on the hull and stable,
    otherwise the pose re-settles; the hint's in-plane center of mass and
    heading are preserved either way.  Raises NoStablePose when no stable
    facet exists.
    """
    if np.abs(state.vertices3d[:, 2]).max() < FLAT_Z_TOL:
        pose = _flat_pose(state)
        if hint is not None:
            pose.translation[:2] += hint.com_proj - pose.com_proj
            for cp in pose.contacts:
                cp.world_xy = cp.world_xy + hint.com_proj
            pose.support_polygon = pose.support_polygon + hint.com_proj
            pose.facet_polygon = pose.facet_polygon + hint.com_proj
            pose.com_proj = hint.com_proj.copy()
        return pose
    if hint is None:
        return settle_pose(state)
    pose, event = track_pose(state, hint)
    if event == "stall" or pose is None:
        raise NoStablePose("cannot stand: no stable underside facet")
    return pose


def detect_tip_over(prev: RestPose, state: FoldState) -> TipEvent | None:
    """Tip event if the support of `prev` no longer holds for the shape `state`."""
    pose, event = track_pose(state, prev)
    if event is None:
        return None
    if event == "stall":
        raise NoStablePose("cannot stand: no stable underside facet")
    return TipEvent(old_ids=prev.facet_ids, new_ids=pose.facet_ids, pose=pose)


def contact_change(prev: RestPose, nxt: RestPose) -> bool:
    return prev.contact_ids != nxt.contact_ids

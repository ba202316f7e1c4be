"""Flat crease pattern of a degree-four vertex embedded in a rectangular sheet.

Sheet frame: origin at the lower-left corner, +x along the width b, +y along
the height h.  Crease k leaves the central vertex at direction
theta_v + theta_1 + ... + theta_{k-1}, measured counterclockwise from +x.

Vertex labels (fixed convention, used everywhere downstream):
  v1..v4  rectangle corners counterclockwise from the lower-left,
  v5..v8  boundary endpoints of creases 1..4,
  v9      the central vertex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateCrease
from .geometry import polygon_area_centroid

CORNER_IDS = (1, 2, 3, 4)
CREASE_END_IDS = (5, 6, 7, 8)
CENTER_ID = 9


@dataclass
class VertexDesign:
    """Eight-parameter geometric definition of one crawler."""

    b: float                      # sheet width, mm
    h: float                      # sheet height, mm
    theta1: float                 # sector angles, degrees (theta4 derived)
    theta2: float
    theta3: float
    theta_v: float                # crease-orientation angle, degrees
    xv: float                     # central vertex, sheet frame, mm
    yv: float
    valley_index: int = 4         # which crease carries the actuated valley fold
    weight: float = 1.0           # total sheet weight; forces scale linearly with it

    @property
    def theta4(self):
        return 360.0 - self.theta1 - self.theta2 - self.theta3

    @property
    def thetas(self):
        return (self.theta1, self.theta2, self.theta3, self.theta4)

    def to_dict(self):
        return {
            "b_mm": self.b,
            "h_mm": self.h,
            "theta_deg": [self.theta1, self.theta2, self.theta3],
            "theta_v_deg": self.theta_v,
            "xv_mm": self.xv,
            "yv_mm": self.yv,
            "valley_index": self.valley_index,
            "weight": self.weight,
        }

    @classmethod
    def from_dict(cls, d):
        t1, t2, t3 = d["theta_deg"]
        return cls(
            b=float(d["b_mm"]),
            h=float(d["h_mm"]),
            theta1=float(t1),
            theta2=float(t2),
            theta3=float(t3),
            theta_v=float(d["theta_v_deg"]),
            xv=float(d["xv_mm"]),
            yv=float(d["yv_mm"]),
            valley_index=int(d.get("valley_index", 4)),
            weight=float(d.get("weight", 1.0)),
        )


def load_design(path):
    with open(path) as f:
        return VertexDesign.from_dict(json.load(f))


def save_design(design: VertexDesign, path):
    Path(path).write_text(json.dumps(design.to_dict(), indent=2) + "\n")


@dataclass
class FeasibilityFlags:
    developable: bool
    rigidly_foldable: bool
    vertex_interior: bool
    theta4: float

    @property
    def all_ok(self):
        return self.developable and self.rigidly_foldable and self.vertex_interior


def validate_design(d: VertexDesign) -> FeasibilityFlags:
    """Check developability, rigid foldability and vertex placement. Never raises."""
    thetas = d.thetas
    developable = all(t > 0.0 for t in thetas)  # theta4 is derived, so the sum is 360 by construction
    total = sum(thetas)
    rigidly_foldable = developable and all(t < total - t for t in thetas)
    vertex_interior = (
        d.b > 0.0 and d.h > 0.0 and 0.0 < d.xv < d.b and 0.0 < d.yv < d.h
    )
    return FeasibilityFlags(developable, rigidly_foldable, vertex_interior, thetas[3])


@dataclass
class CreasePattern:
    """Explicit flat geometry: 9 labeled vertices, 4 creases, 4 panels."""

    design: VertexDesign
    flat_vertices: np.ndarray            # (9, 2), rows are v1..v9
    crease_dirs: np.ndarray              # (4, 2) unit directions of creases 1..4
    crease_assignment: tuple             # "mountain" / "valley" per crease
    panels: list = field(default_factory=list)   # vertex-id tuples, CCW, each starts at CENTER_ID
    boundary_cycle: list = field(default_factory=list)  # boundary vertex ids, CCW from v1
    panel_of_boundary_edge: dict = field(default_factory=dict)  # (id_a, id_b) -> panel index

    @property
    def sector_angles(self):
        return self.design.thetas

    @property
    def b(self):
        return self.design.b

    @property
    def h(self):
        return self.design.h

    def vertex(self, vid):
        return self.flat_vertices[vid - 1]

    def panel_polygon(self, k):
        """Flat 2D polygon of panel k (0-based), CCW."""
        return self.flat_vertices[[vid - 1 for vid in self.panels[k]]]

    def panel_area_centroid(self, k):
        return polygon_area_centroid(self.panel_polygon(k))

    def panels_of_vertex(self, vid):
        return [k for k, poly in enumerate(self.panels) if vid in poly]


def _ray_rect_hit(origin, direction, b, h):
    """First intersection of the ray origin + t*direction (t>0) with the rectangle boundary."""
    ox, oy = origin
    dx, dy = direction
    best = np.inf
    for edge_t in (
        (b - ox) / dx if dx > 0 else np.inf,
        (0.0 - ox) / dx if dx < 0 else np.inf,
        (h - oy) / dy if dy > 0 else np.inf,
        (0.0 - oy) / dy if dy < 0 else np.inf,
    ):
        if 0 < edge_t < best:
            best = edge_t
    if not np.isfinite(best):
        raise DegenerateCrease("crease direction is parallel to all boundary edges")
    p = np.array([ox + best * dx, oy + best * dy])
    # clamp onto the boundary to kill last-bit noise
    p[0] = min(max(p[0], 0.0), b)
    p[1] = min(max(p[1], 0.0), h)
    return p


def build_pattern(d: VertexDesign) -> CreasePattern:
    """Construct the explicit crease pattern; raises DegenerateCrease near corners."""
    flags = validate_design(d)
    if not flags.all_ok:
        raise ValueError(f"design is not feasible: {flags}")
    if not 1 <= d.valley_index <= 4:
        raise ValueError(f"valley_index must be in 1..4, got {d.valley_index}")

    b, h = d.b, d.h
    corners = np.array([[0.0, 0.0], [b, 0.0], [b, h], [0.0, h]])
    center = np.array([d.xv, d.yv])

    cum = np.deg2rad(d.theta_v + np.concatenate(([0.0], np.cumsum(d.thetas[:3]))))
    dirs = np.column_stack([np.cos(cum), np.sin(cum)])
    ends = np.array([_ray_rect_hit(center, dirs[k], b, h) for k in range(4)])

    tol = 1e-6 * b
    for e in ends:
        for c in corners:
            if np.linalg.norm(e - c) < tol:
                raise DegenerateCrease(
                    f"crease endpoint {e} within {tol:g} mm of corner {c}"
                )

    verts = np.vstack([corners, ends, center[None, :]])

    # boundary cycle: corners and crease endpoints ordered by CCW perimeter position
    def perim(p):
        x, y = p
        if abs(y) < 1e-12 * max(b, h) and x < b:
            return x
        if abs(x - b) < 1e-12 * max(b, h):
            return b + y
        if abs(y - h) < 1e-12 * max(b, h):
            return b + h + (b - x)
        return 2 * b + h + (h - y)

    boundary_ids = list(CORNER_IDS) + list(CREASE_END_IDS)
    boundary_ids.sort(key=lambda vid: perim(verts[vid - 1]))
    # rotate so the cycle starts at v1 (perimeter position 0)
    i1 = boundary_ids.index(1)
    boundary_ids = boundary_ids[i1:] + boundary_ids[:i1]

    # panel k sweeps CCW from crease k+1's endpoint back... panels are bounded by
    # creases k and k+1, so walk the boundary from end(k) to end(k+1)
    n = len(boundary_ids)
    panels = []
    for k in range(4):
        a = boundary_ids.index(CREASE_END_IDS[k])
        z = boundary_ids.index(CREASE_END_IDS[(k + 1) % 4])
        ids = [CENTER_ID, CREASE_END_IDS[k]]
        i = (a + 1) % n
        while i != z:
            ids.append(boundary_ids[i])
            i = (i + 1) % n
        ids.append(CREASE_END_IDS[(k + 1) % 4])
        panels.append(tuple(ids))

    panel_of_edge = {}
    for k, poly in enumerate(panels):
        ring = [vid for vid in poly if vid != CENTER_ID]
        for i in range(len(ring) - 1):
            key = frozenset((ring[i], ring[i + 1]))
            panel_of_edge[key] = k

    assignment = tuple(
        "valley" if k + 1 == d.valley_index else "mountain" for k in range(4)
    )

    pattern = CreasePattern(
        design=d,
        flat_vertices=verts,
        crease_dirs=dirs,
        crease_assignment=assignment,
        panels=panels,
        boundary_cycle=boundary_ids,
        panel_of_boundary_edge=panel_of_edge,
    )

    areas = [pattern.panel_area_centroid(k)[0] for k in range(4)]
    if any(a <= 0 for a in areas):
        raise DegenerateCrease("panel with non-positive area")
    if abs(sum(areas) - b * h) > 1e-9 * b * h:
        raise DegenerateCrease(
            f"panel areas {sum(areas)} do not tile the sheet area {b * h}"
        )
    return pattern

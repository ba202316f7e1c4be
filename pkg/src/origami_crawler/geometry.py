"""Small 3D/2D geometry helpers shared by the pattern, kinematics and contact code."""

from __future__ import annotations

import numpy as np


def rotation_about_axis(axis, angle):
    """Rotation matrix about a unit axis (Rodrigues formula). `angle` in radians."""
    kx, ky, kz = axis
    c, s = np.cos(angle), np.sin(angle)
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew_residual(R):
    """The three independent skew components of R; zero iff R is symmetric (e.g. identity)."""
    return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])


def polygon_area_centroid(points_2d):
    """Signed area and centroid of a simple 2D polygon (shoelace)."""
    pts = np.asarray(points_2d, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross)
    if abs(area) < 1e-300:
        return 0.0, pts.mean(axis=0)
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return area, np.array([cx, cy])


def signed_distance_to_polygon(point, polygon):
    """Signed distance from a 2D point to a convex CCW polygon boundary (positive inside).

    For points inside, this is the distance to the nearest edge; for points
    outside, minus the distance to the boundary.
    """
    p = np.asarray(point, dtype=float)
    poly = np.asarray(polygon, dtype=float)
    n = len(poly)
    inside = True
    min_edge = np.inf
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        e = b - a
        # signed distance to the edge line, positive on the interior (left) side
        elen = np.hypot(e[0], e[1])
        if elen < 1e-15:
            continue
        d_line = (e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0])) / elen
        if d_line < 0:
            inside = False
        # distance to the edge segment
        t = np.clip(np.dot(p - a, e) / (elen * elen), 0.0, 1.0)
        d_seg = np.linalg.norm(p - (a + t * e))
        min_edge = min(min_edge, d_seg)
    return min_edge if inside else -min_edge


def convex_hull_2d(points):
    """Indices of the convex hull of 2D points in CCW order (monotone chain)."""
    pts = np.asarray(points, dtype=float)
    order = np.lexsort((pts[:, 1], pts[:, 0]))

    def half(indices):
        chain = []
        for i in indices:
            while len(chain) >= 2:
                o, a = pts[chain[-2]], pts[chain[-1]]
                if (a[0] - o[0]) * (pts[i][1] - o[1]) - (a[1] - o[1]) * (pts[i][0] - o[0]) <= 0:
                    chain.pop()
                else:
                    break
            chain.append(i)
        return chain

    lower = half(order)
    upper = half(order[::-1])
    return np.array(lower[:-1] + upper[:-1], dtype=int)


def great_arc_intersect(a0, a1, b0, b1, tol=1e-12):
    """Whether two minor great-circle arcs on the unit sphere cross at an interior point.

    Endpoint touching within `tol` does not count as a crossing.  Arcs are
    assumed shorter than pi (guaranteed here because sector angles are < 180 deg).
    """
    na = np.cross(a0, a1)
    nb = np.cross(b0, b1)
    la, lb = np.linalg.norm(na), np.linalg.norm(nb)
    if la < tol or lb < tol:
        return False
    d = np.cross(na, nb)
    ld = np.linalg.norm(d)
    if ld < tol:
        # coplanar arcs: overlap iff an interior point of one lies on the other
        for p, q0, q1 in ((a0, b0, b1), (a1, b0, b1), (b0, a0, a1), (b1, a0, a1)):
            if _interior_on_arc(p, q0, q1, tol):
                return True
        return False
    d = d / ld
    for cand in (d, -d):
        if _interior_on_arc(cand, a0, a1, tol) and _interior_on_arc(cand, b0, b1, tol):
            return True
    return False


def _interior_on_arc(p, q0, q1, tol):
    """Whether unit point p lies strictly inside the minor arc from q0 to q1."""
    n = np.cross(q0, q1)
    ln = np.linalg.norm(n)
    if ln < tol:
        return False
    if abs(np.dot(p, n) / ln) > 1e-9:
        return False
    # inside the wedge spanned by q0, q1 (minor arc), excluding endpoints
    c0 = np.dot(np.cross(q0, p), n)
    c1 = np.dot(np.cross(p, q1), n)
    eps = 1e-9 * ln * ln
    return c0 > eps and c1 > eps

"""Pure-numpy z-buffer triangle fill (fallback backend).

Arithmetic mirrors _rasterize.pyx expression for expression so both backends
produce identical buffers; the compiled kernel is just faster.
"""

import numpy as np


def _clip_near(a, b, c, near):
    """Clip one triangle against z >= near; returns list of triangles."""
    verts = (a, b, c)
    poly = []
    for i in range(3):
        p = verts[i]
        q = verts[(i + 1) % 3]
        if p[2] >= near:
            poly.append(p)
        if (p[2] >= near) != (q[2] >= near):
            t = (near - p[2]) / (q[2] - p[2])
            ip = p + t * (q - p)
            ip[2] = near
            poly.append(ip)
    if len(poly) < 3:
        return []
    return [(poly[0], poly[k], poly[k + 1]) for k in range(1, len(poly) - 1)]


def fill_triangles(tris, fx, fy, cx, cy, near, depth):
    """Rasterize camera-space triangles into a depth buffer.

    tris: (M, 3, 3) triangle vertices, camera frame (+z forward), meters.
    depth: (H, W) buffer, 0 = no hit, otherwise nearest z.  Modified in place.
    """
    H, W = depth.shape
    for m in range(tris.shape[0]):
        for v0, v1, v2 in _clip_near(tris[m, 0].copy(), tris[m, 1].copy(),
                                     tris[m, 2].copy(), near):
            px0 = fx * v0[0] / v0[2] + cx
            py0 = fy * v0[1] / v0[2] + cy
            px1 = fx * v1[0] / v1[2] + cx
            py1 = fy * v1[1] / v1[2] + cy
            px2 = fx * v2[0] / v2[2] + cx
            py2 = fy * v2[1] / v2[2] + cy
            w0, w1, w2 = 1.0 / v0[2], 1.0 / v1[2], 1.0 / v2[2]

            area = (px1 - px0) * (py2 - py0) - (px2 - px0) * (py1 - py0)
            if area == 0.0:
                continue

            xa = max(0, int(np.floor(min(px0, px1, px2) - 0.5)))
            xb = min(W - 1, int(np.floor(max(px0, px1, px2) + 0.5)))
            ya = max(0, int(np.floor(min(py0, py1, py2) - 0.5)))
            yb = min(H - 1, int(np.floor(max(py0, py1, py2) + 0.5)))
            if xa > xb or ya > yb:
                continue

            ux = np.arange(xa, xb + 1, dtype=np.float64) + 0.5
            vy = np.arange(ya, yb + 1, dtype=np.float64) + 0.5
            ux, vy = np.meshgrid(ux, vy)

            e0 = (px2 - px1) * (vy - py1) - (py2 - py1) * (ux - px1)
            e1 = (px0 - px2) * (vy - py2) - (py0 - py2) * (ux - px2)
            e2 = (px1 - px0) * (vy - py0) - (py1 - py0) * (ux - px0)
            inside = ((e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)) | (
                (e0 <= 0.0) & (e1 <= 0.0) & (e2 <= 0.0))
            if not inside.any():
                continue

            winv = (e0 / area) * w0 + (e1 / area) * w1 + (e2 / area) * w2
            valid = inside & (winv > 0.0)
            if not valid.any():
                continue
            with np.errstate(divide="ignore"):
                z = 1.0 / winv
            tile = depth[ya:yb + 1, xa:xb + 1]
            write = valid & ((tile == 0.0) | (z < tile))
            tile[write] = z[write]
    return depth

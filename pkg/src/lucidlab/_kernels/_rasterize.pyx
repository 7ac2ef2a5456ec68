# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled z-buffer triangle fill.

Same arithmetic as raster_numpy.fill_triangles; kept in lockstep so the two
backends produce identical depth buffers.
"""

import numpy as np

from libc.math cimport floor


def fill_triangles(double[:, :, ::1] tris, double fx, double fy,
                   double cx, double cy, double near, double[:, ::1] depth):
    """Rasterize camera-space triangles into a depth buffer.

    tris: (M, 3, 3) triangle vertices, camera frame (+z forward), meters.
    depth: (H, W) buffer, 0 = no hit, otherwise nearest z.  Modified in place.
    """
    cdef Py_ssize_t H = depth.shape[0]
    cdef Py_ssize_t W = depth.shape[1]
    cdef Py_ssize_t m, i, j, k, nclip
    cdef double[4][3] poly
    cdef double[3][3] tv
    cdef double px0, py0, px1, py1, px2, py2, w0, w1, w2
    cdef double area, e0, e1, e2, l0, l1, l2, winv, z
    cdef double umin, umax, vmin, vmax, ux, vy
    cdef double pz, qz, t
    cdef Py_ssize_t xa, xb, ya, yb, x, y

    for m in range(tris.shape[0]):
        # Sutherland-Hodgman clip against z >= near.
        nclip = 0
        for i in range(3):
            j = (i + 1) % 3
            pz = tris[m, i, 2]
            qz = tris[m, j, 2]
            if pz >= near:
                poly[nclip][0] = tris[m, i, 0]
                poly[nclip][1] = tris[m, i, 1]
                poly[nclip][2] = pz
                nclip += 1
            if (pz >= near) != (qz >= near):
                t = (near - pz) / (qz - pz)
                poly[nclip][0] = tris[m, i, 0] + t * (tris[m, j, 0] - tris[m, i, 0])
                poly[nclip][1] = tris[m, i, 1] + t * (tris[m, j, 1] - tris[m, i, 1])
                poly[nclip][2] = near
                nclip += 1
        if nclip < 3:
            continue
        # Fan-triangulate the clipped polygon (nclip is 3 or 4).
        for k in range(1, nclip - 1):
            tv[0][0] = poly[0][0]; tv[0][1] = poly[0][1]; tv[0][2] = poly[0][2]
            tv[1][0] = poly[k][0]; tv[1][1] = poly[k][1]; tv[1][2] = poly[k][2]
            tv[2][0] = poly[k + 1][0]; tv[2][1] = poly[k + 1][1]; tv[2][2] = poly[k + 1][2]

            px0 = fx * tv[0][0] / tv[0][2] + cx
            py0 = fy * tv[0][1] / tv[0][2] + cy
            px1 = fx * tv[1][0] / tv[1][2] + cx
            py1 = fy * tv[1][1] / tv[1][2] + cy
            px2 = fx * tv[2][0] / tv[2][2] + cx
            py2 = fy * tv[2][1] / tv[2][2] + cy
            w0 = 1.0 / tv[0][2]
            w1 = 1.0 / tv[1][2]
            w2 = 1.0 / tv[2][2]

            area = (px1 - px0) * (py2 - py0) - (px2 - px0) * (py1 - py0)
            if area == 0.0:
                continue

            umin = px0
            if px1 < umin: umin = px1
            if px2 < umin: umin = px2
            umax = px0
            if px1 > umax: umax = px1
            if px2 > umax: umax = px2
            vmin = py0
            if py1 < vmin: vmin = py1
            if py2 < vmin: vmin = py2
            vmax = py0
            if py1 > vmax: vmax = py1
            if py2 > vmax: vmax = py2

            xa = <Py_ssize_t>floor(umin - 0.5)
            xb = <Py_ssize_t>floor(umax + 0.5)
            ya = <Py_ssize_t>floor(vmin - 0.5)
            yb = <Py_ssize_t>floor(vmax + 0.5)
            if xa < 0: xa = 0
            if ya < 0: ya = 0
            if xb > W - 1: xb = W - 1
            if yb > H - 1: yb = H - 1

            for y in range(ya, yb + 1):
                vy = y + 0.5
                for x in range(xa, xb + 1):
                    ux = x + 0.5
                    e0 = (px2 - px1) * (vy - py1) - (py2 - py1) * (ux - px1)
                    e1 = (px0 - px2) * (vy - py2) - (py0 - py2) * (ux - px2)
                    e2 = (px1 - px0) * (vy - py0) - (py1 - py0) * (ux - px0)
                    if not ((e0 >= 0.0 and e1 >= 0.0 and e2 >= 0.0) or
                            (e0 <= 0.0 and e1 <= 0.0 and e2 <= 0.0)):
                        continue
                    l0 = e0 / area
                    l1 = e1 / area
                    l2 = e2 / area
                    winv = l0 * w0 + l1 * w1 + l2 * w2
                    if winv <= 0.0:
                        continue
                    z = 1.0 / winv
                    if depth[y, x] == 0.0 or z < depth[y, x]:
                        depth[y, x] = z
    return np.asarray(depth)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element kernels for P1 triangles.

Every routine mirrors a function of the same name in ``_pykernels`` and must
return bitwise-identical arrays for the same input.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def p1_geometry(const double[:, ::1] nodes, const cnp.int64_t[:, ::1] tris):
    """Signed areas ``(M,)`` and constant basis gradients ``(M, 3, 2)``."""
    cdef Py_ssize_t m = tris.shape[0]
    cdef Py_ssize_t e
    cdef double x0, y0, x1, y1, x2, y2, det
    area_arr = np.empty(m, dtype=np.float64)
    grad_arr = np.empty((m, 3, 2), dtype=np.float64)
    cdef double[::1] area = area_arr
    cdef double[:, :, ::1] grad = grad_arr
    with nogil:
        for e in range(m):
            x0 = nodes[tris[e, 0], 0]
            y0 = nodes[tris[e, 0], 1]
            x1 = nodes[tris[e, 1], 0]
            y1 = nodes[tris[e, 1], 1]
            x2 = nodes[tris[e, 2], 0]
            y2 = nodes[tris[e, 2], 1]
            det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            area[e] = 0.5 * det
            if det == 0.0:
                det = 1.0
            grad[e, 0, 0] = (y1 - y2) / det
            grad[e, 0, 1] = (x2 - x1) / det
            grad[e, 1, 0] = (y2 - y0) / det
            grad[e, 1, 1] = (x0 - x2) / det
            grad[e, 2, 0] = (y0 - y1) / det
            grad[e, 2, 1] = (x1 - x0) / det
    return area_arr, grad_arr


def stiffness_values(const double[:, :, ::1] grad, const double[::1] area,
                     const double[::1] coef):
    """Local ``coef * area * (grad_a . grad_b)`` blocks, shape ``(M, 3, 3)``."""
    cdef Py_ssize_t m = grad.shape[0]
    cdef Py_ssize_t e, a, b
    out_arr = np.empty((m, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for e in range(m):
            for a in range(3):
                for b in range(3):
                    out[e, a, b] = coef[e] * (area[e] * (grad[e, a, 0] * grad[e, b, 0]
                                                         + grad[e, a, 1] * grad[e, b, 1]))
    return out_arr


def tensor_stiffness_values(const double[:, :, ::1] grad, const double[::1] area,
                            const double[:, :, ::1] tensor):
    """Local ``area * grad_a . K grad_b`` blocks for symmetric 2x2 ``K``."""
    cdef Py_ssize_t m = grad.shape[0]
    cdef Py_ssize_t e, a, b
    cdef double gax, gay, gbx, gby
    out_arr = np.empty((m, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for e in range(m):
            for a in range(3):
                gax = grad[e, a, 0]
                gay = grad[e, a, 1]
                for b in range(3):
                    gbx = grad[e, b, 0]
                    gby = grad[e, b, 1]
                    out[e, a, b] = area[e] * (tensor[e, 0, 0] * (gax * gbx)
                                              + tensor[e, 0, 1] * (gax * gby + gay * gbx)
                                              + tensor[e, 1, 1] * (gay * gby))
    return out_arr


def mass_values(const double[::1] area):
    """Exact P1 mass blocks ``area / 12 * (1 + delta_ab)``."""
    cdef Py_ssize_t m = area.shape[0]
    cdef Py_ssize_t e, a, b
    out_arr = np.empty((m, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for e in range(m):
            for a in range(3):
                for b in range(3):
                    if a == b:
                        out[e, a, b] = area[e] / 6.0
                    else:
                        out[e, a, b] = area[e] / 12.0
    return out_arr


def advection_values(const double[:, :, ::1] grad, const double[::1] area,
                     const double[:, ::1] vec):
    """Blocks ``-area / 3 * (m . grad_b)``: row ``a`` tests, column ``b`` is the trial."""
    cdef Py_ssize_t m = grad.shape[0]
    cdef Py_ssize_t e, a, b
    cdef double s
    out_arr = np.empty((m, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for e in range(m):
            for b in range(3):
                s = -(area[e] / 3.0) * (vec[e, 0] * grad[e, b, 0] + vec[e, 1] * grad[e, b, 1])
                for a in range(3):
                    out[e, a, b] = s
    return out_arr

"""Vectorized numpy element kernels (fallback for the compiled module).

Operation order matches ``_ckernels.pyx`` so that both backends produce the
same bits.
"""
import numpy as np


def p1_geometry(nodes, tris):
    p0 = nodes[tris[:, 0]]
    p1 = nodes[tris[:, 1]]
    p2 = nodes[tris[:, 2]]
    x0, y0 = p0[:, 0], p0[:, 1]
    x1, y1 = p1[:, 0], p1[:, 1]
    x2, y2 = p2[:, 0], p2[:, 1]
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    area = 0.5 * det
    safe = np.where(det == 0.0, 1.0, det)
    grad = np.empty((len(tris), 3, 2))
    grad[:, 0, 0] = (y1 - y2) / safe
    grad[:, 0, 1] = (x2 - x1) / safe
    grad[:, 1, 0] = (y2 - y0) / safe
    grad[:, 1, 1] = (x0 - x2) / safe
    grad[:, 2, 0] = (y0 - y1) / safe
    grad[:, 2, 1] = (x1 - x0) / safe
    return area, grad


def stiffness_values(grad, area, coef):
    gx = grad[:, :, 0]
    gy = grad[:, :, 1]
    dots = gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]
    return coef[:, None, None] * (area[:, None, None] * dots)


def tensor_stiffness_values(grad, area, tensor):
    gx = grad[:, :, 0]
    gy = grad[:, :, 1]
    xx = gx[:, :, None] * gx[:, None, :]
    yy = gy[:, :, None] * gy[:, None, :]
    xy = gx[:, :, None] * gy[:, None, :] + gy[:, :, None] * gx[:, None, :]
    kxx = tensor[:, 0, 0][:, None, None]
    kxy = tensor[:, 0, 1][:, None, None]
    kyy = tensor[:, 1, 1][:, None, None]
    return area[:, None, None] * (kxx * xx + kxy * xy + kyy * yy)


def mass_values(area):
    out = np.empty((len(area), 3, 3))
    out[:] = (area / 12.0)[:, None, None]
    idx = np.arange(3)
    out[:, idx, idx] = (area / 6.0)[:, None]
    return out


def advection_values(grad, area, vec):
    s = -(area / 3.0)[:, None] * (vec[:, 0][:, None] * grad[:, :, 0] + vec[:, 1][:, None] * grad[:, :, 1])
    return np.broadcast_to(s[:, None, :], (len(area), 3, 3)).copy()

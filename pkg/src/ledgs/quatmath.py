"""Quaternion / rotation helpers with hand-derived backward passes.

Quaternions are stored (w, x, y, z) and batch over leading axes; the last
axis always holds components. Backward functions return the gradient of a
scalar loss w.r.t. the raw inputs given the gradient w.r.t. the outputs.
"""

import numpy as np


def normalize(q):
    """Unit-normalize along the last axis."""
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def normalize_backward(q, d_unit):
    """Backward of u = q / |q|.

    Args:
        q: raw (un-normalized) input, (..., k)
        d_unit: gradient w.r.t. u, (..., k)
    Returns:
        gradient w.r.t. q, (..., k)
    """
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    u = q / n
    dot = np.sum(d_unit * u, axis=-1, keepdims=True)
    return (d_unit - dot * u) / n


def quat_to_rot(q):
    """Rotation matrices (..., 3, 3) from unit quaternions (..., 4)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def rot_backward(q, d_rot):
    """Backward of R(q) for unit q: maps dL/dR (..., 3, 3) to dL/dq (..., 4).

    Does not include the normalization of q; compose with
    normalize_backward when q is a free parameter.
    """
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    zero = np.zeros_like(w)

    def mat(r0, r1, r2):
        return np.stack([np.stack(r0, axis=-1), np.stack(r1, axis=-1), np.stack(r2, axis=-1)], axis=-2)

    # dR/dw, dR/dx, dR/dy, dR/dz, each (..., 3, 3)
    dw = 2.0 * mat([zero, -z, y], [z, zero, -x], [-y, x, zero])
    dx = 2.0 * mat([zero, y, z], [y, -2 * x, -w], [z, w, -2 * x])
    dy = 2.0 * mat([-2 * y, x, w], [x, zero, z], [-w, z, -2 * y])
    dz = 2.0 * mat([-2 * z, -w, x], [w, -2 * z, y], [x, y, zero])
    comps = [np.sum(d_rot * d, axis=(-2, -1)) for d in (dw, dx, dy, dz)]
    return np.stack(comps, axis=-1)


def quat_mul(a, b):
    """Hamilton product a ⊗ b, batched over leading axes."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_left_matrix(a):
    """L(a) with a ⊗ b = L(a) @ b."""
    w, x, y, z = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    rows = [
        np.stack([w, -x, -y, -z], axis=-1),
        np.stack([x, w, -z, y], axis=-1),
        np.stack([y, z, w, -x], axis=-1),
        np.stack([z, -y, x, w], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def quat_right_matrix(b):
    """Rm(b) with a ⊗ b = Rm(b) @ a."""
    w, x, y, z = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    rows = [
        np.stack([w, -x, -y, -z], axis=-1),
        np.stack([x, w, z, -y], axis=-1),
        np.stack([y, -z, w, x], axis=-1),
        np.stack([z, y, -x, w], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def quat_mul_backward(a, b, d_out):
    """Backward of quat_mul: returns (dL/da, dL/db)."""
    da = np.einsum("...ij,...i->...j", quat_right_matrix(b), d_out)
    db = np.einsum("...ij,...i->...j", quat_left_matrix(a), d_out)
    return da, db


def axis_angle_quat(axis, angle):
    """Unit quaternion for a rotation of `angle` radians about `axis`."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def random_unit_quat(rng, size=None):
    """Uniform random unit quaternions (Gaussian projection)."""
    shape = (4,) if size is None else (size, 4)
    q = rng.normal(size=shape)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def identity_quat(size=None):
    if size is None:
        return np.array([1.0, 0.0, 0.0, 0.0])
    q = np.zeros((size, 4))
    q[:, 0] = 1.0
    return q

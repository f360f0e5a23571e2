"""Device orientation tracking from gyroscope/accelerometer streams.

Orientation is held as a unit quaternion ``q = [q1, q2, q3, q4]`` with the
vector part first and the scalar part last, describing the rotation of the
device (local frame) relative to the global East-North-Up frame.  The
direction cosine matrix built from it maps global vectors into local
coordinates, so global acceleration is recovered as ``R^T a_local``.

Heading is extracted from the yaw-pitch-roll factorisation of the DCM and is
relative to an arbitrary reference direction; no magnetometer is involved.
The propagation filter is a first-order gyro integration with a small
complementary accelerometer tilt correction whose yaw component is removed,
so gravity never influences the heading estimate.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import DegenerateOrientationError, InvalidInputError

STANDARD_GRAVITY = 9.80665  # m/s^2

#: complementary tilt-correction blend, per sample at the nominal 100 Hz rate
TILT_BLEND_GAIN = 0.02

#: accelerometer magnitude window (relative to g) inside which tilt is trusted
ACCEL_TRUST_BAND = 0.2


class Quaternion(NamedTuple):
    q1: float
    q2: float
    q3: float
    q4: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.q1**2 + self.q2**2 + self.q3**2 + self.q4**2)

    def normalized(self) -> "Quaternion":
        n = self.norm
        if n == 0.0 or not math.isfinite(n):
            raise InvalidInputError("cannot normalize zero or non-finite quaternion")
        return Quaternion(self.q1 / n, self.q2 / n, self.q3 / n, self.q4 / n)


IDENTITY = Quaternion(0.0, 0.0, 0.0, 1.0)


class ImuSample(NamedTuple):
    timestamp: float
    gyro: tuple[float, float, float]   # rad/s, local frame
    accel: tuple[float, float, float]  # m/s^2, local frame, includes gravity


def wrap_to_pi(angle: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    wrapped = angle - 2.0 * math.pi * math.floor((angle + math.pi) / (2.0 * math.pi))
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


def quat_multiply(p: Quaternion, q: Quaternion) -> Quaternion:
    """Hamilton product p*q (vector-first, scalar-last convention)."""
    pv = (p.q1, p.q2, p.q3)
    qv = (q.q1, q.q2, q.q3)
    w = p.q4 * q.q4 - (pv[0] * qv[0] + pv[1] * qv[1] + pv[2] * qv[2])
    x = p.q4 * qv[0] + q.q4 * pv[0] + (pv[1] * qv[2] - pv[2] * qv[1])
    y = p.q4 * qv[1] + q.q4 * pv[1] + (pv[2] * qv[0] - pv[0] * qv[2])
    z = p.q4 * qv[2] + q.q4 * pv[2] + (pv[0] * qv[1] - pv[1] * qv[0])
    return Quaternion(x, y, z, w)


def quat_from_axis_angle(axis: tuple[float, float, float], angle: float) -> Quaternion:
    """Unit quaternion rotating by ``angle`` about unit ``axis``."""
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        raise InvalidInputError("rotation axis must be non-zero")
    s = math.sin(angle / 2.0) / n
    return Quaternion(ax * s, ay * s, az * s, math.cos(angle / 2.0))


def _check_unit(q: Quaternion, tol: float = 1e-6) -> None:
    if not all(math.isfinite(c) for c in q):
        raise InvalidInputError("quaternion has non-finite components")
    if abs(q.norm - 1.0) > tol:
        raise InvalidInputError(f"quaternion norm {q.norm:.9f} is not 1 within {tol}")


def dcm_from_quaternion(q: Quaternion) -> np.ndarray:
    """Direction cosine matrix (global -> local) of a unit quaternion."""
    _check_unit(q)
    q1, q2, q3, q4 = q
    return np.array([
        [1 - 2 * q2**2 - 2 * q3**2, 2 * (q1 * q2 + q3 * q4), 2 * (q1 * q3 - q2 * q4)],
        [2 * (q1 * q2 - q3 * q4), 1 - 2 * q1**2 - 2 * q3**2, 2 * (q2 * q3 + q1 * q4)],
        [2 * (q1 * q3 + q2 * q4), 2 * (q2 * q3 - q1 * q4), 1 - 2 * q1**2 - 2 * q2**2],
    ])


def to_global(q: Quaternion, accel_local) -> np.ndarray:
    """Convert a local-frame acceleration vector to the global frame (R^T a')."""
    _check_unit(q)
    a = np.asarray(accel_local, dtype=float)
    if a.shape != (3,):
        raise InvalidInputError("acceleration must be a 3-vector")
    return dcm_from_quaternion(q).T @ a


def heading_from_quaternion(q: Quaternion) -> float:
    """Heading (yaw) angle in (-pi, pi], relative to an arbitrary reference.

    Raises DegenerateOrientationError when the device is pitched so that
    yaw is undefined (both atan2 arguments vanish).
    """
    _check_unit(q)
    q1, q2, q3, q4 = q
    num = 2.0 * (q1 * q2 - q3 * q4)   # [R](2,1)
    den = 1.0 - 2.0 * q1**2 - 2.0 * q3**2  # [R](2,2)
    if abs(num) < 1e-12 and abs(den) < 1e-12:
        raise DegenerateOrientationError("yaw undefined: device pitched to gimbal lock")
    return wrap_to_pi(-math.atan2(num, den))


def dcm_from_euler(pitch: float, roll: float, yaw: float) -> np.ndarray:
    """DCM from the roll(y) * pitch(x) * yaw(z) factorisation."""
    cx, sx = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(roll), math.sin(roll)
    cz, sz = math.cos(yaw), math.sin(yaw)
    ry = np.array([[cy, 0, -sy], [0, 1, 0], [sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cx, sx], [0, -sx, cx]])
    rz = np.array([[cz, sz, 0], [-sz, cz, 0], [0, 0, 1]])
    return ry @ rx @ rz


def euler_from_dcm(r: np.ndarray) -> tuple[float, float, float]:
    """Extract (pitch, roll, yaw) matching :func:`dcm_from_euler`."""
    pitch = math.asin(max(-1.0, min(1.0, r[1, 2])))
    roll = math.atan2(-r[0, 2], r[2, 2])
    yaw = -math.atan2(r[1, 0], r[1, 1])
    return pitch, roll, yaw


def _yaw_rotation(angle: float) -> Quaternion:
    return Quaternion(0.0, 0.0, math.sin(angle / 2.0), math.cos(angle / 2.0))


def _rotate_to_global(q: Quaternion, ax: float, ay: float, az: float):
    # scalar R^T a' without building the DCM; hot path of the 100 Hz loop
    q1, q2, q3, q4 = q
    r11 = 1 - 2 * (q2 * q2 + q3 * q3)
    r12 = 2 * (q1 * q2 + q3 * q4)
    r13 = 2 * (q1 * q3 - q2 * q4)
    r21 = 2 * (q1 * q2 - q3 * q4)
    r22 = 1 - 2 * (q1 * q1 + q3 * q3)
    r23 = 2 * (q2 * q3 + q1 * q4)
    r31 = 2 * (q1 * q3 + q2 * q4)
    r32 = 2 * (q2 * q3 - q1 * q4)
    r33 = 1 - 2 * (q1 * q1 + q2 * q2)
    return (r11 * ax + r21 * ay + r31 * az,
            r12 * ax + r22 * ay + r32 * az,
            r13 * ax + r23 * ay + r33 * az)


def _yaw(q: Quaternion) -> float:
    q1, q2, q3, q4 = q
    return wrap_to_pi(-math.atan2(2.0 * (q1 * q2 - q3 * q4),
                                  1.0 - 2.0 * q1 * q1 - 2.0 * q3 * q3))


def update_orientation(q_prev: Quaternion, sample: ImuSample, dt: float) -> Quaternion:
    """Propagate orientation by one IMU sample.

    Gyro rates are integrated in the body frame; when the accelerometer
    magnitude is close to gravity, a fraction of the measured tilt error is
    corrected.  The correction is then yaw-compensated so the heading angle
    is unaffected by accelerometer input.
    """
    if not (0.0 < dt <= 0.1):
        raise InvalidInputError(f"dt must be in (0, 0.1] s, got {dt}")
    gx, gy, gz = sample.gyro
    ax, ay, az = sample.accel
    if not all(math.isfinite(v) for v in (gx, gy, gz, ax, ay, az)):
        raise InvalidInputError("IMU sample contains non-finite values")

    rate = math.sqrt(gx * gx + gy * gy + gz * gz)
    if rate * dt > 1e-12:
        q = quat_multiply(q_prev, quat_from_axis_angle((gx, gy, gz), rate * dt))
    else:
        q = q_prev

    acc_norm = math.sqrt(ax * ax + ay * ay + az * az)
    if abs(acc_norm - STANDARD_GRAVITY) <= ACCEL_TRUST_BAND * STANDARD_GRAVITY:
        vx, vy, vz = _rotate_to_global(q, ax / acc_norm, ay / acc_norm, az / acc_norm)
        # the rotation taking measured gravity onto +z has a horizontal axis
        sin_err = math.sqrt(vx * vx + vy * vy)
        if sin_err > 1e-12:
            err = math.atan2(sin_err, vz)
            corr = quat_from_axis_angle((vy / sin_err, -vx / sin_err, 0.0),
                                        TILT_BLEND_GAIN * err)
            yaw_before = _yaw(q)
            q = quat_multiply(corr, q)
            q = quat_multiply(_yaw_rotation(yaw_before - _yaw(q)), q)

    return q.normalized()

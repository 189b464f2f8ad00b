"""Chebyshev expansion coefficients for the short-time propagator.

exp(-i*z*x) on x in [-1, 1] expands as
    J_0(z) + 2 * sum_k (-i)^k J_k(z) T_k(x),
so a propagator step only needs Bessel values J_k(z) for z = r*dt (r the
spectral half-width).  J_k is computed locally: an ascending power series for
small z (cancellation-free there) and Miller's downward recurrence otherwise,
keeping the runtime free of special-function dependencies.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ValidationError

# series terms stay monotonically decreasing for z <= 2
_SERIES_Z_MAX = 2.0
_Z_MAX = 64.0


def bessel_j(k: int, z: float) -> float:
    """J_k(z) for k >= 0, 0 <= z <= 64."""
    if k < 0 or z < 0 or z > _Z_MAX:
        raise ValidationError(f"bessel_j defined for k>=0, 0<=z<={_Z_MAX}; got {k}, {z}")
    if z <= _SERIES_Z_MAX:
        return _series(k, z)
    return float(_miller_row(k, z)[k])


def _series(k: int, z: float) -> float:
    if z == 0.0:
        return 1.0 if k == 0 else 0.0
    term = 1.0
    for i in range(1, k + 1):
        term *= 0.5 * z / i
    s = term
    m = 1
    q = -0.25 * z * z
    while True:
        term *= q / (m * (m + k))
        s += term
        if abs(term) < 1e-20 * abs(s) or abs(term) < 5e-324:
            return s
        m += 1


def _miller_row(kmax: int, z: float) -> np.ndarray:
    """J_0..J_kmax via downward recurrence, normalized by
    J_0 + 2*sum_m J_{2m} = 1."""
    start = kmax + int(math.ceil(1.5 * z)) + 30
    if start % 2:
        start += 1
    out = np.zeros(start + 2)
    jp, j = 0.0, 1e-30
    out[start] = j
    norm = 0.0
    for k in range(start, 0, -1):
        jm = (2.0 * k / z) * j - jp
        jp, j = j, jm
        out[k - 1] = j
        if abs(j) > 1e250:
            jp *= 1e-250
            j *= 1e-250
            out *= 1e-250
            norm *= 1e-250
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += j
    norm = 2.0 * norm + out[0]
    return out[: kmax + 1] / norm


def propagator_coefficients(z: float, tol: float = 1e-17) -> np.ndarray:
    """Complex coefficients a_k with exp(-i*z*x) = sum_k a_k T_k(x) to ~tol.

    Truncates once |J_k(z)| < tol (with a small floor on the order so the
    expansion is exact for trivial z).
    """
    if not (math.isfinite(z) and 0 <= z <= _Z_MAX):
        raise ValidationError(
            f"propagator step z = r*dt must lie in [0, {_Z_MAX}]; got {z!r}. "
            "Reduce dt or the spectral radius.")
    kmin = 4
    if z <= _SERIES_Z_MAX:
        vals = []
        k = 0
        while True:
            jk = _series(k, z)
            vals.append(jk)
            if k >= kmin and abs(jk) < tol:
                break
            k += 1
        row = np.array(vals)
    else:
        kmax = int(math.ceil(z + 12.0 * z ** (1.0 / 3.0) + 14))
        row = _miller_row(kmax, z)
        keep = np.nonzero(np.abs(row) >= tol)[0]
        last = max(int(keep[-1]) + 1 if keep.size else kmin, kmin)
        row = row[: last + 1]
    k = np.arange(row.shape[0])
    coeffs = row.astype(np.complex128) * (-1j) ** k
    coeffs[1:] *= 2.0
    return coeffs

"""Pure-numpy fallback for the time-stepping kernels.

Same algorithms and call signatures as numba_backend (split real/imaginary
state arrays in, densities out), with the inner loops expressed as vectorized
numpy operations on complex arrays.  Selected via QUASIPUMP_BACKEND=numpy or
automatically when numba is unavailable; roughly an order of magnitude slower
than the JIT path on chains of a few dozen sites (see benchmarks/).
"""

import numpy as np

NAME = "numpy"


def cheb_loop(J, carg, V, phi0, rate, dt, n_steps, stride,
              ar, ai, c0, rinv, psi_r, psi_i, dens, times):
    """Chebyshev midpoint-propagator stepping; returns max |norm^2 - 1|."""
    coeffs = ar + 1j * ai
    K = coeffs.shape[0]
    Jc = (J * rinv).astype(np.complex128)
    psi = psi_r + 1j * psi_i
    phase = np.cos(c0 * dt) - 1j * np.sin(c0 * dt)
    drift = 0.0
    k = 1
    dens[0] = psi.real ** 2 + psi.imag ** 2
    times[0] = 0.0
    for step in range(n_steps):
        phi = phi0 + rate * ((step + 0.5) * dt)
        w = (V * np.cos(carg + phi) - c0) * rinv
        p0 = psi
        acc = coeffs[0] * p0
        p1 = Jc @ p0 + w * p0
        acc += coeffs[1] * p1
        for kk in range(2, K):
            p2 = 2.0 * (Jc @ p1 + w * p1) - p0
            acc += coeffs[kk] * p2
            p0 = p1
            p1 = p2
        psi = phase * acc
        nrm = float(psi.real @ psi.real + psi.imag @ psi.imag)
        d = abs(nrm - 1.0)
        if d > drift:
            drift = d
        if (step + 1) % stride == 0:
            dens[k] = psi.real ** 2 + psi.imag ** 2
            times[k] = (step + 1) * dt
            k += 1
    psi_r[:] = psi.real
    psi_i[:] = psi.imag
    return drift


def _cn_refactor(J, w, alpha):
    G = J + np.diag(w)
    M = np.eye(G.shape[0]) + (alpha * alpha) * (G @ G)
    return G, np.linalg.inv(M)


def _cn_apply_frozen(G, Minv, alpha, b):
    xi = Minv @ (b.imag - alpha * (G @ b.real))
    xr = b.real + alpha * (G @ xi)
    return xr + 1j * xi


def cn_loop(J, carg, V, phi0, rate, dt, n_steps, stride,
            psi_r, psi_i, dens, times, rtol, max_refine):
    """Crank-Nicolson stepping; see numba_backend.cn_loop for the contract."""
    alpha = 0.5 * dt
    Jc = J.astype(np.complex128)
    psi = psi_r + 1j * psi_i
    need_fact = True
    G = Minv = None
    drift = 0.0
    n_fact = 0
    refine_tot = 0
    k = 1
    dens[0] = psi.real ** 2 + psi.imag ** 2
    times[0] = 0.0
    for step in range(n_steps):
        phi = phi0 + rate * ((step + 0.5) * dt)
        w = V * np.cos(carg + phi)
        fresh = False
        if need_fact:
            G, Minv = _cn_refactor(J, w, alpha)
            need_fact = False
            fresh = True
            n_fact += 1
        b = psi - 1j * alpha * (Jc @ psi + w * psi)
        bnorm = float(np.max(np.abs(b.real) + np.abs(b.imag)))
        while True:
            x = _cn_apply_frozen(G, Minv, alpha, b)
            used = 0
            ok = False
            for _ in range(max_refine):
                r = b - x - 1j * alpha * (Jc @ x + w * x)
                if float(np.max(np.abs(r.real) + np.abs(r.imag))) <= rtol * bnorm:
                    ok = True
                    break
                x = x + _cn_apply_frozen(G, Minv, alpha, r)
                used += 1
            refine_tot += used
            if ok:
                if used >= 3:
                    need_fact = True
                break
            if fresh:
                return drift, n_fact, refine_tot, step + 1
            G, Minv = _cn_refactor(J, w, alpha)
            fresh = True
            n_fact += 1
        psi = x
        nrm = float(psi.real @ psi.real + psi.imag @ psi.imag)
        d = abs(nrm - 1.0)
        if d > drift:
            drift = d
        if (step + 1) % stride == 0:
            dens[k] = psi.real ** 2 + psi.imag ** 2
            times[k] = (step + 1) * dt
            k += 1
    psi_r[:] = psi.real
    psi_i[:] = psi.imag
    return drift, n_fact, refine_tot, 0

"""JIT-compiled time-stepping kernels (the hot loops of `dynamics.evolve`).

Both integrators advance the state through millions of small steps with the
phase ramped linearly, phi(t) = phi0 + rate*t, and record site densities
every `stride` steps.  All state is carried in split real/imaginary float64
arrays so the inner loops vectorize.

chebyshev: psi <- exp(-i*H(t_mid)*dt) psi via a Chebyshev expansion of the
    midpoint propagator (coefficients precomputed in coeffs.py).
cn: Crank-Nicolson / implicit midpoint, (1 + i*dt/2*H) psi' = (1 - i*dt/2*H) psi,
    solved with a frozen-Hamiltonian preconditioner plus residual refinement
    (exact to `rtol` per step; the preconditioner refreshes adaptively).
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True, fastmath=True)
def _gemv(A, x, out):
    n = A.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += A[i, j] * x[j]
        out[i] = s


@njit(cache=True)
def cheb_loop(J, carg, V, phi0, rate, dt, n_steps, stride,
              ar, ai, c0, rinv, psi_r, psi_i, dens, times):
    """Chebyshev midpoint-propagator stepping; returns max |norm^2 - 1|."""
    n = J.shape[0]
    K = ar.shape[0]
    w = np.empty(n)
    p0r = np.empty(n); p0i = np.empty(n)
    p1r = np.empty(n); p1i = np.empty(n)
    acr = np.empty(n); aci = np.empty(n)
    t1 = np.empty(n); t2 = np.empty(n)
    # global phase exp(-i*c0*dt) restores the spectral shift
    ph_c = np.cos(c0 * dt)
    ph_s = -np.sin(c0 * dt)
    drift = 0.0
    k = 1
    for i in range(n):
        dens[0, i] = psi_r[i] * psi_r[i] + psi_i[i] * psi_i[i]
    times[0] = 0.0
    for step in range(n_steps):
        phi = phi0 + rate * ((step + 0.5) * dt)
        for i in range(n):
            w[i] = (V * np.cos(carg[i] + phi) - c0) * rinv
        for i in range(n):
            p0r[i] = psi_r[i]
            p0i[i] = psi_i[i]
            acr[i] = ar[0] * p0r[i] - ai[0] * p0i[i]
            aci[i] = ar[0] * p0i[i] + ai[0] * p0r[i]
        _gemv(J, p0r, t1)
        _gemv(J, p0i, t2)
        for i in range(n):
            p1r[i] = t1[i] * rinv + w[i] * p0r[i]
            p1i[i] = t2[i] * rinv + w[i] * p0i[i]
            acr[i] += ar[1] * p1r[i] - ai[1] * p1i[i]
            aci[i] += ar[1] * p1i[i] + ai[1] * p1r[i]
        for kk in range(2, K):
            _gemv(J, p1r, t1)
            _gemv(J, p1i, t2)
            for i in range(n):
                p2r = 2.0 * (t1[i] * rinv + w[i] * p1r[i]) - p0r[i]
                p2i = 2.0 * (t2[i] * rinv + w[i] * p1i[i]) - p0i[i]
                acr[i] += ar[kk] * p2r - ai[kk] * p2i
                aci[i] += ar[kk] * p2i + ai[kk] * p2r
                p0r[i] = p1r[i]
                p0i[i] = p1i[i]
                p1r[i] = p2r
                p1i[i] = p2i
        nrm = 0.0
        for i in range(n):
            xr = ph_c * acr[i] - ph_s * aci[i]
            xi = ph_c * aci[i] + ph_s * acr[i]
            psi_r[i] = xr
            psi_i[i] = xi
            nrm += xr * xr + xi * xi
        d = abs(nrm - 1.0)
        if d > drift:
            drift = d
        if (step + 1) % stride == 0:
            for i in range(n):
                dens[k, i] = psi_r[i] * psi_r[i] + psi_i[i] * psi_i[i]
            times[k] = (step + 1) * dt
            k += 1
    return drift


@njit(cache=True, fastmath=True)
def _cn_refactor(J, w, alpha, G, M, Minv):
    n = J.shape[0]
    for i in range(n):
        for j in range(n):
            G[i, j] = J[i, j]
        G[i, i] += w[i]
    M[:, :] = np.dot(G, G)
    a2 = alpha * alpha
    for i in range(n):
        for j in range(n):
            M[i, j] *= a2
        M[i, i] += 1.0
    Minv[:, :] = np.linalg.inv(M)


@njit(cache=True, fastmath=True)
def _cn_apply_frozen(G, Minv, alpha, br, bi, xr, xi, t1, t2):
    # solve (1 + i*alpha*G) x = b given Minv = (1 + alpha^2 G^2)^-1:
    # x_im = Minv (b_im - alpha G b_re); x_re = b_re + alpha G x_im
    n = br.shape[0]
    _gemv(G, br, t1)
    for i in range(n):
        t1[i] = bi[i] - alpha * t1[i]
    _gemv(Minv, t1, xi)
    _gemv(G, xi, t2)
    for i in range(n):
        xr[i] = br[i] + alpha * t2[i]


@njit(cache=True)
def cn_loop(J, carg, V, phi0, rate, dt, n_steps, stride,
            psi_r, psi_i, dens, times, rtol, max_refine):
    """Crank-Nicolson stepping.

    Returns (drift, n_factorizations, n_refinements, fail_step); fail_step is
    0 on success, else the 1-based step whose linear solve failed to reach
    rtol even with a fresh factorization.
    """
    n = J.shape[0]
    alpha = 0.5 * dt
    w = np.empty(n)
    G = np.empty((n, n))
    M = np.empty((n, n))
    Minv = np.empty((n, n))
    hr = np.empty(n); hi = np.empty(n)
    br = np.empty(n); bi = np.empty(n)
    xr = np.empty(n); xi = np.empty(n)
    rr = np.empty(n); ri = np.empty(n)
    t1 = np.empty(n); t2 = np.empty(n)
    need_fact = True
    drift = 0.0
    n_fact = 0
    refine_tot = 0
    k = 1
    for i in range(n):
        dens[0, i] = psi_r[i] * psi_r[i] + psi_i[i] * psi_i[i]
    times[0] = 0.0
    for step in range(n_steps):
        phi = phi0 + rate * ((step + 0.5) * dt)
        for i in range(n):
            w[i] = V * np.cos(carg[i] + phi)
        fresh = False
        if need_fact:
            _cn_refactor(J, w, alpha, G, M, Minv)
            need_fact = False
            fresh = True
            n_fact += 1
        # b = (1 - i*alpha*H) psi with the current H = J + diag(w)
        _gemv(J, psi_r, hr)
        _gemv(J, psi_i, hi)
        bnorm = 0.0
        for i in range(n):
            hr[i] += w[i] * psi_r[i]
            hi[i] += w[i] * psi_i[i]
            br[i] = psi_r[i] + alpha * hi[i]
            bi[i] = psi_i[i] - alpha * hr[i]
            a2 = abs(br[i]) + abs(bi[i])
            if a2 > bnorm:
                bnorm = a2
        while True:
            _cn_apply_frozen(G, Minv, alpha, br, bi, xr, xi, t1, t2)
            used = 0
            ok = False
            for _ in range(max_refine):
                _gemv(J, xr, hr)
                _gemv(J, xi, hi)
                rmax = 0.0
                for i in range(n):
                    hre = hr[i] + w[i] * xr[i]
                    him = hi[i] + w[i] * xi[i]
                    rr[i] = br[i] - xr[i] + alpha * him
                    ri[i] = bi[i] - xi[i] - alpha * hre
                    a2 = abs(rr[i]) + abs(ri[i])
                    if a2 > rmax:
                        rmax = a2
                if rmax <= rtol * bnorm:
                    ok = True
                    break
                _cn_apply_frozen(G, Minv, alpha, rr, ri, t1, t2, hr, hi)
                for i in range(n):
                    xr[i] += t1[i]
                    xi[i] += t2[i]
                used += 1
            refine_tot += used
            if ok:
                # stale preconditioner getting expensive: refresh next step
                if used >= 3:
                    need_fact = True
                break
            if fresh:
                return drift, n_fact, refine_tot, step + 1
            _cn_refactor(J, w, alpha, G, M, Minv)
            fresh = True
            n_fact += 1
        nrm = 0.0
        for i in range(n):
            psi_r[i] = xr[i]
            psi_i[i] = xi[i]
            nrm += xr[i] * xr[i] + xi[i] * xi[i]
        d = abs(nrm - 1.0)
        if d > drift:
            drift = d
        if (step + 1) % stride == 0:
            for i in range(n):
                dens[k, i] = psi_r[i] * psi_r[i] + psi_i[i] * psi_i[i]
            times[k] = (step + 1) * dt
            k += 1
    return drift, n_fact, refine_tot, 0

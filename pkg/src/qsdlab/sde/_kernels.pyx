# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path kernels for the theta-logistic family.

Each path owns a numpy bit generator; Gaussian draws go through numpy's
own ``random_standard_normal`` so the stream is identical to
``Generator.standard_normal`` and the pure-numpy fallback reproduces the
compiled results bit for bit.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, fmax, pow, sqrt
from libc.stdlib cimport malloc, free
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_standard_uniform

cdef struct Coef:
    double mu
    double kappa
    double theta
    double sig
    double gam
    double eps


cdef inline double _update(double x, double h, double dB, double dW, Coef* c, int scheme) noexcept nogil:
    cdef double xt, g
    if c.theta == 1.0:
        xt = x
    else:
        xt = pow(x, c.theta)
    g = c.mu - c.kappa * xt
    if scheme == 0:
        return x + x * g * h + c.sig * x * dB + c.eps * sqrt(fmax(c.gam * x, 0.0)) * dW
    return (x + x * fmax(g, 0.0) * h + c.sig * x * dB + c.eps * sqrt(fmax(c.gam * x, 0.0)) * dW) / (1.0 + fmax(-g, 0.0) * h)


cdef bitgen_t* _bitgen(object bg) except NULL:
    capsule = bg.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef Coef _coef(tuple coef):
    cdef Coef c
    c.mu, c.kappa, c.theta, c.sig, c.gam, c.eps = coef
    return c


cdef inline double _alpha(double x, Coef* c) noexcept nogil:
    return c.eps * c.eps * c.gam * x + c.sig * c.sig * x * x


def run_paths(double[::1] x0, tuple coef, double dt, int n_sub, double x_bl, long long n_steps,
              int scheme, int mode, double beta, long long[::1] obs_steps, list bitgens,
              list ubitgens, double[::1] t_out, signed char[::1] status_out, double[:, ::1] obs_out):
    """Simulate independent absorbed paths.

    Status codes: 0 absorbed at 0, 1 censored at ``n_steps*dt``, 2 exited
    at ``beta`` (``mode == 1`` only).  In exit mode a Brownian-bridge test
    detects crossings of ``beta`` between grid points, using one uniform
    per substep from the paths' second streams ``ubitgens``.
    """
    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t n_obs = obs_steps.shape[0]
    cdef Coef c = _coef(coef)
    cdef bitgen_t** rngs = <bitgen_t**> malloc(n * sizeof(bitgen_t*))
    cdef bitgen_t** urngs = <bitgen_t**> malloc(n * sizeof(bitgen_t*))
    cdef Py_ssize_t p, j
    cdef long long k
    cdef int m, s, status
    cdef double x, xp, h, sh, z1, z2, T, u, a
    if rngs == NULL or urngs == NULL:
        free(rngs); free(urngs)
        raise MemoryError()
    try:
        for p in range(n):
            rngs[p] = _bitgen(bitgens[p])
            urngs[p] = _bitgen(ubitgens[p]) if mode == 1 else NULL
        with nogil:
            for p in range(n):
                x = x0[p]
                j = 0
                while j < n_obs and obs_steps[j] == 0:
                    obs_out[p, j] = x
                    j += 1
                status = 1
                T = n_steps * dt
                for k in range(n_steps):
                    m = n_sub if x < x_bl else 1
                    h = dt / m
                    sh = sqrt(h)
                    for s in range(m):
                        z1 = random_standard_normal(rngs[p])
                        z2 = random_standard_normal(rngs[p])
                        xp = x
                        x = _update(x, h, sh * z1, sh * z2, &c, scheme)
                        if x <= 0.0:
                            status = 0
                            x = 0.0
                            T = k * dt + (s + 1) * h
                            break
                        if mode == 1:
                            u = random_standard_uniform(urngs[p])
                            a = _alpha(xp, &c)
                            if x >= beta or u < exp(-2.0 * (beta - xp) * (beta - x) / (a * h)):
                                status = 2
                                T = k * dt + (s + 1) * h
                                break
                    if status != 1:
                        break
                    while j < n_obs and obs_steps[j] == k + 1:
                        obs_out[p, j] = x
                        j += 1
                while j < n_obs:
                    obs_out[p, j] = x
                    j += 1
                t_out[p] = T
                status_out[p] = status
    finally:
        free(rngs)
        free(urngs)


def fv_run(double[::1] x, tuple coef, double dt, int n_sub, double x_bl, int scheme,
           long long n_steps, long long n_burn, object bitgen, double[::1] edges,
           long long[::1] counts):
    """Advance a Fleming-Viot particle system in place.

    Returns ``(rebirths_total, rebirths_after_burn, failed_step)`` where
    ``failed_step`` is -1 unless every particle was absorbed in one step.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t n_edges = edges.shape[0]
    cdef Py_ssize_t n_bins = n_edges - 1
    cdef Coef c = _coef(coef)
    cdef bitgen_t* rng = _bitgen(bitgen)
    cdef double* xn = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* surv = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef char* dead = <char*> malloc(n * sizeof(char))
    cdef long long k, total = 0, after = 0, failed = -1
    cdef Py_ssize_t i, jj, n_surv, lo, hi, mid
    cdef int m, s
    cdef double xi, h, sh, z1, z2, u
    if xn == NULL or surv == NULL or dead == NULL:
        free(xn); free(surv); free(dead)
        raise MemoryError()
    try:
        with nogil:
            for k in range(n_steps):
                n_surv = 0
                for i in range(n):
                    xi = x[i]
                    m = n_sub if xi < x_bl else 1
                    h = dt / m
                    sh = sqrt(h)
                    dead[i] = 0
                    for s in range(m):
                        z1 = random_standard_normal(rng)
                        z2 = random_standard_normal(rng)
                        if not dead[i]:
                            xi = _update(xi, h, sh * z1, sh * z2, &c, scheme)
                            if xi <= 0.0:
                                dead[i] = 1
                    xn[i] = xi
                    if not dead[i]:
                        surv[n_surv] = i
                        n_surv += 1
                if n_surv == 0:
                    failed = k
                    break
                for i in range(n):
                    if dead[i]:
                        u = random_standard_uniform(rng)
                        jj = <Py_ssize_t> (u * n_surv)
                        if jj >= n_surv:
                            jj = n_surv - 1
                        x[i] = xn[surv[jj]]
                        total += 1
                        if k >= n_burn:
                            after += 1
                    else:
                        x[i] = xn[i]
                if k >= n_burn:
                    for i in range(n):
                        lo = 0
                        hi = n_edges
                        while lo < hi:
                            mid = (lo + hi) // 2
                            if edges[mid] <= x[i]:
                                lo = mid + 1
                            else:
                                hi = mid
                        lo -= 1
                        if lo < 0:
                            lo = 0
                        if lo > n_bins - 1:
                            lo = n_bins - 1
                        counts[lo] += 1
    finally:
        free(xn); free(surv); free(dead)
    return total, after, failed

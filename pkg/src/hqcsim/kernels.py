"""Compiled transport kernel for the standard Hamiltonian family.

Clouds whose Hamiltonian has a quadratic classical part (per-dof kinetic
plus optional spring term) and an interaction linear in q are advanced by
a numba-compiled RK4 loop; everything else falls back to the vectorized
numpy path in dynamics.py.  Both paths perform the same arithmetic per
particle, so they agree to rounding.

Particles are strictly independent inside the kernel (no cross-particle
reductions), which makes results bitwise reproducible for any thread
count.  The worker count is taken from the HQCSIM_WORKERS environment
variable, defaulting to all cores.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import StepRejected

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def worker_count() -> int:
    """Worker count from HQCSIM_WORKERS, default all cores."""
    raw = os.environ.get("HQCSIM_WORKERS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _rk4_cloud(Q, P, C, hq, a_op, gvec, kappa, inv_mass, hbar, dt,
                   n_steps, drift_limit, max_drift, reject_step):
        n, k = Q.shape
        d = C.shape[1]
        scale = -1j / hbar
        for i in prange(n):
            qi = Q[i].copy()
            pi = P[i].copy()
            ci = C[i].copy()
            qt = np.empty(k)
            pt = np.empty(k)
            ct = np.empty(d, numba.complex128)
            aq = np.empty((4, k))
            ap = np.empty((4, k))
            ac = np.empty((4, d), numba.complex128)
            worst = 0.0
            rejected = 0
            for step in range(n_steps):
                for stage in range(4):
                    if stage == 0:
                        for j in range(k):
                            qt[j] = qi[j]
                            pt[j] = pi[j]
                        for j in range(d):
                            ct[j] = ci[j]
                    else:
                        h = 0.5 * dt if stage < 3 else dt
                        for j in range(k):
                            qt[j] = qi[j] + h * aq[stage - 1, j]
                            pt[j] = pi[j] + h * ap[stage - 1, j]
                        for j in range(d):
                            ct[j] = ci[j] + h * ac[stage - 1, j]
                    gq = 0.0
                    for j in range(k):
                        gq += gvec[j] * qt[j]
                    exp_a = 0.0
                    for a in range(d):
                        w = 0.0 + 0.0j
                        ac_row = 0.0 + 0.0j
                        for b in range(d):
                            ac_row += a_op[a, b] * ct[b]
                            w += hq[a, b] * ct[b]
                        w += gq * ac_row
                        ac[stage, a] = scale * w
                        exp_a += (ct[a].conjugate() * ac_row).real
                    for j in range(k):
                        aq[stage, j] = inv_mass[j] * pt[j]
                        ap[stage, j] = -kappa[j] * qt[j] - gvec[j] * exp_a
                w6 = dt / 6.0
                for j in range(k):
                    qi[j] += w6 * (aq[0, j] + 2 * aq[1, j] + 2 * aq[2, j] + aq[3, j])
                    pi[j] += w6 * (ap[0, j] + 2 * ap[1, j] + 2 * ap[2, j] + ap[3, j])
                nrm = 0.0
                for j in range(d):
                    ci[j] += w6 * (ac[0, j] + 2 * ac[1, j] + 2 * ac[2, j] + ac[3, j])
                    nrm += (ci[j].conjugate() * ci[j]).real
                drift = abs(nrm - 1.0)
                if drift > worst:
                    worst = drift
                if drift > drift_limit:
                    rejected = step + 1
                    break
            Q[i] = qi
            P[i] = pi
            C[i] = ci
            max_drift[i] = worst
            reject_step[i] = rejected


def transport_cloud_compiled(hamiltonian, Q, P, C, dt, n_steps,
                             drift_limit) -> bool:
    """Advance stacked particles in place with the compiled kernel.

    Returns False when the Hamiltonian is outside the kernel family or
    numba is unavailable (caller must use the generic path).  Raises
    StepRejected on excessive norm drift, matching the generic path.
    """
    if not HAVE_NUMBA:
        return False
    params = hamiltonian.kernel_parameters()
    if params is None:
        return False
    if n_steps == 0:
        return True
    inv_mass, kappa, gvec, a_op = params
    numba.set_num_threads(min(worker_count(), numba.config.NUMBA_NUM_THREADS))
    n = Q.shape[0]
    max_drift = np.empty(n)
    reject_step = np.zeros(n, dtype=np.int64)
    _rk4_cloud(Q, P, C, np.ascontiguousarray(hamiltonian.h_q), a_op, gvec,
               kappa, inv_mass, hamiltonian.hbar, dt, n_steps, drift_limit,
               max_drift, reject_step)
    if reject_step.max(initial=0) > 0:
        bad = int(np.nonzero(reject_step)[0][0])
        raise StepRejected(
            f"norm drift {max_drift[bad]:.3e} exceeds {drift_limit:.1e} at step "
            f"{int(reject_step[bad])} (dt too large)",
            particle=bad, step=int(reject_step[bad]))
    return True

"""Compiled batch propagator for the stochastic Schrodinger equations.

Every operator appearing in the SSEs is a polynomial of degree <= 2 in
``a`` and ``a^dag``, so one Euler-Maruyama step reduces to scalar
coefficients (computed from the state's moments) multiplying a handful of
shifted copies of the state vector. That keeps a step at O(dim) work.

Noise is drawn from a counter-based stream: a Gaussian pair is a pure
function of ``(trajectory key, step, node)``. A trajectory's path is
therefore independent of batching, scheduling and of how many other
trajectories run alongside it. ``node`` indexes the dyadic Brownian-bridge
tree used when a step is subdivided.

Subdivision is decided from the state alone (the expected size of the
increment), before the interval's own Wiener increment is looked at.
Deciding from the realized increment would preferentially shorten steps
with large ``dW`` and lose quadratic variation, biasing the Ito terms.
"""

import math

import numba as nb
import numpy as np

MODEL_BROWNIAN = 0
MODEL_BROWNIAN_PRINTED = 1
MODEL_JOINT = 2

STATUS_OK = 0
STATUS_LEAKAGE = 1
STATUS_DEGENERATE = 2
STATUS_NONFINITE = 3

# node ids must fit below 2**NODE_BITS; depth <= NODE_BITS - 2
NODE_BITS = 12
MAX_DEPTH = NODE_BITS - 2

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * math.pi
# No fastmath: with reassociation enabled, a fresh compile and a cached
# build can round differently, which would break bit-reproducibility.
_INV_2_53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, inline="always")
def _mix(z):
    # splitmix64 finalizer
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def stream_key(seed, index):
    return _mix(_mix(np.uint64(seed)) ^ _mix(np.uint64(index) * _GOLDEN))


@nb.njit(cache=True, inline="always")
def _uniform(key, counter):
    bits = _mix(key ^ _mix(counter)) >> np.uint64(11)
    return (float(bits) + 0.5) * _INV_2_53


@nb.njit(cache=True, inline="always")
def _normal_pair(key, step, node):
    base = ((np.uint64(step) << np.uint64(NODE_BITS)) | np.uint64(node)) << np.uint64(1)
    u1 = _uniform(key, base)
    u2 = _uniform(key, base | np.uint64(1))
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(_TWO_PI * u2), r * math.sin(_TWO_PI * u2)


@nb.njit(cache=True)
def normal_pairs(key, step0, nsteps, node):
    out = np.empty((nsteps, 2))
    for s in range(nsteps):
        z1, z2 = _normal_pair(key, step0 + s, node)
        out[s, 0] = z1
        out[s, 1] = z2
    return out


@nb.njit(cache=True, inline="always")
def _coefficients(model, gamma, n_t, k, mx, mp, vx, vp, c, out):
    """Fill ``out`` with the step coefficients for the given moments.

    Layout: quadratic (xx, pp, xp, px), linear (x, p), constant, then the
    two noise operators as (x, p, constant) each. Slots 0-6 are complex
    drift coefficients and 7-12 complex noise coefficients.
    """
    if model == MODEL_JOINT:
        r = math.sqrt(2.0 * k)
        out[0] = -k
        out[1] = -k
        out[2] = 0.0
        out[3] = 0.0
        out[4] = 2.0 * k * mx
        out[5] = 2.0 * k * mp
        out[6] = -k * (mx * mx + mp * mp)
        out[7] = r
        out[8] = 0.0
        out[9] = -r * mx
        out[10] = 0.0
        out[11] = r
        out[12] = -r * mp
        return
    g2 = gamma * n_t
    r = math.sqrt(g2)
    c1 = c - 0.5
    if model == MODEL_BROWNIAN:
        # measurement of x and p followed by the feedback unitary; the last
        # four groups are -G^2/2 and the Ito cross term -i r G x
        out[0] = -0.5 * g2 - 2.0 * g2 * (c1 * c1 + vp * vp + 1j * c1)
        out[1] = -0.5 * g2 - 2.0 * g2 * (vx * vx + c * c - 1j * c)
        out[2] = -2.0 * g2 * (-c1 * vx - vp * c + 1j * vp)
        out[3] = -2.0 * g2 * (-c1 * vx - vp * c - 1j * vx)
        out[4] = 2.0 * g2 * mx - 0.5j * gamma * mp
    else:
        out[0] = -0.5 * g2
        out[1] = 0.5 * g2
        out[2] = 0.0
        out[3] = 0.0
        out[4] = 2.0 * g2 * mx + 0.5j * gamma * mp
    out[5] = 2.0 * g2 * mp
    out[6] = 0.0
    out[7] = r - 2j * r * c1
    out[8] = 2j * r * vx
    out[9] = 0.0
    out[10] = -2j * r * vp
    out[11] = r + 2j * r * c
    out[12] = 0.0


@nb.njit(cache=True, inline="always")
def _moments(w, sqp, sq2p, occ, occ1, d):
    # w is the state padded with two zeros on each side
    ea = 0j
    ea2 = 0j
    en = 0.0
    ean = 0.0
    for j in range(d):
        q = j + 2
        wq = w[q]
        pj = wq.real * wq.real + wq.imag * wq.imag
        en += occ[j] * pj
        ean += occ1[j] * pj
        ea += wq.conjugate() * sqp[q + 1] * w[q + 1]
        ea2 += wq.conjugate() * sq2p[q + 2] * w[q + 2]
    s2 = math.sqrt(2.0)
    mx = s2 * ea.real
    mp = s2 * ea.imag
    vx = (2.0 * ea2.real + en + ean) / 2.0 - mx * mx
    vp = (-2.0 * ea2.real + en + ean) / 2.0 - mp * mp
    cxp = ea2.imag - mx * mp
    return mx, mp, vx, vp, cxp


@nb.njit(cache=True)
def _operator_vectors(w, d, model, gamma, n_t, k, euler_h, diag_h, hdiag, hmat,
                      sqp, sq2p, occ, occ1, coef, av, b1v, b2v):
    """Write ``A v``, ``B1 v`` and ``B2 v`` for the padded state ``w``.

    Returns ``(||A v||, ||B1 v||**2 + ||B2 v||**2)``. With ``euler_h`` the
    ``-iH`` term is part of ``A``; otherwise the Hamiltonian is left to the
    exact propagator.
    """
    mx, mp, vx, vp, cxp = _moments(w, sqp, sq2p, occ, occ1, d)
    _coefficients(model, gamma, n_t, k, mx, mp, vx, vp, cxp, coef)
    axx, app, axp, apx = coef[0], coef[1], coef[2], coef[3]
    s2 = math.sqrt(2.0)
    # quadratic forms in the a, a^dag basis
    kaa = (axx - app - 1j * axp - 1j * apx) / 2.0
    kcc = (axx - app + 1j * axp + 1j * apx) / 2.0
    kac = (axx + app + 1j * axp - 1j * apx) / 2.0
    kca = (axx + app - 1j * axp + 1j * apx) / 2.0
    la = (coef[4] - 1j * coef[5]) / s2
    lc = (coef[4] + 1j * coef[5]) / s2
    n1a = (coef[7] - 1j * coef[8]) / s2
    n1c = (coef[7] + 1j * coef[8]) / s2
    n2a = (coef[10] - 1j * coef[11]) / s2
    n2c = (coef[10] + 1j * coef[11]) / s2
    c0, c1, c2 = coef[6], coef[9], coef[12]
    na = 0.0
    nb_ = 0.0
    for j in range(d):
        q = j + 2
        vj = w[q]
        up = sqp[q + 1] * w[q + 1]
        dn = sqp[q] * w[q - 1]
        aval = ((kac * occ1[j] + kca * occ[j] + c0) * vj + la * up + lc * dn
                + kaa * sq2p[q + 2] * w[q + 2] + kcc * sq2p[q] * w[q - 2])
        if euler_h:
            if diag_h:
                aval += -1j * hdiag[j] * vj
            else:
                acc = 0j
                for m in range(d):
                    acc += hmat[j, m] * w[m + 2]
                aval += -1j * acc
        b1 = c1 * vj + n1a * up + n1c * dn
        b2 = c2 * vj + n2a * up + n2c * dn
        av[j] = aval
        b1v[j] = b1
        b2v[j] = b2
        na += aval.real * aval.real + aval.imag * aval.imag
        nb_ += b1.real * b1.real + b1.imag * b1.imag + b2.real * b2.real + b2.imag * b2.imag
    return math.sqrt(na), nb_


@nb.njit(cache=True)
def advance(psi, keys, step0, nsteps, dt, model, gamma, n_t, k,
            euler_h, diag_h, hdiag, hmat, phase_tab, umat_tab,
            refine_tol, max_depth, leak, status, fail_step, refinements):
    """Advance every row of ``psi`` by ``nsteps`` steps in place.

    Rows whose ``status`` is already nonzero are skipped. On failure
    ``status`` gets the reason and ``fail_step`` the absolute index of the
    failing step; the row then holds the last state reached.
    """
    n_traj, d = psi.shape
    # square-root tables on the padded index q = level + 2; zero outside
    sqp = np.zeros(d + 4)
    sq2p = np.zeros(d + 4)
    occ = np.empty(d)
    occ1 = np.empty(d)
    for j in range(d):
        sqp[j + 2] = math.sqrt(j)
        sq2p[j + 2] = math.sqrt(j * (j - 1.0)) if j >= 2 else 0.0
        occ[j] = j
        occ1[j] = j + 1.0 if j < d - 1 else 0.0
    w = np.zeros(d + 4, np.complex128)
    coef = np.empty(13, np.complex128)
    inc = np.empty(d, np.complex128)
    av = np.empty(d, np.complex128)
    b1v = np.empty(d, np.complex128)
    b2v = np.empty(d, np.complex128)
    tmp = np.empty(d, np.complex128)
    depth_cap = min(max_depth, MAX_DEPTH)
    st_h = np.empty(depth_cap + 2)
    st_w1 = np.empty(depth_cap + 2)
    st_w2 = np.empty(depth_cap + 2)
    st_depth = np.empty(depth_cap + 2, np.int64)
    st_node = np.empty(depth_cap + 2, np.int64)
    use_refine = refine_tol > 0.0
    for i in range(n_traj):
        if status[i] != STATUS_OK:
            continue
        for j in range(d):
            w[j + 2] = psi[i, j]
        key = keys[i]
        for s in range(nsteps):
            step = step0[i] + s
            z1, z2 = _normal_pair(key, step, 0)
            sdt = math.sqrt(dt)
            top = 0
            st_h[0] = dt
            st_w1[0] = z1 * sdt
            st_w2[0] = z2 * sdt
            st_depth[0] = 0
            st_node[0] = 1
            bad = STATUS_OK
            while top >= 0:
                h = st_h[top]
                w1 = st_w1[top]
                w2 = st_w2[top]
                depth = st_depth[top]
                node = st_node[top]
                top -= 1
                drift, noise2 = _operator_vectors(w, d, model, gamma, n_t, k, euler_h, diag_h,
                                                  hdiag, hmat, sqp, sq2p, occ, occ1, coef,
                                                  av, b1v, b2v)
                # the decision uses only the current state, never this
                # interval's increment, so accepted steps see unbiased noise
                expected = h * drift + math.sqrt(h * noise2)
                if use_refine and expected > refine_tol and depth < depth_cap:
                    # split along the Brownian bridge; push the later half first
                    b1, b2 = _normal_pair(key, step, node)
                    half = 0.5 * h
                    sh = 0.5 * math.sqrt(h)
                    m1 = 0.5 * w1 + sh * b1
                    m2 = 0.5 * w2 + sh * b2
                    top += 1
                    st_h[top] = half
                    st_w1[top] = w1 - m1
                    st_w2[top] = w2 - m2
                    st_depth[top] = depth + 1
                    st_node[top] = 2 * node + 1
                    top += 1
                    st_h[top] = half
                    st_w1[top] = m1
                    st_w2[top] = m2
                    st_depth[top] = depth + 1
                    st_node[top] = 2 * node
                    refinements[i] += 1
                    continue
                nrm = 0.0
                if euler_h or diag_h:
                    for j in range(d):
                        t = w[j + 2] + av[j] * h + b1v[j] * w1 + b2v[j] * w2
                        if not euler_h:
                            t *= phase_tab[depth, j]
                        tmp[j] = t
                        nrm += t.real * t.real + t.imag * t.imag
                else:
                    for j in range(d):
                        inc[j] = w[j + 2] + av[j] * h + b1v[j] * w1 + b2v[j] * w2
                    for j in range(d):
                        acc = 0j
                        for m in range(d):
                            acc += umat_tab[depth, j, m] * inc[m]
                        tmp[j] = acc
                        nrm += acc.real * acc.real + acc.imag * acc.imag
                nrm = math.sqrt(nrm)
                if not math.isfinite(nrm):
                    bad = STATUS_NONFINITE
                    break
                if nrm < 1e-8:
                    bad = STATUS_DEGENERATE
                    break
                inv = 1.0 / nrm
                for j in range(d):
                    w[j + 2] = tmp[j] * inv
            if bad == STATUS_OK:
                top_amp = w[d + 1]
                if top_amp.real * top_amp.real + top_amp.imag * top_amp.imag > leak:
                    bad = STATUS_LEAKAGE
            if bad != STATUS_OK:
                status[i] = bad
                fail_step[i] = step
                break
        for j in range(d):
            psi[i, j] = w[j + 2]

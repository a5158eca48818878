"""numba-compiled per-sample kernels; imported lazily by :mod:`kernels`."""

import numpy as np
from numba import njit


@njit(cache=True)
def relu_(x):
    return np.maximum(x, 0.0)


@njit(cache=True)
def fwd(Z1, Z2, Z3, Z4, Z5, Z6, Z7, Z8, Z9, Z10, Z11, Z12, Z13, Z14, Z15, Z16, beta, xa, xu, xe):
    N = xa.shape[0]
    M = xu.shape[0]
    E = Z1.shape[0]
    a0 = xa @ Z1.T
    q0a = relu_(a0)
    u0 = xu @ Z2.T
    q0u = relu_(u0)
    e0 = np.empty((N, M, E))
    ee = np.empty((N, M, E))
    for n in range(N):
        e0[n] = xe[n] @ Z3.T
        ee[n] = relu_(e0[n])
    A6 = q0a @ Z6.T
    U5 = q0u @ Z5.T
    p1 = np.empty((N, M, E))
    s1 = np.zeros((N, E))
    for n in range(N):
        p1[n] = ee[n] @ Z4.T
        for m in range(M):
            for k in range(E):
                v = p1[n, m, k] + A6[n, k] + U5[m, k]
                p1[n, m, k] = v
                if v > 0.0:
                    s1[n, k] += v
    p2 = q0a @ Z8.T + s1 @ Z7.T
    h1 = relu_(p2)
    q1a = h1 @ Z9.T
    U12 = q0u @ Z12.T
    A11 = q1a @ Z11.T
    p3 = np.empty((N, M, E))
    s3 = np.zeros((M, E))
    for n in range(N):
        p3[n] = ee[n] @ Z10.T
        for m in range(M):
            for k in range(E):
                v = p3[n, m, k] + U12[m, k] + A11[n, k]
                p3[n, m, k] = v
                if v > 0.0:
                    s3[m, k] += v
    p4 = q0u @ Z14.T + s3 @ Z13.T
    h4 = relu_(p4)
    q2u = h4 @ Z15.T
    p5 = q2u @ Z16.T
    r = relu_(p5)
    logit = 0.0
    for m in range(M):
        logit += r[m] @ beta
    logit /= M
    return logit, a0, q0a, u0, q0u, e0, ee, p1, s1, p2, h1, q1a, p3, s3, p4, h4, q2u, p5, r


@njit(cache=True)
def logits_nb(Z1, Z2, Z3, Z4, Z5, Z6, Z7, Z8, Z9, Z10, Z11, Z12, Z13, Z14, Z15, Z16, beta, xa, xu, xe):
    S = xa.shape[0]
    out = np.empty(S)
    for s in range(S):
        out[s] = fwd(
            Z1, Z2, Z3, Z4, Z5, Z6, Z7, Z8, Z9, Z10, Z11, Z12, Z13, Z14, Z15, Z16, beta, xa[s], xu[s], xe[s]
        )[0]
    return out


@njit(cache=True)
def step(x):
    return (x > 0.0).astype(np.float64)


@njit(cache=True)
def loss_grad_nb(
    Z1, Z2, Z3, Z4, Z5, Z6, Z7, Z8, Z9, Z10, Z11, Z12, Z13, Z14, Z15, Z16, beta, xa, xu, xe, y, w, g
):
    """Accumulates the gradient into the flat buffer ``g`` (storage order of the parameters)."""
    S = xa.shape[0]
    N = xa.shape[1]
    M = xu.shape[1]
    E = Z1.shape[0]
    sizes = (E * xa.shape[2], E * xu.shape[2], E * xe.shape[3])
    G0 = g[0 : sizes[0]].reshape(E, xa.shape[2])
    G1 = g[sizes[0] : sizes[0] + sizes[1]].reshape(E, xu.shape[2])
    k = sizes[0] + sizes[1]
    G2 = g[k : k + sizes[2]].reshape(E, xe.shape[3])
    k += sizes[2]
    sq = g[k : k + 13 * E * E].reshape(13, E, E)
    G16 = g[k + 13 * E * E : k + 13 * E * E + E]
    total = 0.0
    for s in range(S):
        (logit, a0, q0a, u0, q0u, e0, ee, p1, s1, p2, h1, q1a, p3, s3, p4, h4, q2u, p5, r) = fwd(
            Z1, Z2, Z3, Z4, Z5, Z6, Z7, Z8, Z9, Z10, Z11, Z12, Z13, Z14, Z15, Z16, beta, xa[s], xu[s], xe[s]
        )
        pi = 0.5 * (1.0 + np.tanh(0.5 * logit))
        pi = min(max(pi, 1e-12), 1.0 - 1e-12)
        total += w[s] * -(y[s] * np.log(pi) + (1.0 - y[s]) * np.log(1.0 - pi))
        d = w[s] * (pi - y[s]) / M
        # readout
        dp5 = np.empty((M, E))
        for m in range(M):
            G16 += d * r[m]
            dp5[m] = d * beta * step(p5[m])
        sq[12] += dp5.T @ q2u
        dq2u = dp5 @ Z16
        sq[11] += dq2u.T @ h4
        dp4 = (dq2u @ Z15) * step(p4)
        sq[10] += dp4.T @ q0u
        dq0u = dp4 @ Z14
        sq[9] += dp4.T @ s3
        ds3 = dp4 @ Z13
        # user update
        dp3_m = np.zeros((M, E))
        dp3_n = np.zeros((N, E))
        dee = np.zeros((N, M, E))
        for n in range(N):
            dp3 = ds3 * step(p3[n])
            dp3_m += dp3
            for m in range(M):
                dp3_n[n] += dp3[m]
            sq[6] += dp3.T @ ee[n]
            dee[n] = dp3 @ Z10
        sq[8] += dp3_m.T @ q0u
        dq0u += dp3_m @ Z12
        sq[7] += dp3_n.T @ q1a
        dq1a = dp3_n @ Z11
        sq[5] += dq1a.T @ h1
        dp2 = (dq1a @ Z9) * step(p2)
        sq[4] += dp2.T @ q0a
        dq0a = dp2 @ Z8
        sq[3] += dp2.T @ s1
        ds1 = dp2 @ Z7
        # antenna update
        dp1_m = np.zeros((M, E))
        dp1_n = np.zeros((N, E))
        for n in range(N):
            dp1 = np.empty((M, E))
            for m in range(M):
                dp1[m] = ds1[n] * step(p1[n, m])
                dp1_n[n] += dp1[m]
            dp1_m += dp1
            sq[0] += dp1.T @ ee[n]
            dee[n] += dp1 @ Z4
        sq[2] += dp1_n.T @ q0a
        dq0a += dp1_n @ Z6
        sq[1] += dp1_m.T @ q0u
        dq0u += dp1_m @ Z5
        for n in range(N):
            de0 = dee[n] * step(e0[n])
            G2 += de0.T @ xe[s, n]
        G1 += (dq0u * step(u0)).T @ xu[s]
        G0 += (dq0a * step(a0)).T @ xa[s]
    return total

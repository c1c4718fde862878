"""Independent reference computations used to freeze expected test values.

Everything here deliberately avoids the package's grid steppers: matrix
exponentials, exhaustive path sums and closed-form densities only.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def ou_stationary(x: np.ndarray, gamma: float, sigma2: float) -> np.ndarray:
    """Stationary density of dx = -gamma x dt + sigma dW (sigma2 = sigma^2)."""
    var = sigma2 / (2.0 * gamma)
    return np.exp(-(x**2) / (2 * var)) / np.sqrt(2 * np.pi * var)


def two_state_rate_matrix(r01: float, r10: float) -> np.ndarray:
    """Generator Q with Q[i, j] = rate j -> i, columns summing to zero."""
    return np.array([[-r01, r10], [r01, -r10]])


def exact_jump_occupation(Q: np.ndarray, p0: np.ndarray, t: float) -> np.ndarray:
    return scipy.linalg.expm(Q * t) @ p0


def exact_poisson_smoother(Q, lam, prior, counts, dt, with_clicks_exact=True):
    """Exact continuous-time filter/smoother for a finite-state chain.

    Observation model: one Poisson channel of intensity lam[x]; the record is
    a list of 0/1 increments per step, a click meaning one event inside that
    step (placed at the step start). Between clicks the unnormalized forward
    density obeys df/dt = (Q - diag(lam)) f and the backward likelihood
    dg/dt = -(Q^T - diag(lam)) g; a click multiplies by diag(lam).

    Returns (filter_marginals, smooth_marginals), arrays of shape
    (n_steps + 1, n_states) of normalized posteriors at the mesh times.
    """
    counts = np.asarray(counts).ravel()
    n = counts.size
    lam = np.asarray(lam, dtype=float)
    Lam = np.diag(lam)
    A_f = scipy.linalg.expm((Q - Lam) * dt)
    A_b = scipy.linalg.expm((Q - Lam).T * dt)

    f = np.asarray(prior, dtype=float).copy()
    fs = [f.copy()]
    for k in range(n):
        if counts[k]:
            f = Lam @ f
        f = A_f @ f
        f /= f.sum()
        fs.append(f.copy())
    fs = np.asarray(fs)

    g = np.ones_like(lam)
    gs = [g.copy()]
    for k in range(n - 1, -1, -1):
        g = A_b @ g
        if counts[k]:
            g = Lam @ g
        g /= g.sum()
        gs.append(g.copy())
    gs = np.asarray(gs[::-1])

    smooth = fs * gs
    smooth /= smooth.sum(axis=1, keepdims=True)
    filt = fs / fs.sum(axis=1, keepdims=True)
    return filt, smooth


def enumerate_poisson_posteriors(Q, lam, prior, counts, dt):
    """Exhaustive path-sum Bayes posterior for a finite-state chain.

    Paths live on the step mesh; transitions use the exact expm(Q dt) kernel
    and each step contributes a Bernoulli likelihood lambda(x_k) dt or
    1 - lambda(x_k) dt evaluated at the step start state. Returns the
    (n_steps + 1, n_states) smoothing posterior over mesh states; feasible
    only for short records.
    """
    counts = np.asarray(counts).ravel()
    n_steps = counts.size
    n_states = len(prior)
    T = scipy.linalg.expm(Q * dt)  # T[i, j] = P(next = i | current = j)
    lam = np.asarray(lam, dtype=float)

    paths = np.array(
        np.meshgrid(*([np.arange(n_states)] * (n_steps + 1)), indexing="ij")
    ).reshape(n_steps + 1, -1)
    w = np.asarray(prior, dtype=float)[paths[0]]
    for k in range(n_steps):
        like = lam[paths[k]] * dt if counts[k] else 1.0 - lam[paths[k]] * dt
        w = w * like * T[paths[k + 1], paths[k]]
    post = np.zeros((n_steps + 1, n_states))
    for k in range(n_steps + 1):
        for s in range(n_states):
            post[k, s] = w[paths[k] == s].sum()
    return post / post.sum(axis=1, keepdims=True)


def unitary_propagate(H: np.ndarray, rho0: np.ndarray, t: float) -> np.ndarray:
    U = scipy.linalg.expm(-1j * H * t)
    return U @ rho0 @ U.conj().T


def lindblad_propagate(H, lindblads, rho0, t, steps=4000):
    """Dense RK4 integration of a Lindblad master equation (reference only)."""
    rho = np.asarray(rho0, dtype=complex).copy()
    dt = t / steps

    def rhs(r):
        out = -1j * (H @ r - r @ H)
        for L in lindblads:
            LdL = L.conj().T @ L
            out += L @ r @ L.conj().T - 0.5 * (LdL @ r + r @ LdL)
        return out

    for _ in range(steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return rho


def enumerate_hybrid_paths(
    b_values, Qb, prior_b, rho0, hamiltonian_of_b, jump_ops, counts, dt
):
    """Exhaustive classical-path oracle for a hybrid filter/smoother.

    For each classical path b_0..b_K on the step mesh, the quantum state is
    propagated exactly: per step, the unitary exp(-i H(b_k) dt), then per
    channel either the exact no-click factor expm(-L^dag L dt / 2) or the
    click operator L (the sqrt(dt) scale is path-independent and drops out).
    Classical transitions use expm(Qb dt). Returns the (K + 1, n_b) smoothing
    posterior over b at mesh times given the whole record.
    """
    counts = np.asarray(counts)
    K = counts.shape[0]
    nb = len(b_values)
    Tb = scipy.linalg.expm(np.asarray(Qb, dtype=float) * dt)
    Us = [scipy.linalg.expm(-1j * hamiltonian_of_b(b) * dt) for b in b_values]
    M0 = []
    for L in jump_ops:
        LdL = L.conj().T @ L
        M0.append(scipy.linalg.expm(-0.5 * LdL * dt))

    # grow all classical paths step by step, carrying conditioned matrices
    paths = np.arange(nb)[:, None]  # (n_paths, time)
    weights = np.asarray(prior_b, dtype=float).copy()
    mats = np.stack([rho0.astype(complex)] * nb)
    for k in range(K):
        cur = paths[:, -1]
        for i, b in enumerate(b_values):
            sel = cur == i
            if not np.any(sel):
                continue
            U = Us[i]
            m = U @ mats[sel] @ U.conj().T
            for mu, L in enumerate(jump_ops):
                op = L if counts[k, mu] else M0[mu]
                m = op @ m @ op.conj().T
            mats[sel] = m
        # branch on the next classical state
        paths = np.concatenate(
            [np.hstack([paths, np.full((paths.shape[0], 1), j)]) for j in range(nb)]
        )
        weights = np.concatenate([weights * Tb[j, cur] for j in range(nb)])
        mats = np.concatenate([mats] * nb)

    traces = np.einsum("pii->p", mats).real
    w = weights * traces
    post = np.zeros((K + 1, nb))
    for k in range(K + 1):
        for s in range(nb):
            post[k, s] = w[paths[:, k] == s].sum()
    return post / post.sum(axis=1, keepdims=True)

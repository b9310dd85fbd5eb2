"""Independent reference computations used only by the tests.

They work on the truncated generator matrix with dense linear algebra and
share no code with the log-domain series in the package.
"""
import numpy as np


def rates(lam, mu, theta, i):
    return lam * i, mu * i + theta * i * (i - 1)


def absorption_times(lam, mu, theta, N):
    """Mean time to hit 0 from 1..N on the chain reflected at N (first-step analysis)."""
    A = np.zeros((N, N))
    b = np.ones(N)
    for i in range(1, N + 1):
        up, down = rates(lam, mu, theta, i)
        if i == N:
            up = 0.0
        r = i - 1
        A[r, r] = up + down
        if i > 1:
            A[r, r - 1] = -down
        if i < N:
            A[r, r + 1] = -up
    return np.linalg.solve(A, b)  # entry i-1 is E_i(tau)


def hit_upper_prob(lam, mu, theta, lower, upper):
    """P_i(hit upper before lower) for lower < i < upper."""
    n = upper - lower - 1
    A = np.zeros((n, n))
    b = np.zeros(n)
    for idx, i in enumerate(range(lower + 1, upper)):
        up, down = rates(lam, mu, theta, i)
        A[idx, idx] = up + down
        if idx > 0:
            A[idx, idx - 1] = -down
        if idx < n - 1:
            A[idx, idx + 1] = -up
        else:
            b[idx] = up
    return dict(zip(range(lower + 1, upper), np.linalg.solve(A, b)))


def conditional_passage_time(lam, mu, theta, start, target, avoid):
    """E_start(time to target | target before avoid), target and avoid on either side."""
    lo, hi = min(target, avoid), max(target, avoid)
    states = list(range(lo + 1, hi))
    n = len(states)
    A = np.zeros((n, n))
    b_h = np.zeros(n)
    for idx, i in enumerate(states):
        up, down = rates(lam, mu, theta, i)
        A[idx, idx] = up + down
        if idx > 0:
            A[idx, idx - 1] = -down
        if idx < n - 1:
            A[idx, idx + 1] = -up
        if i + 1 == target:
            b_h[idx] += up
        if i - 1 == target:
            b_h[idx] += down
    h = np.linalg.solve(A, b_h)
    # g = E[T 1{success}] solves A g = h
    g = np.linalg.solve(A, h)
    k = states.index(start)
    return g[k] / h[k]

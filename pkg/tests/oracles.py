"""Independent reference computations used by the test-suite.

Nothing here imports the package's solver or fitting code.
"""

import numpy as np


def project_box_hyperplane(v, y, C, iters=60):
    """Euclidean projection of v onto {0 <= a <= C, y.a = 0} by bisection on the multiplier."""
    lo, hi = -np.abs(v).max() - C - 1.0, np.abs(v).max() + C + 1.0

    def g(lam):
        return y @ np.clip(v - lam * y, 0.0, C)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi) * y, 0.0, C)


def dual_qp_projected_gradient(K, y, C, iters=20000):
    """Maximise sum(a) - 1/2 a'Qa over the SVM dual feasible set with accelerated projected gradient."""
    y = np.asarray(y, dtype=float)
    Q = (y[:, None] * y[None, :]) * K
    L = max(np.linalg.eigvalsh(Q).max(), 1e-12)
    step = 1.0 / L
    a = np.zeros(len(y))
    z = a.copy()
    t = 1.0
    for _ in range(iters):
        grad = 1.0 - Q @ z
        a_new = project_box_hyperplane(z + step * grad, y, C)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = a_new + ((t - 1) / t_new) * (a_new - a)
        a, t = a_new, t_new
        # stop on the plain projected-gradient residual; FISTA iterates can stall at box corners
        pg = project_box_hyperplane(a + step * (1.0 - Q @ a), y, C)
        if np.max(np.abs(pg - a)) < 1e-12:
            break
    return a, float(a.sum() - 0.5 * a @ Q @ a)


def rbf_gram(A, B, gamma):
    d = A[:, None, :] - B[None, :, :]
    return np.exp(-gamma * (d ** 2).sum(-1))


def majority_vote(bits, K):
    """Majority vote over OvO bits (pairs i<j lexicographic), lowest index wins ties."""
    votes = [0] * K
    k = 0
    for i in range(K):
        for j in range(i + 1, K):
            votes[j if bits[k] else i] += 1
            k += 1
    best = max(votes)
    return votes.index(best)


def nrmse(ref, approx):
    ref = np.asarray(ref, dtype=float)
    approx = np.asarray(approx, dtype=float)
    return float(np.sqrt(np.mean((ref - approx) ** 2)) / (ref.max() - ref.min()))

"""Independent reference implementations used only by the tests.

They favour literal loops and dense linear algebra over speed, and share no
code with the package beyond plain numpy.
"""
import itertools

import numpy as np


def full_from_unique(m, n, values):
    full = np.zeros((n,) * m)
    pos = 0
    for idx in itertools.combinations_with_replacement(range(n), m):
        for perm in set(itertools.permutations(idx)):
            full[perm] = values[pos]
        pos += 1
    return full


def brute_volterra(fulls, u):
    """Literal sum over every lag tuple of every full kernel tensor."""
    u = np.asarray(u, dtype=float)
    y = np.zeros(u.size)
    for full in fulls:
        m, n = full.ndim, full.shape[0]
        for k in range(u.size):
            for lags in itertools.product(range(n), repeat=m):
                term = full[lags]
                for t in lags:
                    term *= u[k - t] if k - t >= 0 else 0.0
                y[k] += term
    return y


def recursion(num, den, x):
    """Direct-form difference equation, one sample at a time."""
    y = np.zeros(len(x))
    for k in range(len(x)):
        acc = sum(num[i] * x[k - i] for i in range(len(num)) if k - i >= 0)
        acc -= sum(den[i] * y[k - i] for i in range(1, len(den)) if k - i >= 0)
        y[k] = acc / den[0]
    return y


def _impulse(L):
    x = np.zeros(L)
    x[0] = 1.0
    return x


def laguerre_product_form(a, i, L):
    """Laguerre function ``i`` as one rational transfer function in z^-1."""
    num = np.sqrt(1 - a * a) * np.array([0.0, 1.0])
    den = np.array([1.0, -a])
    for _ in range(i - 1):
        num = np.convolve(num, [-a, 1.0])
        den = np.convolve(den, [1.0, -a])
    return recursion(num, den, _impulse(L))


def kautz_product_form(b, c, i, L):
    d = np.array([1.0, b * (c - 1.0), -c])
    allpass = np.array([-c, b * (c - 1.0), 1.0])
    k = (i + 1) // 2
    if i % 2:
        num = np.sqrt(1 - c * c) * np.array([0.0, 1.0, -b])
    else:
        num = np.sqrt((1 - c * c) * (1 - b * b)) * np.array([0.0, 0.0, 1.0])
    den = d.copy()
    for _ in range(k - 1):
        num = np.convolve(num, allpass)
        den = np.convolve(den, d)
    return recursion(num, den, _impulse(L))


def tc_literal(beta, lam, coords):
    n = len(coords)
    P = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            P[x, y] = beta * lam ** max(coords[x], coords[y])
    return P


def penalty_literal(m, n, beta, lams, directions):
    idx = list(itertools.combinations_with_replacement(range(n), m))
    P = np.zeros((len(idx), len(idx)))
    for a, ia in enumerate(idx):
        for b, ib in enumerate(idx):
            val = beta
            for lam, v in zip(lams, directions):
                xa = abs(sum(t * w for t, w in zip(ia, v)))
                xb = abs(sum(t * w for t, w in zip(ib, v)))
                val *= lam ** max(xa, xb)
            P[a, b] = val
    return P


def dense_ml_cost(Phi, Y, P, s2):
    S = Phi @ P @ Phi.T + s2 * np.eye(len(Y))
    sign, logdet = np.linalg.slogdet(S)
    assert sign > 0
    return float(Y @ np.linalg.inv(S) @ Y + logdet)


def posterior_mean(Phi, Y, P, s2):
    S = Phi @ P @ Phi.T + s2 * np.eye(len(Y))
    return P @ Phi.T @ np.linalg.solve(S, Y)


def dual_form(Phi, Y, P, s2):
    return np.linalg.inv(Phi.T @ Phi / s2 + np.linalg.inv(P)) @ Phi.T @ Y / s2


def normal_equations(Phi, Y):
    return np.linalg.inv(Phi.T @ Phi) @ Phi.T @ Y


def laguerre_exact_unscaled(a_num, a_den, i, L):
    """Laguerre function ``i`` without its sqrt(1 - a^2) gain, in exact rationals."""
    from fractions import Fraction

    a = Fraction(a_num, a_den)
    num, den = [Fraction(0), Fraction(1)], [Fraction(1), -a]
    for _ in range(i - 1):
        num = list(np.convolve(np.array(num, dtype=object), np.array([-a, Fraction(1)], dtype=object)))
        den = list(np.convolve(np.array(den, dtype=object), np.array([Fraction(1), -a], dtype=object)))
    x = [Fraction(1)] + [Fraction(0)] * (L - 1)
    y = []
    for k in range(L):
        acc = sum(num[j] * x[k - j] for j in range(len(num)) if k - j >= 0)
        acc -= sum(den[j] * y[k - j] for j in range(1, len(den)) if k - j >= 0)
        y.append(acc)
    return np.array([float(v) for v in y])

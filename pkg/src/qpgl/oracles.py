"""Slow, independent reference implementations used to cross-check the fast paths.

Nothing here shares code with the production routines beyond plain numpy
array handling: the inverse is textbook Gauss-Jordan elimination, the
resonance test is a Python loop over the cube, and so on.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def gauss_jordan_inverse(A) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting."""
    A = np.array(A, dtype=complex if np.iscomplexobj(A) else float)
    n = A.shape[0]
    aug = np.hstack([A, np.eye(n, dtype=A.dtype)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[piv, col] == 0:
            raise ZeroDivisionError("matrix is singular")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        factors = aug[:, col].copy()
        factors[col] = 0
        aug -= np.outer(factors, aug[col])
    return aug[:, n:]


def dense_dual_matrix(points, Theta, omega, blocks, eps, coeffs: dict) -> np.ndarray:
    """h_L(Theta) entry by entry from a coefficient dictionary."""
    pts = [tuple(int(v) for v in p) for p in points]
    n = len(pts)
    H = np.zeros((n, n), dtype=complex)
    for i, p in enumerate(pts):
        for j, q in enumerate(pts):
            if i == j:
                H[i, i] = symbol_loop(Theta, p, omega, blocks)
            else:
                diff = tuple(a - c for a, c in zip(p, q))
                H[i, j] = eps * coeffs.get(diff, 0.0)
    return H


def symbol_loop(Theta, k, omega, blocks) -> float:
    """Diagonal symbol by explicit loops over blocks."""
    total, pos = 0.0, 0
    for i, bi in enumerate(blocks):
        s = float(Theta[i])
        for _ in range(bi):
            s += k[pos] * omega[pos]
            pos += 1
        total += s * s
    return total


def resonance_loop(Theta, E, delta, N, omega, blocks):
    """First k (lexicographic) in [-N, N]^b with |symbol - E| < delta, else None."""
    b = sum(blocks)
    for k in itertools.product(range(-N, N + 1), repeat=b):
        if abs(symbol_loop(Theta, k, omega, blocks) - E) < delta:
            return k
    return None


def trig_evaluate(coeffs: dict, theta) -> float:
    """V(theta) written as a cosine/sine series over the half-space of indices."""
    total = 0.0
    for k, v in coeffs.items():
        phase = sum(a * t for a, t in zip(k, theta))
        total += v.real * math.cos(phase) - v.imag * math.sin(phase)
    return total


def monte_carlo_section(j, Theta_rest, E, delta, N, omega, blocks, lo, hi, samples, rng):
    """Estimate of the section measure on [lo, hi] with its standard error."""
    u = rng.uniform(lo, hi, size=samples)
    hit = np.zeros(samples, dtype=bool)
    d = len(blocks)
    starts = np.concatenate([[0], np.cumsum(blocks)])
    Theta_rest = list(Theta_rest)
    for k in itertools.product(range(-N, N + 1), repeat=sum(blocks)):
        total = np.zeros(samples)
        r = 0
        for i in range(d):
            dot = sum(k[p] * omega[p] for p in range(starts[i], starts[i + 1]))
            if i == j:
                total += (u + dot) ** 2
            else:
                total += (Theta_rest[r] + dot) ** 2
                r += 1
        hit |= np.abs(total - E) < delta
    p = hit.mean()
    width = hi - lo
    return p * width, math.sqrt(p * (1 - p) / samples) * width

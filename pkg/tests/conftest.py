"""Shared independent oracles for the test suite.

These deliberately avoid the library's own transform and solver code paths:
the DFT oracles are direct summations and the convolution oracle is explicit
index arithmetic, so agreement is evidence rather than tautology.
"""

import numpy as np


def naive_dft1(x):
    """O(N^2) direct-summation DFT."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    k = np.arange(n)
    return (x[None, :] * np.exp(-2j * np.pi * np.outer(k, k) / n)).sum(axis=1)


def naive_dft2(plane):
    """O(N^4) double-sum 2D DFT of one channel."""
    plane = np.asarray(plane, dtype=np.complex128)
    i1, i2 = plane.shape
    out = np.zeros((i1, i2), dtype=np.complex128)
    for k1 in range(i1):
        for k2 in range(i2):
            total = 0.0j
            for n1 in range(i1):
                for n2 in range(i2):
                    total += plane[n1, n2] * np.exp(
                        -2j * np.pi * (n1 * k1 / i1 + n2 * k2 / i2)
                    )
            out[k1, k2] = total
    return out


def naive_circular_conv2(plane, taps, dilation=1):
    """Direct circular summation with centered taps."""
    plane = np.asarray(plane, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    i1, i2 = plane.shape
    h1 = (taps.shape[0] - 1) // 2
    h2 = (taps.shape[1] - 1) // 2
    out = np.zeros_like(plane)
    for a in range(i1):
        for b in range(i2):
            total = 0.0
            for k1 in range(taps.shape[0]):
                for k2 in range(taps.shape[1]):
                    p1 = dilation * (k1 - h1)
                    p2 = dilation * (k2 - h2)
                    total += taps[k1, k2] * plane[(a - p1) % i1, (b - p2) % i2]
            out[a, b] = total
    return out

"""Length-3 autoregressive factors: stability, re-parameterization, and
separable 2D composition.

A length-3 factor ``(fm1, f0, fp1)`` acts on a sequence as the convolution
constraint ``fm1*y[i+1] + f0*y[i] + fp1*y[i-1] = x[i]``.  Solving for ``y``
is a bounded operation exactly when the zeros of the characteristic
polynomial ``fm1*z^2 + f0*z + fp1`` straddle the unit circle, which for real
taps reduces to the strict inequality ``|fm1 + fp1| < f0``.

The unconstrained parameterization maps any ``(alpha, beta)`` pair into that
open stability region by routing the constrained coordinate (the tap sum)
through ``tanh``:

    fm1 + fp1 = f0 * tanh(beta)        (bounded)
    fp1 - fm1 = f0 * alpha             (free)

so gradient descent can never step outside the stable set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class Length3Filter:
    """Three-tap 1D autoregressive factor.

    ``fm1``/``fp1`` are the taps at offsets -1/+1 and ``f0`` the center tap,
    which is expected to be positive.
    """

    fm1: float
    f0: float
    fp1: float

    def taps(self) -> np.ndarray:
        """Taps ordered by offset: ``[-1, 0, +1]``."""
        return np.array([self.fm1, self.f0, self.fp1], dtype=np.float64)

    @property
    def tap_sum(self) -> float:
        return self.fm1 + self.fp1


IDENTITY_FILTER = Length3Filter(0.0, 1.0, 0.0)


@dataclass(frozen=True)
class ReparamFilter:
    """Unconstrained ``(alpha, beta)`` coordinates of a stable length-3 factor.

    ``f0`` is fixed to 1 by default; the overall scale of an ARMA layer can be
    absorbed by its moving-average kernel.
    """

    alpha: float
    beta: float
    f0: float = 1.0


def materialize(p: ReparamFilter) -> Length3Filter:
    """Map unconstrained ``(alpha, beta)`` onto a stable filter.

    ``fm1 = (f0/2) * (tanh(beta) - alpha)`` and
    ``fp1 = (f0/2) * (tanh(beta) + alpha)``, hence
    ``fm1 + fp1 = f0 * tanh(beta)`` with magnitude strictly below ``f0`` for
    every finite ``beta``: the result always passes :func:`is_stable`.
    """
    bounded_sum = p.f0 * math.tanh(p.beta)
    free_diff = p.f0 * p.alpha
    return Length3Filter(
        0.5 * (bounded_sum - free_diff), p.f0, 0.5 * (bounded_sum + free_diff)
    )


def reparam_gradient(p: ReparamFilter, d_taps: Tuple[float, float]) -> Tuple[float, float]:
    """Chain a gradient w.r.t. ``(fm1, fp1)`` back to ``(alpha, beta)``.

    ``d_taps`` is ``(d_fm1, d_fp1)``.  Note ``d_beta`` carries the ``tanh``
    saturation factor ``1 - tanh(beta)^2`` and vanishes for large ``|beta|``.
    """
    d_fm1, d_fp1 = d_taps
    d_alpha = 0.5 * p.f0 * (d_fp1 - d_fm1)
    d_beta = 0.5 * p.f0 * (1.0 - math.tanh(p.beta) ** 2) * (d_fm1 + d_fp1)
    return d_alpha, d_beta


def is_stable(f: Length3Filter) -> bool:
    """Strict stability test ``|fm1 + fp1| < f0``.

    Equivalent to the zeros of ``fm1*z^2 + f0*z + fp1`` straddling the unit
    circle, so the inverse filter's region of convergence contains it.
    """
    if f.f0 <= 0:
        raise ValueError(f"center tap must be positive, got f0={f.f0}")
    return abs(f.fm1 + f.fp1) < f.f0


@dataclass(frozen=True)
class FilterZeros:
    """Zeros of ``fm1*z^2 + f0*z + fp1`` ordered by modulus ``|z1| <= |z2|``.

    For a degenerate quadratic (``fm1 == 0``) only ``z1`` is finite and ``z2``
    is set to complex infinity, consistent with the vanishing leading
    coefficient.
    """

    z1: complex
    z2: complex

    def moduli(self) -> Tuple[float, float]:
        return abs(self.z1), abs(self.z2)

    def straddle_unit_circle(self) -> bool:
        """True iff ``|z1| < 1 < |z2|``, the bounded-solve condition."""
        return abs(self.z1) < 1.0 < abs(self.z2)


def zeros_of(f: Length3Filter) -> FilterZeros:
    """Solve ``fm1*z^2 + f0*z + fp1 = 0``.

    With ``fm1 == 0`` the polynomial is linear: the single zero is
    ``-fp1/f0`` and the second is reported as infinite (so the straddle test
    reduces to ``|fp1| < f0``, matching :func:`is_stable` in that limit).
    """
    if f.fm1 == 0.0:
        if f.f0 == 0.0:
            raise ValueError("filter with fm1 = f0 = 0 has no zeros")
        return FilterZeros(complex(-f.fp1 / f.f0), complex(np.inf))
    roots = np.roots([f.fm1, f.f0, f.fp1])
    z1, z2 = sorted(roots, key=abs)
    return FilterZeros(complex(z1), complex(z2))


def compose_1d(filters: Sequence[Length3Filter]) -> np.ndarray:
    """Convolve a cascade of length-3 factors into one tap array.

    Returns ``2Q + 1`` taps indexed from offset ``-Q`` to ``+Q``.
    """
    if len(filters) < 1:
        raise ValueError("need at least one factor")
    taps = np.array([1.0])
    for f in filters:
        taps = np.convolve(taps, f.taps())
    return taps


@dataclass(eq=False)
class SeparableArKernel:
    """Per-channel separable autoregressive kernel.

    Each channel's 2D kernel is the outer product of two composed 1D cascades
    (``Q`` length-3 factors along each axis).  When built through
    :meth:`from_reparam` the generating ``(alpha, beta)`` parameters are kept
    alongside the materialized factors so gradients can be chained back to
    them; kernels built from raw factors carry no parameters and no stability
    guarantee.
    """

    f_filters: Tuple[Tuple[Length3Filter, ...], ...]
    g_filters: Tuple[Tuple[Length3Filter, ...], ...]
    f_params: Optional[Tuple[Tuple[ReparamFilter, ...], ...]] = None
    g_params: Optional[Tuple[Tuple[ReparamFilter, ...], ...]] = None

    def __post_init__(self):
        self.f_filters = tuple(tuple(row) for row in self.f_filters)
        self.g_filters = tuple(tuple(row) for row in self.g_filters)
        if len(self.f_filters) != len(self.g_filters):
            raise ValueError("f and g must have the same channel count")
        if len(self.f_filters) < 1:
            raise ValueError("kernel needs at least one channel")
        depths = {len(row) for row in self.f_filters} | {len(row) for row in self.g_filters}
        if len(depths) != 1 or min(depths) < 1:
            raise ValueError(f"all channels must share one cascade depth >= 1, got {depths}")

    @property
    def channels(self) -> int:
        return len(self.f_filters)

    @property
    def depth(self) -> int:
        return len(self.f_filters[0])

    @property
    def is_reparam(self) -> bool:
        return self.f_params is not None

    @classmethod
    def from_reparam(cls, f_params, g_params) -> "SeparableArKernel":
        """Build from per-channel sequences of :class:`ReparamFilter`."""
        f_params = tuple(tuple(row) for row in f_params)
        g_params = tuple(tuple(row) for row in g_params)
        return cls(
            f_filters=tuple(tuple(materialize(p) for p in row) for row in f_params),
            g_filters=tuple(tuple(materialize(p) for p in row) for row in g_params),
            f_params=f_params,
            g_params=g_params,
        )

    @classmethod
    def from_arrays(cls, alpha_f, beta_f, alpha_g, beta_g) -> "SeparableArKernel":
        """Build from four ``(channels, depth)`` arrays of reparam coordinates."""
        alpha_f, beta_f, alpha_g, beta_g = (
            np.atleast_2d(np.asarray(a, dtype=np.float64))
            for a in (alpha_f, beta_f, alpha_g, beta_g)
        )
        if not (alpha_f.shape == beta_f.shape == alpha_g.shape == beta_g.shape):
            raise ValueError("parameter arrays must share one (channels, depth) shape")
        f_params = [
            [ReparamFilter(alpha_f[t, q], beta_f[t, q]) for q in range(alpha_f.shape[1])]
            for t in range(alpha_f.shape[0])
        ]
        g_params = [
            [ReparamFilter(alpha_g[t, q], beta_g[t, q]) for q in range(alpha_g.shape[1])]
            for t in range(alpha_g.shape[0])
        ]
        return cls.from_reparam(f_params, g_params)

    @classmethod
    def identity(cls, channels: int, depth: int = 1) -> "SeparableArKernel":
        """Kernel whose every factor is the identity (a centered delta).

        Built at the origin of the re-parameterization, so it is a valid
        starting point for gradient descent.
        """
        zeros = np.zeros((channels, depth))
        return cls.from_arrays(zeros, zeros, zeros, zeros)


def materialize_2d(kernel: SeparableArKernel, channel: int) -> np.ndarray:
    """Materialize one channel's 2D taps, a ``(2Q+1) x (2Q+1)`` array.

    The ``f`` cascade runs along the horizontal (column) axis and ``g`` along
    the vertical (row) axis, so entry ``(p1, p2)`` equals ``G[p1] * F[p2]``
    exactly.
    """
    if not 0 <= channel < kernel.channels:
        raise ValueError(f"channel {channel} out of range [0, {kernel.channels})")
    f_taps = compose_1d(kernel.f_filters[channel])
    g_taps = compose_1d(kernel.g_filters[channel])
    return np.outer(g_taps, f_taps)

"""Effective-receptive-field analysis for linear ARMA networks.

The effective receptive field (ERF) of a network is the normalized
distribution of output-to-input gradient magnitudes; its spread measures how
far an input pixel substantially influences an output.  For a linear network
of layers

    y[i] - a * y[i-1] = sum_{p=0}^{K-1} ((1-a)/K) * x[i - d*p]

(uniform moving-average taps with count ``K`` and dilation ``d``, one
autoregressive coefficient ``0 <= a < 1``), the squared ERF radius has the
closed form

    sum over layers of  d^2 (K^2 - 1) / 12  +  a / (1 - a)^2

This module provides that analytic radius, the moment machinery behind it, a
truncated-series oracle (the layer's exact infinite-tap equivalent filter cut
at a mass threshold), and empirical gradient-map ERFs computed by running
actual backward passes of ARMA layers on a grid.

Offset convention: ERF offsets are input position minus output position, so a
purely causal network has its mass at non-positive offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .arma import LayerCache, ar_backward, ar_spectra, ma_backward_input
from .filters import Length3Filter, SeparableArKernel
from .numerics import FieldTensor, MaKernel

#: Mass threshold for truncating the geometric inverse filter.
DEFAULT_TRUNCATION = 1e-12

#: An empirical 2D map is refused when more than this much of the composed
#: filter's mass cannot be represented on the grid without wrapping.
DEFAULT_WRAP_TOLERANCE = 1e-6


class WraparoundError(ValueError):
    """The requested grid is too small to hold the gradient map faithfully."""


@dataclass(frozen=True)
class LayerSpec1D:
    """One layer of the analyzed linear network: ``(K, d, a)``."""

    taps: int
    dilation: int = 1
    ar_coeff: float = 0.0

    def __post_init__(self):
        if self.taps < 1 or self.taps % 2 == 0:
            raise ValueError(f"tap count must be odd and positive, got {self.taps}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")
        if not 0.0 <= self.ar_coeff < 1.0:
            raise ValueError(f"autoregressive coefficient must be in [0, 1), got {self.ar_coeff}")


@dataclass(frozen=True)
class LinearNetSpec:
    """Ordered stack of :class:`LayerSpec1D`."""

    layers: Tuple[LayerSpec1D, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) < 1:
            raise ValueError("network needs at least one layer")

    def __len__(self) -> int:
        return len(self.layers)


@dataclass(eq=False)
class ErfMap:
    """Normalized gradient-magnitude distribution over integer offsets.

    ``weights`` is 1D or 2D with nonnegative entries summing to 1;
    ``origin`` gives the index of offset zero per axis (it may lie outside
    the array when the representable window excludes offset zero).
    """

    weights: np.ndarray
    origin: Tuple[int, ...]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim not in (1, 2):
            raise ValueError(f"weights must be 1D or 2D, got shape {self.weights.shape}")
        self.origin = tuple(int(o) for o in self.origin)
        if len(self.origin) != self.weights.ndim:
            raise ValueError("origin must give one index per weight axis")
        if (self.weights < 0).any():
            raise ValueError("weights must be nonnegative")
        total = self.weights.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1 within 1e-9, got {total!r}")

    def offsets(self, axis: int = 0) -> np.ndarray:
        """Integer offsets along one axis."""
        return np.arange(self.weights.shape[axis]) - self.origin[axis]

    def marginal(self, axis: int = 0) -> np.ndarray:
        """Weights summed over all other axes."""
        if self.weights.ndim == 1:
            return self.weights
        return self.weights.sum(axis=1 - axis)


def layer_variance_term(layer: LayerSpec1D) -> float:
    """Per-layer contribution to the squared ERF radius."""
    a = layer.ar_coeff
    return layer.dilation**2 * (layer.taps**2 - 1) / 12.0 + a / (1.0 - a) ** 2


def analytic_radius_arma(spec: LinearNetSpec) -> float:
    """Closed-form ERF radius of the linear network (per-axis standard deviation)."""
    return math.sqrt(sum(layer_variance_term(layer) for layer in spec.layers))


def layer_moments(layer: LayerSpec1D) -> Tuple[float, float]:
    """First and second moments of a layer's equivalent infinite filter.

    The layer acts as the convolution of the geometric inverse of its
    autoregressive part with its uniform dilated moving-average taps.  With
    ``r = a / (1 - a)``:

        M1 = r + d*(K-1)/2
        M2 = a*(1+a)/(1-a)^2 + 2*r*d*(K-1)/2 + d^2*(K-1)*(2K-1)/6

    and ``M2 - M1**2`` equals :func:`layer_variance_term` identically.  (The
    second moment of the geometric factor is ``a*(1+a)/(1-a)^2``; its square
    appears only inside ``M1**2``.)
    """
    a, d, k = layer.ar_coeff, layer.dilation, layer.taps
    geo_m1 = a / (1.0 - a)
    geo_m2 = a * (1.0 + a) / (1.0 - a) ** 2
    ma_m1 = d * (k - 1) / 2.0
    ma_m2 = d**2 * (k - 1) * (2 * k - 1) / 6.0
    m1 = geo_m1 + ma_m1
    m2 = geo_m2 + 2.0 * geo_m1 * ma_m1 + ma_m2
    return m1, m2


def effective_filter_1d(layer: LayerSpec1D, epsilon: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """Truncated equivalent filter of one layer, taps at offsets ``0..len-1``.

    The inverse of the causal autoregressive factor ``(1, -a)`` is the
    geometric sequence ``a**p`` for ``p >= 0``, truncated at the horizon
    ``H = ceil(ln(epsilon)/ln(a))`` so the dropped tail has mass at most
    ``epsilon`` (``H = 0``, i.e. a bare delta, when ``a == 0``); it is then
    convolved with the uniform dilated moving-average taps ``(1-a)/K``.
    """
    a = layer.ar_coeff
    if a == 0.0:
        inverse = np.array([1.0])
    else:
        horizon = int(math.ceil(math.log(epsilon) / math.log(a)))
        inverse = a ** np.arange(horizon, dtype=np.float64)
    ma = np.zeros(layer.dilation * (layer.taps - 1) + 1)
    ma[:: layer.dilation] = (1.0 - a) / layer.taps
    return np.convolve(inverse, ma)


def empirical_erf_1d(spec: LinearNetSpec, epsilon: float = DEFAULT_TRUNCATION) -> ErfMap:
    """Composed 1D ERF: convolve all layer filters, reverse, normalize.

    The gradient map of a linear network is the reversed composition of its
    layer filters, so the returned map lives on non-positive offsets and its
    variance approximates the sum of per-layer variance terms (exactly, up to
    the geometric truncation).
    """
    taps = np.array([1.0])
    for layer in spec.layers:
        taps = np.convolve(taps, effective_filter_1d(layer, epsilon))
    reversed_taps = taps[::-1]
    return ErfMap(reversed_taps / reversed_taps.sum(), origin=(taps.size - 1,))


def erf_radius(erf_map: ErfMap) -> float:
    """Radial spread: ``sqrt(E[p1^2 + p2^2] - E[sqrt(p1^2 + p2^2)]^2)``.

    This measures deviation of the *radial distance* from its mean, so a
    ring-shaped map has radius zero; :func:`erf_axis_variance` gives the
    per-axis variance instead, which is the quantity the analytic radius
    formula describes.
    """
    radius_sq = _radial_moments(erf_map)
    return math.sqrt(max(radius_sq, 0.0))


def _radial_moments(erf_map: ErfMap) -> float:
    if erf_map.weights.ndim == 1:
        radial = np.abs(erf_map.offsets(0)).astype(np.float64)
        weights = erf_map.weights
    else:
        p1 = erf_map.offsets(0)[:, None].astype(np.float64)
        p2 = erf_map.offsets(1)[None, :].astype(np.float64)
        radial = np.hypot(p1, p2)
        weights = erf_map.weights
    second = float((radial**2 * weights).sum())
    first = float((radial * weights).sum())
    return second - first**2


def erf_axis_variance(erf_map: ErfMap, axis: int = 0) -> float:
    """Variance of the map's marginal along one axis."""
    marginal = erf_map.marginal(axis)
    p = erf_map.offsets(axis).astype(np.float64)
    mean = float((p * marginal).sum())
    return float((p**2 * marginal).sum()) - mean**2


def _uniform_ma_taps_1d(layer: LayerSpec1D) -> np.ndarray:
    # one-sided uniform taps at offsets {0, 1, .., K-1} on a centered grid;
    # dilation is applied by the kernel, not baked into the array
    half = layer.taps - 1
    taps = np.zeros(2 * half + 1)
    taps[half:] = (1.0 - layer.ar_coeff) / layer.taps
    return taps


def _layer_kernels(
    spec: LinearNetSpec, channels: int, kernel_mode: str, rng: Optional[np.random.Generator]
):
    """Materialize (MaKernel, SeparableArKernel) pairs for the 2D simulation."""
    layers = []
    for layer in spec.layers:
        if kernel_mode == "uniform":
            taps_1d = _uniform_ma_taps_1d(layer)
            plane = np.outer(taps_1d, taps_1d)
            data = plane[:, :, None, None]
        elif kernel_mode == "xavier":
            size = layer.taps
            fan = size * size * channels
            bound = math.sqrt(6.0 / (fan + fan))
            data = rng.uniform(-bound, bound, size=(size, size, channels, channels))
        else:
            raise ValueError(f"unknown kernel mode {kernel_mode!r}")
        ma = MaKernel(data, dilation=layer.dilation)
        causal = Length3Filter(0.0, 1.0, -layer.ar_coeff)
        width = data.shape[2]
        ar = SeparableArKernel(
            f_filters=((causal,),) * width,
            g_filters=((causal,),) * width,
        )
        layers.append((ma, ar))
    return layers


def _axis_mass_profile(spec: LinearNetSpec, kernel_mode: str, epsilon: float):
    """Per-axis mass envelope of the composed network filter.

    Returns ``(taps, start)`` with ``taps[i]`` the mass at forward offset
    ``start + i``.  The uniform mode's profile is exact; the random mode uses
    a uniform-magnitude surrogate on the same (centered) support, which is
    what governs how much of the map can wrap off the grid.
    """
    taps = np.array([1.0])
    start = 0
    for layer in spec.layers:
        layer_taps = effective_filter_1d(layer, epsilon)
        taps = np.convolve(taps, layer_taps)
        if kernel_mode == "xavier":
            # centered kernels shift the moving-average support half a footprint
            start -= layer.dilation * (layer.taps - 1) // 2
    return taps / taps.sum(), start


def _select_window(
    spec: LinearNetSpec, grid: int, kernel_mode: str, epsilon: float, tolerance: float
):
    """Choose the length-``grid`` offset window that best holds the composed filter.

    Returns the window's first forward offset ``w0`` (the reading window in
    ERF offsets is then ``[-(w0 + grid - 1), -w0]``).  Raises
    :class:`WraparoundError` when even the best window leaks at least
    ``tolerance`` of the mass, since the wrapped map would alias that mass to
    wrong offsets.
    """
    taps, start = _axis_mass_profile(spec, kernel_mode, epsilon)
    if taps.size <= grid:
        # support fits; center it in the window
        return start - (grid - taps.size) // 2
    window_sums = np.convolve(taps, np.ones(grid), mode="valid")
    best = int(np.argmax(window_sums))
    leak = float(1.0 - window_sums[best])
    if leak >= tolerance:
        raise WraparoundError(
            f"composed filter leaks {leak:.3e} of its mass outside any "
            f"{grid}-wide window (tolerance {tolerance:.1e}); use a larger grid"
        )
    return start + best


def empirical_erf_2d(
    spec: LinearNetSpec,
    grid: int,
    channels: int = 1,
    seed: Optional[int] = None,
    kernel_mode: str = "uniform",
    epsilon: float = DEFAULT_TRUNCATION,
    wrap_tolerance: float = DEFAULT_WRAP_TOLERANCE,
) -> ErfMap:
    """Empirical 2D ERF of the network applied separably on both axes.

    Builds the linear network on a ``grid x grid`` field (moving-average
    kernels either the uniform idealization or Xavier-initialized random;
    autoregressive part the causal per-axis factor), back-propagates a unit
    gradient from the center output pixel through the layers' backward
    passes, averages the absolute gradient maps over channel pairs, and
    normalizes.  The gradient map of a circular linear network is identical
    at every output location, so a single center pixel suffices.

    ``channels`` applies to the random mode; the uniform idealization is
    single-channel by construction.
    """
    if grid < 2:
        raise ValueError(f"grid must be at least 2, got {grid}")
    if kernel_mode == "uniform":
        if channels != 1:
            raise ValueError("uniform kernel mode is single-channel; use xavier for channels > 1")
    elif kernel_mode == "xavier":
        if seed is None:
            raise ValueError("xavier kernel mode needs a seed")
    else:
        raise ValueError(f"unknown kernel mode {kernel_mode!r}")
    w0 = _select_window(spec, grid, kernel_mode, epsilon, wrap_tolerance)

    rng = np.random.default_rng(seed) if kernel_mode == "xavier" else None
    layers = _layer_kernels(spec, channels, kernel_mode, rng)
    for ma, _ in layers:
        if ma.dilation * (ma.tap_height - 1) >= grid:
            raise WraparoundError(
                f"dilated kernel footprint does not fit a {grid}x{grid} grid"
            )
    caches = [
        LayerCache(
            ar_spectrum=ar_spectra(ar, grid, grid),
            output_spectrum=np.zeros((grid, grid, ar.channels), dtype=np.complex128),
            pre_ar=FieldTensor(np.zeros((grid, grid, ar.channels))),
        )
        for _, ar in layers
    ]

    center = grid // 2
    accumulated = np.zeros((grid, grid))
    for out_channel in range(channels):
        seed_grad = np.zeros((grid, grid, channels))
        seed_grad[center, center, out_channel] = 1.0
        grad = FieldTensor(seed_grad)
        for (ma, _), cache in zip(reversed(layers), reversed(caches)):
            d_t, _ = ar_backward(grad, cache)
            grad = ma_backward_input(d_t, ma)
        accumulated += np.abs(grad.data).sum(axis=2)
    accumulated /= accumulated.sum()

    # unwrap grid positions into the selected offset window: ERF offset
    # q = position - center, read in [-(w0 + grid - 1), -w0]
    q_low = -(w0 + grid - 1)
    shift = (center + q_low) % grid
    window = np.roll(accumulated, (-shift, -shift), axis=(0, 1))
    return ErfMap(window, origin=(-q_low, -q_low))

"""The ARMA layer: moving-average forward/backward, autoregressive solve by
frequency-domain division, its analytic backward pass, and a dense solver
used as a small-instance oracle.

A layer with moving-average kernel ``W`` and per-channel autoregressive
kernel ``A`` maps an input field ``X`` to the output ``Y`` satisfying

    A[:, :, t] * Y[:, :, t] = sum_s W[:, :, t, s] * X[:, :, s]

with ``*`` denoting circular convolution.  The solve splits into a plain
convolution (``T = W * X``) followed by a per-channel deconvolution
(``A * Y = T``) carried out as an element-wise division of 2D spectra.

The backward pass solves two more systems of the same shape.  With ``dY``
the incoming gradient and ``a~`` the coordinate reversal of ``a``
(``a~[i1, i2] = a[-i1, -i2]``), the spatial contracts are

    a~ * dT = dY           a~ * dA = -(y~ * dY)

whose frequency realization for real signals divides by ``conj(A_hat)``.
Correctness of every gradient here is pinned by finite differences in the
test suite rather than by the algebra alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .filters import (
    Length3Filter,
    SeparableArKernel,
    compose_1d,
    is_stable,
    materialize_2d,
    reparam_gradient,
)
from .numerics import (
    DEFAULT_EPSILON,
    FieldTensor,
    MaKernel,
    SingularSpectrumError,
    SpectralTensor,
    embed_taps,
    spectral_divide,
)

#: Largest grid (I1*I2) the dense oracle will assemble; beyond this the
#: quadratic-size matrix is an accident, not a test.
DENSE_SOLVE_LIMIT = 4096


@dataclass(eq=False)
class ArmaLayerParams:
    """Validated parameter bundle for one ARMA layer.

    Requires a stability-certified autoregressive kernel, i.e. one whose
    every materialized factor passes :func:`armakit.filters.is_stable`
    (anything built through the re-parameterization qualifies).
    """

    ma: MaKernel
    ar: SeparableArKernel

    def __post_init__(self):
        if self.ma.out_channels != self.ar.channels:
            raise ValueError(
                f"kernel channel mismatch: moving-average has {self.ma.out_channels} "
                f"output channels, autoregressive has {self.ar.channels}"
            )
        for rows in (self.ar.f_filters, self.ar.g_filters):
            for row in rows:
                for f in row:
                    if not is_stable(f):
                        raise ValueError(
                            f"autoregressive factor {f} violates |fm1 + fp1| < f0"
                        )

    @property
    def in_channels(self) -> int:
        return self.ma.in_channels

    @property
    def out_channels(self) -> int:
        return self.ma.out_channels


@dataclass(eq=False)
class LayerCache:
    """Forward-pass quantities reused by the backward pass."""

    ar_spectrum: np.ndarray  # (I1, I2, T) complex, per-channel A_hat
    output_spectrum: np.ndarray  # (I1, I2, T) complex, Y_hat
    pre_ar: FieldTensor  # intermediate T, spatial


@dataclass(eq=False)
class ArGradients:
    """Gradients of the unconstrained autoregressive parameters.

    Arrays of shape ``(channels, depth)``, one entry per cascade factor.
    """

    alpha_f: np.ndarray
    beta_f: np.ndarray
    alpha_g: np.ndarray
    beta_g: np.ndarray


def ma_forward(x: FieldTensor, w: MaKernel) -> FieldTensor:
    """Multi-channel circular convolution ``T[:,:,t] = sum_s W[:,:,t,s] * X[:,:,s]``.

    Kernel offsets are scaled by ``w.dilation``.
    """
    if x.channels != w.in_channels:
        raise ValueError(
            f"input has {x.channels} channels but kernel expects {w.in_channels}"
        )
    _check_ma_footprint(w, x.height, x.width)
    half1 = (w.tap_height - 1) // 2
    half2 = (w.tap_width - 1) // 2
    out = np.zeros((x.height, x.width, w.out_channels))
    for k1 in range(w.tap_height):
        for k2 in range(w.tap_width):
            taps = w.data[k1, k2]  # (T, S)
            if not taps.any():
                continue
            shift = (w.dilation * (k1 - half1), w.dilation * (k2 - half2))
            rolled = np.roll(x.data, shift, axis=(0, 1))
            out += np.einsum("ijs,ts->ijt", rolled, taps)
    return FieldTensor(out)


def ma_backward_input(d_t: FieldTensor, w: MaKernel) -> FieldTensor:
    """Input gradient of :func:`ma_forward`: ``dX[:,:,s] = sum_t W~[:,:,t,s] * dT[:,:,t]``.

    ``W~`` is the coordinate reversal of ``W`` (the adjoint of a circular
    convolution is convolution with the reversed kernel).
    """
    if d_t.channels != w.out_channels:
        raise ValueError(
            f"gradient has {d_t.channels} channels but kernel produces {w.out_channels}"
        )
    half1 = (w.tap_height - 1) // 2
    half2 = (w.tap_width - 1) // 2
    out = np.zeros((d_t.height, d_t.width, w.in_channels))
    for k1 in range(w.tap_height):
        for k2 in range(w.tap_width):
            taps = w.data[k1, k2]
            if not taps.any():
                continue
            shift = (-w.dilation * (k1 - half1), -w.dilation * (k2 - half2))
            rolled = np.roll(d_t.data, shift, axis=(0, 1))
            out += np.einsum("ijt,ts->ijs", rolled, taps)
    return FieldTensor(out)


def ma_backward(
    d_t: FieldTensor, x: FieldTensor, w: MaKernel
) -> Tuple[FieldTensor, np.ndarray]:
    """Gradients of :func:`ma_forward` w.r.t. its input and kernel.

    ``dW[p1, p2, t, s]`` is the circular cross-correlation of ``X`` channel
    ``s`` with ``dT`` channel ``t`` read at the dilated offset
    ``(d*p1, d*p2)``.
    """
    d_x = ma_backward_input(d_t, w)
    half1 = (w.tap_height - 1) // 2
    half2 = (w.tap_width - 1) // 2
    d_w = np.zeros_like(w.data)
    for k1 in range(w.tap_height):
        for k2 in range(w.tap_width):
            shift = (w.dilation * (k1 - half1), w.dilation * (k2 - half2))
            rolled = np.roll(x.data, shift, axis=(0, 1))
            d_w[k1, k2] = np.einsum("ijt,ijs->ts", d_t.data, rolled)
    return d_x, d_w


def ar_spectra(ar: SeparableArKernel, height: int, width: int) -> np.ndarray:
    """Per-channel spectra of the embedded autoregressive kernels, ``(I1, I2, T)``."""
    out = np.empty((height, width, ar.channels), dtype=np.complex128)
    for t in range(ar.channels):
        grid = embed_taps(materialize_2d(ar, t), height, width)
        out[:, :, t] = np.fft.fft2(grid)
    return out


def _nonzero_halfwidth(taps: np.ndarray) -> int:
    # largest |offset| carrying a nonzero tap; identity factors contribute 0
    half = (taps.size - 1) // 2
    nonzero = np.flatnonzero(taps)
    if nonzero.size == 0:
        return 0
    return int(max(abs(nonzero.min() - half), abs(nonzero.max() - half)))


def ar_forward(
    t: FieldTensor, ar: SeparableArKernel, epsilon: float = DEFAULT_EPSILON
) -> Tuple[FieldTensor, LayerCache]:
    """Solve ``A[:,:,c] * Y[:,:,c] = T[:,:,c]`` per channel by spectral division.

    The materialized kernel footprint (nonzero tap extent per axis, so
    identity factors cost nothing) must fit the grid.  Returns the output
    together with a :class:`LayerCache` for the backward pass.  Raises
    :class:`armakit.numerics.SingularSpectrumError` for degenerate kernels;
    kernels materialized from the re-parameterization cannot trigger it.
    """
    if t.channels != ar.channels:
        raise ValueError(
            f"field has {t.channels} channels but kernel has {ar.channels}"
        )
    for ch in range(ar.channels):
        g_half = _nonzero_halfwidth(compose_1d(ar.g_filters[ch]))
        f_half = _nonzero_halfwidth(compose_1d(ar.f_filters[ch]))
        if 2 * g_half >= t.height or 2 * f_half >= t.width:
            raise ValueError(
                f"autoregressive footprint ({2 * g_half + 1}, {2 * f_half + 1}) "
                f"of channel {ch} does not fit a {t.height}x{t.width} field"
            )
    a_hat = ar_spectra(ar, t.height, t.width)
    t_hat = np.fft.fft2(t.data, axes=(0, 1))
    y_hat = spectral_divide(SpectralTensor(t_hat), SpectralTensor(a_hat), epsilon)
    y = FieldTensor(np.fft.ifft2(y_hat.data, axes=(0, 1)).real)
    return y, LayerCache(ar_spectrum=a_hat, output_spectrum=y_hat.data, pre_ar=t)


def ar_backward(d_y: FieldTensor, cache: LayerCache) -> Tuple[FieldTensor, FieldTensor]:
    """Backward pass of :func:`ar_forward`.

    Returns ``(dT, dA_field)`` where ``dA_field`` is the gradient w.r.t. the
    full embedded kernel grid; restriction to actual tap positions happens in
    :func:`arma_backward`.  In the frequency domain:

        dT_hat = dY_hat / conj(A_hat)
        dA_hat = -conj(Y_hat) * dY_hat / conj(A_hat)
    """
    if d_y.data.shape != cache.output_spectrum.shape:
        raise ValueError(
            f"gradient shape {d_y.data.shape} does not match cached forward "
            f"shape {cache.output_spectrum.shape}"
        )
    d_y_hat = np.fft.fft2(d_y.data, axes=(0, 1))
    conj_a = np.conj(cache.ar_spectrum)
    d_t_hat = spectral_divide(SpectralTensor(d_y_hat), SpectralTensor(conj_a))
    d_a_hat = -np.conj(cache.output_spectrum) * d_t_hat.data
    d_t = FieldTensor(np.fft.ifft2(d_t_hat.data, axes=(0, 1)).real)
    d_a_field = FieldTensor(np.fft.ifft2(d_a_hat, axes=(0, 1)).real)
    return d_t, d_a_field


def ar_forward_dense(t: FieldTensor, taps_per_channel: Sequence[np.ndarray]) -> FieldTensor:
    """Dense-solver oracle for :func:`ar_forward`.

    Assembles the full ``(I1*I2) x (I1*I2)`` circulant system per channel and
    solves it by LU decomposition with partial pivoting.  Quadratic memory and
    cubic time; guarded to grids of at most ``DENSE_SOLVE_LIMIT`` pixels.
    """
    n = t.height * t.width
    if n > DENSE_SOLVE_LIMIT:
        raise ValueError(f"grid has {n} pixels, dense solve limited to {DENSE_SOLVE_LIMIT}")
    if len(taps_per_channel) != t.channels:
        raise ValueError(
            f"{len(taps_per_channel)} kernels supplied for {t.channels} channels"
        )
    out = np.empty_like(t.data)
    for c, taps in enumerate(taps_per_channel):
        matrix = dense_circulant_matrix(taps, t.height, t.width)
        try:
            solution = np.linalg.solve(matrix, t.data[:, :, c].ravel())
        except np.linalg.LinAlgError as exc:
            raise SingularSpectrumError((0, 0, c), 0.0, 0.0) from exc
        out[:, :, c] = solution.reshape(t.height, t.width)
    return FieldTensor(out)


def dense_circulant_matrix(taps, height: int, width: int, dilation: int = 1) -> np.ndarray:
    """Assemble the matrix of a circular convolution on a ``height x width`` grid.

    Row ``(i1*W + i2)`` expresses
    ``sum_p taps[p1, p2] * y[(i1 - d*p1) % I1, (i2 - d*p2) % I2]``.
    """
    taps = np.asarray(taps, dtype=np.float64)
    half1 = (taps.shape[0] - 1) // 2
    half2 = (taps.shape[1] - 1) // 2
    n = height * width
    matrix = np.zeros((n, n))
    for i1 in range(height):
        for i2 in range(width):
            row = i1 * width + i2
            for k1 in range(taps.shape[0]):
                for k2 in range(taps.shape[1]):
                    j1 = (i1 - dilation * (k1 - half1)) % height
                    j2 = (i2 - dilation * (k2 - half2)) % width
                    matrix[row, j1 * width + j2] += taps[k1, k2]
    return matrix


def arma_forward(
    x: FieldTensor, params: ArmaLayerParams, epsilon: float = DEFAULT_EPSILON
) -> Tuple[FieldTensor, LayerCache]:
    """Full layer: moving-average convolution followed by the deconvolution."""
    t = ma_forward(x, params.ma)
    return ar_forward(t, params.ar, epsilon)


def arma_backward(
    d_y: FieldTensor, x: FieldTensor, params: ArmaLayerParams, cache: LayerCache
) -> Tuple[FieldTensor, np.ndarray, ArGradients]:
    """Backward pass of :func:`arma_forward`.

    Returns ``(dX, dW, dAlphaBeta)``: the input gradient, the moving-average
    kernel gradient, and the gradients of the unconstrained ``(alpha, beta)``
    parameters of every autoregressive factor.
    """
    if not params.ar.is_reparam:
        raise ValueError(
            "autoregressive kernel carries no (alpha, beta) parameters; "
            "use arma_backward_taps for raw kernels"
        )
    d_x, d_w, f_tap_grads, g_tap_grads = arma_backward_taps(d_y, x, params.ma, params.ar, cache)
    return d_x, d_w, ar_reparam_gradients(params.ar, f_tap_grads, g_tap_grads)


def ar_reparam_gradients(
    ar: SeparableArKernel, d_f: np.ndarray, d_g: np.ndarray
) -> ArGradients:
    """Chain per-factor tap gradients through the re-parameterization.

    ``d_f``/``d_g`` are ``(channels, depth, 3)`` arrays of tap gradients; the
    center-tap component is dropped because ``f0`` is fixed.
    """
    if not ar.is_reparam:
        raise ValueError("kernel carries no (alpha, beta) parameters")
    t_channels, depth = ar.channels, ar.depth
    grads = ArGradients(
        alpha_f=np.zeros((t_channels, depth)),
        beta_f=np.zeros((t_channels, depth)),
        alpha_g=np.zeros((t_channels, depth)),
        beta_g=np.zeros((t_channels, depth)),
    )
    for t in range(t_channels):
        for q in range(depth):
            grads.alpha_f[t, q], grads.beta_f[t, q] = reparam_gradient(
                ar.f_params[t][q], (d_f[t, q, 0], d_f[t, q, 2])
            )
            grads.alpha_g[t, q], grads.beta_g[t, q] = reparam_gradient(
                ar.g_params[t][q], (d_g[t, q, 0], d_g[t, q, 2])
            )
    return grads


def arma_backward_taps(
    d_y: FieldTensor,
    x: FieldTensor,
    ma: MaKernel,
    ar: SeparableArKernel,
    cache: LayerCache,
) -> Tuple[FieldTensor, np.ndarray, np.ndarray, np.ndarray]:
    """Backward pass stopping at raw factor taps.

    Returns ``(dX, dW, dF, dG)`` where ``dF`` and ``dG`` have shape
    ``(channels, depth, 3)``: the gradient of each length-3 factor's taps at
    offsets (-1, 0, +1).  Used directly by unconstrained training and as the
    trunk of :func:`arma_backward`.
    """
    d_t, d_a_field = ar_backward(d_y, cache)
    d_x, d_w = ma_backward(d_t, x, ma)
    d_f, d_g = ar_factor_tap_gradients(d_a_field, ar)
    return d_x, d_w, d_f, d_g


def ar_factor_tap_gradients(
    d_a_field: FieldTensor, ar: SeparableArKernel
) -> Tuple[np.ndarray, np.ndarray]:
    """Restrict a full-grid kernel gradient to the separable factor taps.

    The embedded kernel places tap ``(p1, p2)`` at grid index
    ``(p1 % I1, p2 % I2)``, so the gradient w.r.t. the composed 2D taps is read
    off at those positions; it is then factored through the outer product
    (``dF[p1] = sum_p2 dA[p1, p2] * G[p2]``, symmetrically for ``dG``) and
    through the cascade (the gradient of one factor is the correlation of the
    composition gradient with the remaining factors' composition).
    """
    height, width, channels = d_a_field.data.shape
    if channels != ar.channels:
        raise ValueError(f"gradient has {channels} channels, kernel {ar.channels}")
    q_depth = ar.depth
    offsets = range(-q_depth, q_depth + 1)
    rows = [p % height for p in offsets]
    cols = [p % width for p in offsets]
    d_f = np.zeros((channels, q_depth, 3))
    d_g = np.zeros((channels, q_depth, 3))
    for t in range(channels):
        d_a_taps = d_a_field.data[:, :, t][np.ix_(rows, cols)]
        f_taps = compose_1d(ar.f_filters[t])
        g_taps = compose_1d(ar.g_filters[t])
        # the composed kernel is outer(G, F): rows follow g, columns follow f
        d_f_comp = g_taps @ d_a_taps
        d_g_comp = d_a_taps @ f_taps
        for q in range(q_depth):
            d_f[t, q] = _factor_gradient(d_f_comp, ar.f_filters[t], q)
            d_g[t, q] = _factor_gradient(d_g_comp, ar.g_filters[t], q)
    return d_f, d_g


def _factor_gradient(d_composition: np.ndarray, factors: Sequence[Length3Filter], q: int):
    # d(c_1 * ... * c_Q)/d(c_q) correlates the composition gradient with the
    # convolution of the remaining factors, leaving exactly 3 taps.
    rest = [f for j, f in enumerate(factors) if j != q]
    if not rest:
        return d_composition.copy()
    rest_taps = compose_1d(rest)
    return np.correlate(d_composition, rest_taps, mode="valid")


def _check_ma_footprint(w: MaKernel, height: int, width: int):
    if (
        w.dilation * (w.tap_height - 1) >= height
        or w.dilation * (w.tap_width - 1) >= width
    ):
        raise ValueError(
            f"dilated kernel footprint {w.dilation}*({w.tap_height - 1}, "
            f"{w.tap_width - 1}) does not fit a {height}x{width} field"
        )

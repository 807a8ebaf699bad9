"""Deterministic transforms between delay- and frequency-domain channels,
dataset normalization, and shaping of complex tensors into the real
two-channel layout the encoders consume.

DFT convention: forward transform H[k] = sum_t h[t] exp(-2j*pi*k*t/K) with no
scale factor; the inverse carries 1/K.  Parseval then reads
sum_k |H[k]|^2 = K * sum_t |h[t]|^2.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateDataError


def cir_to_csi(cir: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """Per-antenna-pair K-point DFT of the tap axis, taps zero-padded to K."""
    if cir.shape[-1] > n_subcarriers:
        raise ContractError(
            f"n_taps {cir.shape[-1]} exceeds n_subcarriers {n_subcarriers}"
        )
    return np.fft.fft(cir, n=n_subcarriers, axis=-1)


def csi_to_cir(csi: np.ndarray, n_taps: int) -> np.ndarray:
    """Inverse DFT of the subcarrier axis, truncated to the first n_taps."""
    if n_taps > csi.shape[-1]:
        raise ContractError(f"n_taps {n_taps} exceeds n_subcarriers {csi.shape[-1]}")
    return np.fft.ifft(csi, axis=-1)[..., :n_taps]


def shape_input(tensor: np.ndarray, n_bins: int | None = None) -> np.ndarray:
    """Complex [n_rx, n_tx, bins] -> real [2, n_rx*n_tx, n_bins].

    Channel 0 holds the real part, channel 1 the imaginary part.  The pair
    axis flattens rx-major (pair = rx * n_tx + tx).  When n_bins exceeds the
    tensor's bin count (CIR shorter than the subcarrier grid) the tail is
    zero-padded so both modalities share one encoder input shape.
    """
    if tensor.ndim != 3:
        raise ContractError(f"expected [n_rx, n_tx, bins], got shape {tensor.shape}")
    n_rx, n_tx, bins = tensor.shape
    if n_bins is None:
        n_bins = bins
    if bins > n_bins:
        raise ContractError(f"tensor has {bins} bins, cannot shape into {n_bins}")
    flat = tensor.reshape(n_rx * n_tx, bins)
    out = np.zeros((2, n_rx * n_tx, n_bins), dtype=np.float64)
    out[0, :, :bins] = flat.real
    out[1, :, :bins] = flat.imag
    return out


def unshape_input(x: np.ndarray, n_rx: int, n_tx: int, bins: int) -> np.ndarray:
    """Inverse of shape_input on the unpadded region."""
    if x.shape[0] != 2 or x.shape[1] != n_rx * n_tx:
        raise ContractError(f"bad shaped input {x.shape} for {n_rx}x{n_tx}")
    flat = x[0, :, :bins] + 1j * x[1, :, :bins]
    return flat.reshape(n_rx, n_tx, bins)


@dataclass(frozen=True)
class NormStats:
    """Scalar normalization statistics of one modality, fitted on the
    training split: global min/max of the shaped values, then mean/std of the
    min-max-scaled values."""

    vmin: float
    vmax: float
    mean: float
    std: float

    def __post_init__(self):
        if not self.vmax > self.vmin:
            raise DegenerateDataError(f"max ({self.vmax}) must exceed min ({self.vmin})")
        if not self.std > 0:
            raise DegenerateDataError(f"std must be > 0, got {self.std}")


def fit_norm_stats(shaped_inputs) -> NormStats:
    """Two-pass fit over an iterable of shaped [2, P, K] arrays.

    Pass one finds the global min/max; pass two the mean/std of the scaled
    values.  The iterable must be re-iterable (a list or a factory-backed
    view) and must contain only training-split samples.
    """
    vmin = np.inf
    vmax = -np.inf
    count = 0
    for x in shaped_inputs:
        vmin = min(vmin, float(np.min(x)))
        vmax = max(vmax, float(np.max(x)))
        count += x.size
    if count == 0:
        raise ContractError("cannot fit statistics on an empty training split")
    if not vmax > vmin:
        raise DegenerateDataError(f"constant data: min == max == {vmin}")

    scale = vmax - vmin
    total = 0.0
    total_sq = 0.0
    for x in shaped_inputs:
        scaled = (np.asarray(x, dtype=np.float64) - vmin) / scale
        total += float(scaled.sum())
        total_sq += float(np.sum(scaled * scaled))
    mean = total / count
    var = total_sq / count - mean * mean
    if var <= 0:
        raise DegenerateDataError("zero variance after min-max scaling")
    return NormStats(vmin=vmin, vmax=vmax, mean=mean, std=float(np.sqrt(var)))


def normalize(x: np.ndarray, stats: NormStats) -> np.ndarray:
    """Min-max scale with training-split min/max, then standardize with the
    post-scaling mean/std.  Out-of-range validation values are not clipped."""
    scaled = (x - stats.vmin) / (stats.vmax - stats.vmin)
    return (scaled - stats.mean) / stats.std

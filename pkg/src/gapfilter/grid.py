"""Uniform time/frequency lattices and the transforms between them.

Every integral over time is a rectangle-rule sum on the lattice ``t = n * step``
and every integral over frequency is a rectangle-rule sum on a symmetric grid of
``K`` (odd) nodes covering the band ``[-pi/step, pi/step]``.  The two rules are
matched to the DFT: the frequency grid makes the lattice periodic with period
``K * step``, and on that circle the forward and inverse transforms below are
exact inverses of each other.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .model import ObservationGeometry

__all__ = [
    "GridError",
    "TimeGrid",
    "FreqGrid",
    "lattice_index",
    "make_grids",
    "forward_transform",
    "inverse_transform",
    "kernel_from_ratio",
    "kernel_table",
]

# relative slack when deciding whether a float sits on the lattice
_LATTICE_RTOL = 1e-9


class GridError(ValueError):
    """Raised for invalid or off-lattice grid requests."""


def lattice_index(values, step: float) -> np.ndarray:
    """Map times to integer lattice indices, rejecting off-lattice values."""
    values = np.asarray(values, dtype=float)
    ratio = values / step
    idx = np.rint(ratio)
    if np.any(np.abs(ratio - idx) > _LATTICE_RTOL * np.maximum(1.0, np.abs(ratio))):
        bad = values[np.abs(ratio - idx) > _LATTICE_RTOL * np.maximum(1.0, np.abs(ratio))]
        raise GridError(f"values {bad.tolist()} are not multiples of step {step}")
    return idx.astype(np.int64)


@dataclass(frozen=True)
class TimeGrid:
    """Lattice nodes covering ``S`` and ``[0, horizon]``.

    ``index`` holds the integer lattice positions (``t = index * step``).
    Each node carries the weight ``step``: the represented set is the union of
    the lattice cells, whose total length is ``len(index) * step``.
    """

    step: float
    horizon: float
    index: np.ndarray
    missing: np.ndarray  # True on nodes of S
    weights: np.ndarray = field(repr=False)

    @property
    def nodes(self) -> np.ndarray:
        return self.index * self.step

    @property
    def n_horizon(self) -> int:
        return int(round(self.horizon / self.step))

    @property
    def unknown(self) -> np.ndarray:
        """Mask of the nodes of T = S u (0, L], where the dual function lives.

        The node t = 0 is an observation time, so it is not part of T.
        """
        return self.index != 0

    @property
    def nonneg(self) -> np.ndarray:
        return self.index >= 0

    def __len__(self) -> int:
        return len(self.index)


@dataclass(frozen=True)
class FreqGrid:
    """Symmetric frequency grid ``lambda_k = k * spacing`` for ``|k| <= (K-1)/2``."""

    step: float  # time step of the conjugate lattice
    size: int  # K, odd

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise GridError(f"frequency grid size must be odd and positive, got {self.size}")

    @property
    def band(self) -> float:
        return np.pi / self.step

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / (self.size * self.step)

    @property
    def half(self) -> int:
        return (self.size - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1, dtype=np.int64)

    @property
    def nodes(self) -> np.ndarray:
        return self.orders * self.spacing

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, self.spacing)

    @property
    def period(self) -> float:
        """Time period of the lattice implied by the grid spacing."""
        return self.size * self.step

    def integrate(self, values) -> float | complex:
        """``(1/2pi) * integral over the band``, as a rectangle-rule sum."""
        return np.sum(values, axis=-1) * self.spacing / (2.0 * np.pi)

    def refined(self, factor: int = 3) -> "FreqGrid":
        return FreqGrid(self.step, self.size * factor)


def make_grids(
    step: float,
    horizon: float,
    geometry: "ObservationGeometry",
    obs_window: float | None = None,
) -> tuple[TimeGrid, FreqGrid]:
    """Build conjugate time and frequency grids.

    The observation window ``[-obs_window, 0]`` and the nodes ``(0, horizon]``
    together fill one period of the lattice.  ``obs_window`` defaults to
    ``horizon + 2 * extent(S)`` and is bumped by one step if needed to keep the
    frequency grid odd.
    """
    if not step > 0:
        raise GridError(f"step must be positive, got {step}")
    if not horizon > 0:
        raise GridError(f"horizon must be positive, got {horizon}")
    n_horizon = int(lattice_index(horizon, step))

    missing_idx = []
    for m, n in geometry.intervals:
        lo, hi = lattice_index([-(m + n), -m], step)
        missing_idx.append(np.arange(lo, hi + 1, dtype=np.int64))
    missing_idx = np.concatenate(missing_idx) if missing_idx else np.zeros(0, np.int64)
    n_extent = int(-missing_idx.min()) if missing_idx.size else 0
    if n_extent >= n_horizon:
        raise GridError(
            f"horizon {horizon} must exceed the far end of the missing intervals "
            f"({n_extent * step})"
        )

    # frequency spacing must resolve lags up to horizon + extent
    n_window_min = n_horizon + 2 * n_extent
    if obs_window is None:
        n_window = n_window_min
    else:
        n_window = int(lattice_index(obs_window, step))
        if n_window < n_window_min:
            raise GridError(
                f"observation window {obs_window} too short; need at least "
                f"{n_window_min * step} (horizon + 2 * extent of S)"
            )
    size = n_horizon + n_window + 1
    if size % 2 == 0:
        size += 1

    index = np.concatenate([missing_idx, np.arange(0, n_horizon + 1, dtype=np.int64)])
    missing = np.concatenate(
        [np.ones(missing_idx.size, bool), np.zeros(n_horizon + 1, bool)]
    )
    time = TimeGrid(
        step=float(step),
        horizon=float(horizon),
        index=index,
        missing=missing,
        weights=np.full(index.size, float(step)),
    )
    return time, FreqGrid(float(step), size)


def _phase(index: np.ndarray, freq: FreqGrid) -> np.ndarray:
    """Angles ``t_j * lambda_k`` as an array of shape (K, n), reduced exactly mod 2pi."""
    prod = np.multiply.outer(freq.orders, np.asarray(index, dtype=np.int64)) % freq.size
    return 2.0 * np.pi * prod / freq.size


def forward_transform(
    values,
    times,
    freq: FreqGrid,
    sign: int = -1,
    weights=None,
) -> np.ndarray:
    """``X(lambda_k) = sum_j w_j x(t_j) exp(sign * i * t_j * lambda_k)``.

    ``times`` must lie on the lattice of ``freq``; weights default to the step.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    values = np.asarray(values)
    idx = lattice_index(times, freq.step)
    if values.shape[-1] != idx.size:
        raise ValueError("values and times differ in length")
    w = freq.step if weights is None else np.asarray(weights, dtype=float)
    ph = _phase(idx, freq)
    kernel = np.cos(ph) + sign * 1j * np.sin(ph)
    return (values * w) @ kernel.T


def inverse_transform(spectrum, times, freq: FreqGrid, sign: int = -1) -> np.ndarray:
    """Undo :func:`forward_transform` at the given lattice times.

    ``x(t) = (1/2pi) sum_k dlambda X(lambda_k) exp(-sign * i * t * lambda_k)``,
    which recovers the per-unit-time samples (the forward weights are ``step``).
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    idx = lattice_index(times, freq.step)
    ph = _phase(idx, freq)
    kernel = np.cos(ph) - sign * 1j * np.sin(ph)
    return np.asarray(spectrum) @ kernel * (freq.spacing / (2.0 * np.pi))


def _check_ratio(rho, freq: FreqGrid, tol: float = 1e-12) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (freq.size,):
        raise ValueError(f"ratio must have shape ({freq.size},), got {rho.shape}")
    if np.any(rho < -tol * max(1.0, float(np.max(np.abs(rho))))):
        raise ValueError("ratio has negative values beyond tolerance")
    return rho


def kernel_from_ratio(rho, lag: float, freq: FreqGrid) -> float:
    """``(1/2pi) * integral exp(i*lambda*s) rho(lambda) dlambda`` at one lattice lag."""
    rho = _check_ratio(rho, freq)
    n = abs(int(lattice_index(lag, freq.step)))
    ph = 2.0 * np.pi * ((freq.orders * n) % freq.size) / freq.size
    return float(np.dot(rho, np.cos(ph)) * freq.spacing / (2.0 * np.pi))


def kernel_table(rho, freq: FreqGrid) -> np.ndarray:
    """Kernel values at every circular lag ``n = 0..K-1`` (lag ``n * step``).

    Computed with one FFT and symmetrized so that lag ``n`` and ``K - n`` agree
    exactly.
    """
    rho = _check_ratio(rho, freq)
    # order 0..half, -half..-1 for the FFT
    spec = np.fft.ifftshift(rho)
    table = np.fft.fft(spec).real * (freq.spacing / (2.0 * np.pi))
    return 0.5 * (table + np.roll(table[::-1], 1))

"""Problem data: spectral densities, missing-interval geometry and the weight function."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import FreqGrid, GridError, TimeGrid, forward_transform, lattice_index

__all__ = [
    "DENSITY_FLOOR",
    "ModelError",
    "SpectralDensity",
    "ConstantBand",
    "Lorentzian",
    "RationalRatio",
    "Tabulated",
    "evaluate_density",
    "ObservationGeometry",
    "WeightFunction",
    "ProcessModel",
    "MinimalityVerdict",
    "minimality_check",
    "functional_image",
    "truncate_weight",
    "floored_sum",
]

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-12
_NEG_TOL = 1e-12


class ModelError(ValueError):
    """Invalid densities, geometry or weight."""


# --------------------------------------------------------------------------
# spectral densities


class SpectralDensity:
    """Even, nonnegative function of frequency; subclasses implement ``_eval``."""

    family = "abstract"

    def __call__(self, lam) -> np.ndarray:
        return self._eval(np.abs(np.asarray(lam, dtype=float)))

    def _eval(self, lam: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def scaled(self, factor: float) -> "SpectralDensity":
        raise NotImplementedError

    def check(self, band: float) -> None:
        """Validate parameters against the band ``[-band, band]``."""


@dataclass(frozen=True)
class ConstantBand(SpectralDensity):
    level: float
    family = "constant"

    def __post_init__(self):
        if not self.level >= 0:
            raise ModelError(f"constant level must be >= 0, got {self.level}")

    def _eval(self, lam):
        return np.full(lam.shape, float(self.level))

    def scaled(self, factor):
        return ConstantBand(self.level * factor)


@dataclass(frozen=True)
class Lorentzian(SpectralDensity):
    """``2 * width * power / (width**2 + lambda**2)``; variance ``power`` on the whole line."""

    power: float
    width: float
    family = "lorentzian"

    def __post_init__(self):
        if not (self.power > 0 and self.width > 0):
            raise ModelError("lorentzian needs power > 0 and width > 0")

    def _eval(self, lam):
        return 2.0 * self.width * self.power / (self.width**2 + lam**2)

    def scaled(self, factor):
        return Lorentzian(self.power * factor, self.width)


@dataclass(frozen=True)
class RationalRatio(SpectralDensity):
    """``N(lambda^2) / D(lambda^2)``; coefficients in increasing powers of ``lambda^2``."""

    numerator: tuple
    denominator: tuple
    family = "rational"

    def __post_init__(self):
        object.__setattr__(self, "numerator", tuple(float(c) for c in self.numerator))
        object.__setattr__(self, "denominator", tuple(float(c) for c in self.denominator))
        if not self.numerator or not self.denominator:
            raise ModelError("rational density needs numerator and denominator coefficients")

    def check(self, band):
        # D(x) > 0 for x = lambda^2 in [0, band^2]
        poly = np.polynomial.Polynomial(self.denominator)
        roots = poly.roots()
        real = roots[np.abs(roots.imag) < 1e-12].real
        if np.any((real >= 0) & (real <= band**2)) or poly(0.0) <= 0:
            raise ModelError("rational density denominator vanishes or is negative inside the band")

    def _eval(self, lam):
        x = lam**2
        num = np.polynomial.polynomial.polyval(x, self.numerator)
        den = np.polynomial.polynomial.polyval(x, self.denominator)
        return num / den

    def scaled(self, factor):
        return RationalRatio(tuple(c * factor for c in self.numerator), self.denominator)


class Tabulated(SpectralDensity):
    """Density given by ``(lambda, value)`` pairs, linearly interpolated in ``|lambda|``.

    Tables given only for ``lambda >= 0`` are mirrored.  Values outside the
    table are zero.
    """

    family = "tabulated"

    def __init__(self, lam: Sequence[float], values: Sequence[float]):
        lam = np.asarray(lam, dtype=float)
        values = np.asarray(values, dtype=float)
        if lam.shape != values.shape or lam.ndim != 1 or lam.size == 0:
            raise ModelError("tabulated density needs equal-length 1-d lambda and value arrays")
        if np.any(values < -_NEG_TOL):
            raise ModelError(f"tabulated density has negative value {values.min()}")
        order = np.argsort(lam, kind="stable")
        lam, values = lam[order], np.clip(values[order], 0.0, None)
        if np.any(np.diff(lam) <= 0):
            raise ModelError("tabulated lambda values must be distinct")
        neg = lam < 0
        if neg.any():
            # both halves present: they must mirror each other
            mirrored = np.interp(-lam[neg], lam, values, left=0.0, right=0.0)
            if not np.allclose(mirrored, values[neg], rtol=1e-9, atol=1e-12):
                raise ModelError("tabulated density is not even")
            keep = ~neg
            lam, values = lam[keep], values[keep]
        self.lam = lam
        self.values = values

    def _eval(self, lam):
        return np.interp(lam, self.lam, self.values, left=0.0, right=0.0)

    def scaled(self, factor):
        return Tabulated(self.lam, self.values * factor)

    @classmethod
    def on_grid(cls, values, freq: FreqGrid) -> "Tabulated":
        values = np.asarray(values, dtype=float)
        return cls(freq.nodes[freq.half:], values[freq.half:])

    def __repr__(self):
        return f"Tabulated(<{self.lam.size} nodes>)"


def evaluate_density(d: SpectralDensity, freq: FreqGrid) -> np.ndarray:
    """Samples of ``d`` on the frequency grid, checked even and nonnegative."""
    d.check(freq.band)
    vals = np.asarray(d(freq.nodes), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ModelError("density has non-finite values on the band")
    if np.any(vals < -_NEG_TOL):
        raise ModelError(f"density is negative on the band (min {vals.min()})")
    vals = np.clip(vals, 0.0, None)
    if not np.array_equal(vals, vals[::-1]):
        vals = 0.5 * (vals + vals[::-1])
    return vals


def floored_sum(fvals, gvals) -> np.ndarray:
    return np.maximum(np.asarray(fvals) + np.asarray(gvals), DENSITY_FLOOR)


# --------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class ObservationGeometry:
    """Missing intervals ``S = U_l [-M_l - N_l, -M_l]`` given as ``(M_l, N_l)`` pairs."""

    intervals: tuple = ()

    def __post_init__(self):
        ivs = tuple((float(m), float(n)) for m, n in self.intervals)
        object.__setattr__(self, "intervals", ivs)
        prev_end = 0.0
        for k, (m, n) in enumerate(ivs):
            if n < 0:
                raise ModelError(f"interval {k}: length N must be >= 0")
            if k == 0 and not m > 0:
                raise ModelError("first interval must start strictly after 0 (M_1 > 0)")
            if k > 0 and not m > prev_end:
                raise ModelError(f"interval {k}: intervals must be disjoint and ordered")
            prev_end = m + n

    @property
    def extent(self) -> float:
        """Distance from the origin to the far end of ``S``."""
        return max((m + n for m, n in self.intervals), default=0.0)

    def in_missing(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, bool)
        for m, n in self.intervals:
            out |= (t >= -(m + n)) & (t <= -m)
        return out

    def in_mirror(self, t) -> np.ndarray:
        """Membership in ``S+``, the reflection of ``S``."""
        return self.in_missing(-np.asarray(t, dtype=float))


# --------------------------------------------------------------------------
# weight function


@dataclass(frozen=True)
class WeightFunction:
    """Samples of ``a(t)`` on the lattice nodes ``0, step, ..., horizon``.

    Values on ``S+`` are forced to zero, which realizes the extended function
    that vanishes off ``R^s``.
    """

    step: float
    values: np.ndarray
    geometry: ObservationGeometry = field(default_factory=ObservationGeometry)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ModelError("weight values must be 1-d")
        if not np.all(np.isfinite(vals)):
            raise ModelError("weight values must be finite")
        vals[self.geometry.in_mirror(self.times_for(vals.size))] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def times_for(self, n: int) -> np.ndarray:
        return np.arange(n) * self.step

    @property
    def times(self) -> np.ndarray:
        return self.times_for(self.values.size)

    @property
    def support(self) -> float:
        nz = np.nonzero(self.values)[0]
        return float(nz[-1] * self.step) if nz.size else 0.0

    @property
    def l1(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.step)

    @property
    def moment(self) -> float:
        return float(np.sum(self.times * self.values**2) * self.step)

    def on(self, time: TimeGrid) -> np.ndarray:
        """The extended weight as a vector over the nodes of ``time`` (zero on S)."""
        if not np.isclose(time.step, self.step):
            raise ModelError("weight and time grid use different steps")
        if self.values.size > time.n_horizon + 1:
            extra = self.values[time.n_horizon + 1:]
            if np.any(extra != 0):
                raise ModelError("weight support exceeds the horizon")
        out = np.zeros(len(time))
        pos = time.index >= 0
        n = min(self.values.size, time.n_horizon + 1)
        out[np.nonzero(pos)[0][:n]] = self.values[:n]
        return out

    @classmethod
    def from_function(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        step: float,
        horizon: float,
        geometry: ObservationGeometry | None = None,
    ) -> "WeightFunction":
        n = int(lattice_index(horizon, step)) + 1
        t = np.arange(n) * step
        return cls(step, np.asarray(func(t), dtype=float), geometry or ObservationGeometry())

    @classmethod
    def box(cls, lo, hi, step, horizon, geometry=None, height=1.0):
        lattice_index([lo, hi], step)
        eps = 1e-9 * step
        return cls.from_function(
            lambda t: np.where((t >= lo - eps) & (t <= hi + eps), height, 0.0),
            step, horizon, geometry,
        )

    @classmethod
    def triangle(cls, lo, hi, step, horizon, geometry=None, height=1.0):
        lattice_index([lo, hi], step)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        if half <= 0:
            raise ModelError("triangle support must have positive length")
        return cls.from_function(
            lambda t: height * np.clip(1.0 - np.abs(t - mid) / half, 0.0, None),
            step, horizon, geometry,
        )


def functional_image(a: WeightFunction, freq: FreqGrid) -> np.ndarray:
    """``A(lambda) = sum_t step * a(t) * exp(-i t lambda)`` over ``R^s``."""
    return forward_transform(a.values, a.times, freq, sign=-1)


def truncate_weight(a: WeightFunction, n_cut: float) -> WeightFunction:
    """Keep ``a`` on ``[0, n_cut]`` and zero it beyond."""
    if n_cut < 0:
        raise ModelError("truncation point must be >= 0")
    k = int(lattice_index(n_cut, a.step))
    vals = np.array(a.values)
    vals[k + 1:] = 0.0
    return WeightFunction(a.step, vals, a.geometry)


# --------------------------------------------------------------------------
# full model


@dataclass(frozen=True)
class ProcessModel:
    signal: SpectralDensity
    noise: SpectralDensity
    geometry: ObservationGeometry
    weight: WeightFunction

    def __post_init__(self):
        if self.weight.geometry != self.geometry:
            raise ModelError("weight was built for a different geometry")

    def check_grids(self, time: TimeGrid, freq: FreqGrid) -> None:
        if not np.isclose(time.step, freq.step) or not np.isclose(time.step, self.weight.step):
            raise ModelError("time grid, frequency grid and weight must share one step")
        if self.weight.support > time.horizon:
            raise ModelError("weight support exceeds the horizon")
        try:
            lattice_index([v for iv in self.geometry.intervals for v in iv], time.step)
        except GridError as exc:
            raise ModelError(str(exc)) from exc

    def scaled(self, factor: float) -> "ProcessModel":
        return ProcessModel(
            self.signal.scaled(factor), self.noise.scaled(factor), self.geometry, self.weight
        )


@dataclass(frozen=True)
class MinimalityVerdict:
    passed: bool
    mass: float
    refined_mass: float

    @property
    def change(self) -> float:
        return abs(self.refined_mass - self.mass) / max(abs(self.mass), DENSITY_FLOOR)


def _midpoint_nodes(band: float, cells: int) -> tuple[np.ndarray, float]:
    width = 2.0 * band / cells
    return -band + (np.arange(cells) + 0.5) * width, width


def minimality_check(
    f: SpectralDensity,
    g: SpectralDensity,
    freq: FreqGrid,
    gamma=None,
    threshold: float = 0.1,
) -> MinimalityVerdict:
    """Refinement probe of ``(1/2pi) int |gamma|^2 / (f + g)``.

    The mass is computed with the midpoint rule on ``2K`` cells and again on
    ``4K`` cells (even counts keep a midpoint off ``lambda = 0``); the verdict passes when the relative change is below
    ``threshold``.  ``gamma`` is a callable, an array on the grid nodes, or
    ``None`` for the constant 1.
    """

    def mass(cells: int) -> float:
        lam, width = _midpoint_nodes(freq.band, cells)
        if gamma is None:
            g2 = np.ones_like(lam)
        elif callable(gamma):
            g2 = np.abs(gamma(lam)) ** 2
        else:
            g2 = np.interp(lam, freq.nodes, np.abs(np.asarray(gamma)) ** 2)
        return float(np.sum(g2 / floored_sum(f(lam), g(lam))) * width / (2.0 * np.pi))

    coarse = mass(2 * freq.size)
    fine = mass(4 * freq.size)
    verdict = MinimalityVerdict(False, coarse, fine)
    ok = np.isfinite(coarse) and np.isfinite(fine) and verdict.change < threshold
    return MinimalityVerdict(bool(ok), coarse, fine)

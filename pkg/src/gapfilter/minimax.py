"""Least favorable densities and minimax-robust filters over uncertainty classes.

Three classes are supported: an L1 ball and an L2 ball around a center density,
and the epsilon-contamination class ``(1 - eps) f1 + eps w`` with a power cap.
The least favorable pair is found by damped fixed-point iteration: solve the
filter at the current pair, update each density pointwise from its stationarity
equation with the multiplier tuned so the class constraint binds, and repeat.

Two equation sets are available.  ``"stationary"`` uses the equations that make
the pair a stationary point of the error over the class (first power of the
cross-error modulus for the L1/contamination classes, squared modulus for the
L2 class).  ``"mixed"`` uses the first power in the L2 updates and the squared
modulus in the noise update of the contamination pair; its fixed points need
not be saddle points.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .grid import FreqGrid, TimeGrid
from .model import (
    ModelError,
    SpectralDensity,
    Tabulated,
    WeightFunction,
    evaluate_density,
    floored_sum,
    functional_image,
)
from .solver import FilterSolution, mse_of_characteristic, solve_filter_arrays

__all__ = [
    "L1Ball",
    "L2Ball",
    "Contamination",
    "DensityClass",
    "class_distance",
    "membership_residual",
    "cross_error_densities",
    "bilinear_mse",
    "LeastFavorableResult",
    "solve_least_favorable",
    "solve_least_favorable_one_sided",
    "sample_class_member",
    "SaddleReport",
    "verify_saddle_point",
    "best_response",
    "perturbed_result",
    "MinimaxError",
]

logger = logging.getLogger(__name__)


class MinimaxError(ValueError):
    """Infeasible class or unusable iteration setup."""


@dataclass(frozen=True)
class L1Ball:
    center: SpectralDensity
    eps: float

    def __post_init__(self):
        if not self.eps >= 0:
            raise ModelError("eps must be >= 0")


@dataclass(frozen=True)
class L2Ball:
    center: SpectralDensity
    eps: float

    def __post_init__(self):
        if not self.eps >= 0:
            raise ModelError("eps must be >= 0")


@dataclass(frozen=True)
class Contamination:
    base: SpectralDensity
    eps: float
    power_cap: float

    def __post_init__(self):
        if not 0 <= self.eps < 1:
            raise ModelError("contamination eps must lie in [0, 1)")
        if not self.power_cap > 0:
            raise ModelError("power cap must be positive")

    @property
    def center(self) -> SpectralDensity:
        return self.base


DensityClass = Union[L1Ball, L2Ball, Contamination]


def _integ(freq: FreqGrid, values) -> float:
    return float(freq.integrate(values))


def class_distance(cls: DensityClass, values, freq: FreqGrid) -> float:
    """Constraint functional: L1/L2 distance to the center, or power for contamination."""
    x1 = evaluate_density(cls.center, freq)
    if isinstance(cls, L1Ball):
        return _integ(freq, np.abs(values - x1))
    if isinstance(cls, L2Ball):
        return _integ(freq, (values - x1) ** 2)
    return _integ(freq, values)


def membership_residual(cls: DensityClass, values, freq: FreqGrid) -> float:
    """How far ``values`` sit outside the class (0 for members)."""
    values = np.asarray(values, dtype=float)
    neg = max(0.0, -float(values.min()))
    if isinstance(cls, Contamination):
        x1 = evaluate_density(cls.base, freq)
        if cls.eps == 0:
            return float(np.max(np.abs(values - x1)))
        below = max(0.0, float(np.max((1 - cls.eps) * x1 - values)))
        over = max(0.0, class_distance(cls, values, freq) - cls.power_cap)
        return max(neg, below, over)
    return max(neg, class_distance(cls, values, freq) - cls.eps)


# --------------------------------------------------------------------------
# cross-error densities


def cross_error_densities(sol: FilterSolution) -> tuple[np.ndarray, np.ndarray]:
    """``|A g0 + C0|^2 / (f0+g0)^2`` and ``|A f0 - C0|^2 / (f0+g0)^2``."""
    s2 = floored_sum(sol.fvals, sol.gvals) ** 2
    hf = np.abs(sol.A * sol.gvals + sol.C) ** 2 / s2
    hg = np.abs(sol.A * sol.fvals - sol.C) ** 2 / s2
    return hf, hg


def bilinear_mse(hf, hg, fvals, gvals, freq: FreqGrid) -> float:
    """Error of the fixed filter behind ``(hf, hg)`` under densities ``(f, g)``."""
    return _integ(freq, hf * fvals + hg * gvals)


# --------------------------------------------------------------------------
# pointwise update rules


@dataclass(frozen=True)
class _Rule:
    kind: str  # "l2" or "max"
    power: int  # exponent applied to the cross-error modulus
    alpha_is_gain: bool  # reported multiplier equals the gain (else its reciprocal)
    label: str


def _rule(cls: DensityClass, side: str, one_sided: bool, equations: str) -> _Rule:
    if equations not in ("stationary", "mixed"):
        raise MinimaxError(f"unknown equation set {equations!r}")
    if isinstance(cls, L2Ball):
        power = 1 if equations == "mixed" else 2
        return _Rule("l2", power, False, f"{side}:l2")
    if isinstance(cls, Contamination):
        return _Rule("max", 1, True, f"{side}:contamination")
    # L1 ball
    if side == "f":
        return _Rule("max", 1, False, "f:l1")
    if one_sided:
        return _Rule("max", 1, True, "g:l1")
    if equations == "mixed":
        return _Rule("max", 2, False, "g:l1")
    return _Rule("max", 1, False, "g:l1")


def _bisect_gain(mass, target: float, tol: float = 1e-15) -> float:
    """Smallest gain with ``mass(gain) >= target`` for nondecreasing ``mass``."""
    lo, hi = 0.0, 1.0
    if mass(lo) >= target:
        return 0.0
    grow = 0
    while mass(hi) < target:
        lo, hi = hi, hi * 2.0
        grow += 1
        if grow > 200:
            raise MinimaxError("constraint cannot be made to bind (cross-error vanishes)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mass(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return hi


@dataclass
class _Side:
    cls: DensityClass | None
    fixed: np.ndarray | None
    rule: _Rule | None
    x1: np.ndarray | None = None
    base: np.ndarray | None = None

    @property
    def active(self) -> bool:
        return self.cls is not None and self.cls.eps > 0


def _make_side(cls, fixed, side, one_sided, equations, freq) -> _Side:
    if cls is None:
        return _Side(None, np.asarray(fixed, dtype=float), None)
    x1 = evaluate_density(cls.center, freq)
    base = x1
    if isinstance(cls, Contamination):
        base = (1.0 - cls.eps) * x1
        if _integ(freq, base) > cls.power_cap * (1 + 1e-12):
            raise MinimaxError("contamination class is empty: (1-eps) * power(f1) exceeds the cap")
        if cls.eps == 0 and _integ(freq, x1) > cls.power_cap * (1 + 1e-12):
            raise MinimaxError("contamination class is empty: power(f1) exceeds the cap")
    return _Side(cls, None, _rule(cls, side, one_sided, equations), x1, base)


def _start(side: _Side, freq: FreqGrid) -> np.ndarray:
    if side.cls is None:
        return side.fixed.copy()
    if isinstance(side.cls, Contamination) and side.cls.eps > 0:
        power = _integ(freq, side.x1)
        # feasible start: f1 itself when it fits under the cap, else the base
        return side.x1.copy() if power <= side.cls.power_cap else side.base.copy()
    return side.x1.copy()


def _update(side: _Side, modulus, other, s, freq: FreqGrid, gain=None):
    """Pointwise update for one side; returns (new values, gain)."""
    cls, rule = side.cls, side.rule
    drive = modulus**rule.power
    if rule.kind == "l2":
        direction = drive / s**2
        if gain is None:
            norm2 = _integ(freq, direction**2)
            gain = float(np.sqrt(cls.eps / norm2)) if norm2 > 0 else 0.0
        return side.x1 + gain * direction, gain

    def values(b):
        return np.maximum(side.base, b * drive - other)

    if gain is None:
        if isinstance(cls, Contamination):
            target = cls.power_cap
            gain = _bisect_gain(lambda b: _integ(freq, values(b)), target)
        else:
            target = cls.eps
            gain = _bisect_gain(lambda b: _integ(freq, values(b) - side.x1), target)
    return values(gain), gain


def _alpha(rule: _Rule | None, gain: float) -> float:
    if rule is None:
        return float("nan")
    if rule.alpha_is_gain:
        return gain
    return 1.0 / gain if gain > 0 else float("inf")


@dataclass
class LeastFavorableResult:
    freq: FreqGrid
    f0: np.ndarray
    g0: np.ndarray
    gains: tuple  # (f-side, g-side) multipliers in update form
    alphas: tuple  # the same multipliers as coefficients of the moduli (alpha form)
    phi: np.ndarray | None
    psi: np.ndarray | None
    h0: np.ndarray
    mse: float
    center_mse: float
    residuals: dict
    iterations: int
    converged: bool
    status: str
    solution: FilterSolution = field(repr=False)
    history: list = field(default_factory=list, repr=False)
    equations: str = "stationary"

    @property
    def f0_density(self) -> Tabulated:
        return Tabulated.on_grid(self.f0, self.freq)

    @property
    def g0_density(self) -> Tabulated:
        return Tabulated.on_grid(self.g0, self.freq)


def _side_residual(side: _Side, x, modulus, other, s, freq, gain) -> float:
    if not side.active:
        return 0.0
    u, _ = _update(side, modulus, other, s, freq, gain=gain)
    return float(np.max(np.abs(x - u) / np.maximum(s**2, 1e-300)))


def _constraint_residual(side: _Side, x, freq) -> float:
    if not side.active:
        return 0.0
    cls = side.cls
    if isinstance(cls, Contamination):
        return abs(_integ(freq, x) - cls.power_cap) / cls.power_cap
    return abs(class_distance(cls, x, freq) - cls.eps) / cls.eps


def _iterate(sf: _Side, sg: _Side, time, freq, weight, damping, tol, max_iter, equations):
    if not 0 < damping <= 1:
        raise MinimaxError("damping must lie in (0, 1]")
    a_vec = weight.on(time)
    A = functional_image(weight, freq)
    f, g = _start(sf, freq), _start(sg, freq)
    center = solve_filter_arrays(f if sf.cls is None else sf.x1,
                                 g if sg.cls is None else sg.x1, time, freq, a_vec, A=A,
                                 warn=False)

    history = []
    gains = (0.0, 0.0)
    status = "max_iter"
    iterations = 0
    if not (sf.active or sg.active):
        f = sf.x1.copy() if sf.cls is not None else f
        g = sg.x1.copy() if sg.cls is not None else g
        status = "singleton"
    else:
        for it in range(1, max_iter + 1):
            iterations = it
            sol = solve_filter_arrays(f, g, time, freq, a_vec, A=A, warn=False)
            s = floored_sum(f, g)
            mod_f = np.abs(A * g + sol.C)
            mod_g = np.abs(A * f - sol.C)
            f_new, gf = _update(sf, mod_f, g, s, freq) if sf.active else (f, 0.0)
            g_new, gg = _update(sg, mod_g, f, s, freq) if sg.active else (g, 0.0)
            gains = (gf, gg)
            scale = max(float(np.max(f_new)), float(np.max(g_new)), 1e-300)
            diff = max(float(np.max(np.abs(f_new - f))), float(np.max(np.abs(g_new - g)))) / scale
            history.append(diff)
            if not np.isfinite(diff):
                status = "diverged"
                break
            if diff < tol:
                f, g = f_new, g_new
                status = "converged"
                break
            f = (1 - damping) * f + damping * f_new
            g = (1 - damping) * g + damping * g_new

    sol = solve_filter_arrays(f, g, time, freq, a_vec, A=A)
    s = floored_sum(f, g)
    mod_f = np.abs(A * g + sol.C)
    mod_g = np.abs(A * f - sol.C)
    residuals = {
        "stationarity_f": _side_residual(sf, f, mod_f, g, s, freq, gains[0]),
        "stationarity_g": _side_residual(sg, g, mod_g, f, s, freq, gains[1]),
        "constraint_f": _constraint_residual(sf, f, freq),
        "constraint_g": _constraint_residual(sg, g, freq),
        "membership_f": membership_residual(sf.cls, f, freq) if sf.cls is not None else 0.0,
        "membership_g": membership_residual(sg.cls, g, freq) if sg.cls is not None else 0.0,
        "support_leakage": sol.diagnostics["support_leakage"],
        "last_update": history[-1] if history else 0.0,
    }

    phi = psi = None
    if sf.active and sf.rule.kind == "max" and gains[0] > 0:
        drive = mod_f**sf.rule.power
        if isinstance(sf.cls, Contamination):
            phi = drive / s - 1.0 / gains[0]
        else:
            psi = gains[0] * drive / s
    if sg.active and sg.rule.kind == "max" and gains[1] > 0 and psi is None:
        psi = gains[1] * mod_g**sg.rule.power / s

    result = LeastFavorableResult(
        freq=freq, f0=f, g0=g, gains=gains,
        alphas=(_alpha(sf.rule if sf.active else None, gains[0]),
                _alpha(sg.rule if sg.active else None, gains[1])),
        phi=phi, psi=psi, h0=sol.h, mse=sol.mse, center_mse=center.mse,
        residuals=residuals, iterations=iterations,
        converged=status in ("converged", "singleton"), status=status,
        solution=sol, history=history, equations=equations,
    )
    if not result.converged:
        logger.warning("least favorable iteration stopped with status %s after %d iterations",
                       status, iterations)
    return result


def solve_least_favorable(
    class_f: DensityClass,
    class_g: DensityClass,
    time: TimeGrid,
    freq: FreqGrid,
    weight: WeightFunction,
    *,
    damping: float = 0.5,
    tol: float = 1e-8,
    max_iter: int = 500,
    equations: str = "stationary",
) -> LeastFavorableResult:
    """Least favorable pair ``(f0, g0)`` for classes of signal and noise densities.

    Stops when the relative sup-norm update falls below ``tol`` or after
    ``max_iter`` iterations; non-convergence is reported in the result, not raised.
    """
    sf = _make_side(class_f, None, "f", False, equations, freq)
    sg = _make_side(class_g, None, "g", False, equations, freq)
    return _iterate(sf, sg, time, freq, weight, damping, tol, max_iter, equations)


def solve_least_favorable_one_sided(
    known: SpectralDensity,
    cls: DensityClass,
    side: str,
    time: TimeGrid,
    freq: FreqGrid,
    weight: WeightFunction,
    *,
    damping: float = 0.5,
    tol: float = 1e-8,
    max_iter: int = 500,
    equations: str = "stationary",
) -> LeastFavorableResult:
    """As :func:`solve_least_favorable` with one density known exactly.

    ``side`` names the density that is uncertain (``"f"`` or ``"g"``).
    """
    if side not in ("f", "g"):
        raise MinimaxError("side must be 'f' or 'g'")
    known_vals = evaluate_density(known, freq)
    if side == "f":
        sf = _make_side(cls, None, "f", True, equations, freq)
        sg = _make_side(None, known_vals, "g", True, equations, freq)
    else:
        sf = _make_side(None, known_vals, "f", True, equations, freq)
        sg = _make_side(cls, None, "g", True, equations, freq)
    return _iterate(sf, sg, time, freq, weight, damping, tol, max_iter, equations)


# --------------------------------------------------------------------------
# sampling class members


def _random_shape(freq: FreqGrid, rng: np.random.Generator) -> np.ndarray:
    """Smooth, even, random function on the grid with unit sup-norm."""
    u = np.abs(freq.nodes) / freq.band
    if rng.random() < 0.5:
        n_terms = 8
        coef = rng.standard_normal(n_terms) / (1.0 + np.arange(n_terms))
        z = np.cos(np.pi * np.outer(u, np.arange(n_terms))) @ coef
    else:
        center, width = rng.random(), 0.03 + 0.3 * rng.random()
        z = np.exp(-0.5 * ((u - center) / width) ** 2) * rng.choice([-1.0, 1.0])
    peak = np.max(np.abs(z))
    return z / peak if peak > 0 else np.ones_like(z)


def _into_ball(cls, x1, d, freq, radius_frac=1.0, exact=False):
    """Scale ``d`` into the ball (to its edge if ``exact``), then clip ``x1 + d`` at zero.

    Clipping only shrinks ``|d|`` pointwise, so the result stays in the ball.
    """
    if isinstance(cls, L1Ball):
        dist = _integ(freq, np.abs(d))
        limit = cls.eps * radius_frac
        factor = limit / dist if dist > 0 else 0.0
    else:
        dist = _integ(freq, d**2)
        limit = cls.eps * radius_frac**2
        factor = np.sqrt(limit / dist) if dist > 0 else 0.0
    if exact or dist > limit:
        d = d * factor
    return x1 + np.maximum(d, -x1)


def _contaminated(cls: Contamination, x1, excess, freq):
    base = (1.0 - cls.eps) * x1
    excess = np.maximum(excess, 0.0)
    room = cls.power_cap - _integ(freq, base)
    mass = _integ(freq, excess)
    if mass <= 0:
        excess, mass = np.ones_like(excess), _integ(freq, np.ones_like(excess))
    return base + excess * (room / mass)


def sample_class_member(cls: DensityClass, freq: FreqGrid, rng: np.random.Generator) -> np.ndarray:
    """A random member of the class, as samples on the grid."""
    x1 = evaluate_density(cls.center, freq)
    if cls.eps == 0:
        return x1
    z = _random_shape(freq, rng)
    if isinstance(cls, Contamination):
        return _contaminated(cls, x1, np.exp(2.0 * z), freq)
    if rng.random() < 0.5:
        z = np.abs(z)  # upward perturbations
    # a member at a random fraction of the radius
    frac = rng.random() ** 0.25
    return _into_ball(cls, x1, z, freq, radius_frac=frac, exact=True)


def _local_member(cls: DensityClass, x0, freq: FreqGrid, rng, scale: float) -> np.ndarray:
    """A member near ``x0``: a small random move, pulled back into the class."""
    x1 = evaluate_density(cls.center, freq)
    if cls.eps == 0:
        return x1
    z = _random_shape(freq, rng)
    if isinstance(cls, Contamination):
        base = (1.0 - cls.eps) * x1
        excess = x0 - base
        size = max(float(np.max(excess)), 1e-12)
        return _contaminated(cls, x1, excess + scale * size * z, freq)
    d0 = x0 - x1
    size = max(float(np.max(np.abs(d0))), 1e-12)
    return _into_ball(cls, x1, d0 + scale * size * z, freq)


def best_response(cls: DensityClass, weights, freq: FreqGrid) -> np.ndarray:
    """The class member maximizing ``(1/2pi) int weights * x``.

    For a fixed filter the error is linear in the densities, so this is the
    worst member for that filter.  Point masses are split over ``+-lambda`` to
    keep the member even.
    """
    x1 = evaluate_density(cls.center, freq)
    weights = np.asarray(weights, dtype=float)
    if cls.eps == 0:
        return x1
    if isinstance(cls, L2Ball):
        norm2 = _integ(freq, weights**2)
        if norm2 == 0:
            return x1
        return x1 + np.sqrt(cls.eps / norm2) * weights
    k = int(np.argmax(weights))
    spike = np.zeros_like(x1)
    spike[[k, freq.size - 1 - k]] = 1.0
    spike /= _integ(freq, spike)
    if isinstance(cls, L1Ball):
        return x1 + cls.eps * spike
    base = (1.0 - cls.eps) * x1
    return base + (cls.power_cap - _integ(freq, base)) * spike


# --------------------------------------------------------------------------
# saddle-point audit


@dataclass(frozen=True)
class SaddleReport:
    passed: bool
    max_violation: float
    tolerance: float
    density_violation: float
    filter_violation: float
    worst_sample: int
    samples: int


def verify_saddle_point(
    result: LeastFavorableResult,
    class_f: DensityClass | None,
    class_g: DensityClass | None,
    m: int = 100,
    seed: int = 0,
    local_scale: float = 0.05,
) -> SaddleReport:
    """Sampling audit of both saddle inequalities.

    Densities: the best response to ``h0`` and ``m`` class members (half drawn
    globally, half as small moves around the least favorable pair) must not
    raise the error of the fixed filter ``h0``.  Filters: ``m`` random perturbations of ``h0`` supported on
    the observation nodes must not lower the error under ``(f0, g0)``.
    A frozen side (class ``None``) stays at its value.
    """
    sol = result.solution
    freq = result.freq
    hf, hg = cross_error_densities(sol)
    d0 = bilinear_mse(hf, hg, result.f0, result.g0, freq)
    tol = 1e-6 * (1.0 + d0)
    rng = np.random.default_rng(seed)

    # the exact worst member for h0 leads the samples
    f_best = result.f0 if class_f is None else best_response(class_f, hf, freq)
    g_best = result.g0 if class_g is None else best_response(class_g, hg, freq)
    density_viol = bilinear_mse(hf, hg, f_best, g_best, freq) - d0
    worst = -1
    for i in range(m):
        local = i % 2 == 1
        f = result.f0 if class_f is None else (
            _local_member(class_f, result.f0, freq, rng, local_scale) if local
            else sample_class_member(class_f, freq, rng))
        g = result.g0 if class_g is None else (
            _local_member(class_g, result.g0, freq, rng, local_scale) if local
            else sample_class_member(class_g, freq, rng))
        viol = bilinear_mse(hf, hg, f, g, freq) - d0
        if viol > density_viol:
            density_viol, worst = viol, i

    # perturbations of the filter coefficients keep h in the observation span
    filter_viol = -np.inf
    omega = 2.0 * np.pi * np.outer(freq.orders, np.rint(sol.v_times / freq.step)) / freq.size
    basis = np.exp(1j * omega)
    v_scale = max(float(np.max(np.abs(sol.v))), 1e-12)
    for i in range(m):
        dv = rng.standard_normal(sol.v.size) * (1e-3 * v_scale)
        h = sol.h + basis @ dv
        viol = d0 - mse_of_characteristic(h, sol.A, result.f0, result.g0, freq)
        if viol > filter_viol:
            filter_viol = viol
            if viol > density_viol:
                worst = m + i

    max_viol = max(density_viol, filter_viol, 0.0)
    return SaddleReport(
        passed=bool(max_viol <= tol),
        max_violation=float(max_viol),
        tolerance=float(tol),
        density_violation=float(density_viol),
        filter_violation=float(filter_viol),
        worst_sample=int(worst),
        samples=m,
    )


def perturbed_result(
    result: LeastFavorableResult,
    class_f: DensityClass,
    time: TimeGrid,
    weight: WeightFunction,
    bump: float = 0.1,
    where: float = 0.5,
) -> LeastFavorableResult:
    """A deliberately wrong result: ``f0`` plus a bump, pulled back into ``class_f``.

    The filter is re-solved at the perturbed pair, so the result is internally
    consistent but not least favorable.  Used as a negative control.
    """
    freq = result.freq
    u = np.abs(freq.nodes) / freq.band
    shape = np.exp(-0.5 * ((u - where) / 0.05) ** 2)
    f = result.f0 + bump * float(np.max(result.f0)) * shape
    x1 = evaluate_density(class_f.center, freq)
    if isinstance(class_f, Contamination):
        f = _contaminated(class_f, x1, f - (1 - class_f.eps) * x1, freq)
    else:
        d = f - x1
        dist = class_distance(class_f, f, freq)
        if isinstance(class_f, L1Ball):
            f = x1 + d * (class_f.eps / dist)
        else:
            f = x1 + d * np.sqrt(class_f.eps / dist)
    sol = solve_filter_arrays(f, result.g0, time, freq, weight.on(time),
                              A=functional_image(weight, freq))
    return replace(result, f0=f, h0=sol.h, mse=sol.mse, solution=sol, status="perturbed")

"""Independent checks: Gaussian conditioning on the observed nodes and path simulation.

Nothing here touches the B/R/Q operators.  Covariances come straight from the
densities by Wiener-Khinchin quadrature on the frequency grid, so the oracle
and the operator solver describe the same finite (periodic-lattice) problem.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .grid import FreqGrid, TimeGrid, lattice_index
from .model import ProcessModel, WeightFunction, evaluate_density
from .solver import FilterSolution, estimate_on_path, observed_times

__all__ = [
    "covariance_from_density",
    "OracleResult",
    "brute_force_projection",
    "PathBatch",
    "simulate_paths",
    "empirical_mse",
    "OracleComparison",
    "compare_with_oracle",
    "MonteCarloReport",
    "monte_carlo_check",
    "ORACLE_TOL",
]

ORACLE_TOL = 1e-6


def covariance_from_density(fvals, freq: FreqGrid, max_lag: int) -> np.ndarray:
    """``r(n * step) = (1/2pi) sum_k dlambda f(lambda_k) cos(lambda_k n step)`` for ``n = 0..max_lag``."""
    fvals = np.asarray(fvals, dtype=float)
    lags = np.arange(max_lag + 1)
    ang = 2.0 * np.pi * np.outer(lags, freq.orders) / freq.size
    return np.cos(ang) @ fvals * (freq.spacing / (2.0 * np.pi))


@dataclass(frozen=True)
class OracleResult:
    times: np.ndarray
    weights: np.ndarray
    mse: float
    variance: float
    regularized: bool


def brute_force_projection(
    model: ProcessModel,
    time: TimeGrid,
    freq: FreqGrid,
    window: float | None = None,
    weight: WeightFunction | None = None,
) -> OracleResult:
    """Project the functional onto the observations by solving the normal equations.

    ``window`` defaults to the full observation window of the lattice circle;
    a shorter window observes fewer nodes.
    """
    weight = weight or model.weight
    step = time.step
    fvals = evaluate_density(model.signal, freq)
    gvals = evaluate_density(model.noise, freq)
    obs = observed_times(time, freq)
    if window is not None:
        n_w = int(lattice_index(window, step))
        obs = obs[obs >= -n_w * step - 0.5 * step]
    obs_idx = lattice_index(obs, step)

    a = weight.values
    a_idx = np.arange(a.size)
    nz = a != 0
    a, a_idx = a[nz], a_idx[nz]

    span = int(max(obs_idx.max() - obs_idx.min(), 0) + (a_idx.max() if a_idx.size else 0)
               + abs(obs_idx.min()))
    r_sig = covariance_from_density(fvals, freq, span)
    r_obs = covariance_from_density(fvals + gvals, freq, span)

    gram = r_obs[np.abs(obs_idx[:, None] - obs_idx[None, :])]
    # E[A xi * y(u)] = sum_s step a(s) r(u + s)
    cross = r_sig[np.abs(obs_idx[:, None] + a_idx[None, :])] @ (step * a)
    variance = float((step * a) @ r_sig[np.abs(a_idx[:, None] - a_idx[None, :])] @ (step * a))

    regularized = False
    try:
        factor = linalg.cho_factor(gram, lower=True)
    except linalg.LinAlgError:
        ridge = 1e-10 * np.trace(gram) / gram.shape[0]
        factor = linalg.cho_factor(gram + ridge * np.eye(gram.shape[0]), lower=True)
        regularized = True
    w = linalg.cho_solve(factor, cross)
    w += linalg.cho_solve(factor, cross - gram @ w)
    mse = variance - float(cross @ w)
    return OracleResult(times=obs, weights=w, mse=max(mse, 0.0), variance=variance,
                        regularized=regularized)


@dataclass(frozen=True)
class PathBatch:
    times: np.ndarray  # observation times
    observations: np.ndarray  # (n, n_obs) samples of signal + noise
    signal: np.ndarray  # (n, n_obs) samples of the signal alone
    target: np.ndarray  # (n,) exact functional values
    seed: int


def simulate_paths(
    model: ProcessModel,
    time: TimeGrid,
    freq: FreqGrid,
    count: int,
    seed: int,
    chunk: int = 1000,
) -> PathBatch:
    """Spectral synthesis over the frequency grid.

    ``xi(t) = sum_k sqrt(f_k dlambda / 2pi) (z_k cos(lambda_k t) + z'_k sin(lambda_k t))``
    with independent standard normals, and likewise for the noise.  Paths are
    drawn in fixed-size chunks, each from its own child of ``SeedSequence(seed)``,
    so a batch is reproducible bit for bit.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    fvals = evaluate_density(model.signal, freq)
    gvals = evaluate_density(model.noise, freq)
    obs = observed_times(time, freq)
    obs_idx = lattice_index(obs, time.step)
    ang = 2.0 * np.pi * (np.outer(freq.orders, obs_idx) % freq.size) / freq.size
    cos, sin = np.cos(ang), np.sin(ang)
    amp_f = np.sqrt(fvals * freq.spacing / (2.0 * np.pi))[:, None]
    amp_g = np.sqrt(gvals * freq.spacing / (2.0 * np.pi))[:, None]
    basis_f = np.vstack([amp_f * cos, amp_f * sin])
    basis_g = np.vstack([amp_g * cos, amp_g * sin])

    # functional uses xi(-s) for s on the weight lattice; those are observation nodes
    a = model.weight.values
    pos = {int(n): j for j, n in enumerate(obs_idx)}
    target_cols, target_w = [], []
    for s, val in enumerate(a):
        if val != 0:
            target_cols.append(pos[-s])
            target_w.append(time.step * val)
    target_cols = np.asarray(target_cols, dtype=np.int64)
    target_w = np.asarray(target_w)

    n_chunks = -(-count // chunk)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sig, obsv = [], []
    for k, child in enumerate(children):
        m = min(chunk, count - k * chunk)
        rng = np.random.default_rng(child)
        z = rng.standard_normal((m, 2 * freq.size))
        zn = rng.standard_normal((m, 2 * freq.size))
        xi = z @ basis_f
        sig.append(xi)
        obsv.append(xi + zn @ basis_g)
    signal = np.vstack(sig)
    observations = np.vstack(obsv)
    target = signal[:, target_cols] @ target_w if target_cols.size else np.zeros(count)
    return PathBatch(obs, observations, signal, target, seed)


def empirical_mse(sol: FilterSolution, batch: PathBatch) -> tuple[float, float]:
    """Mean squared residual of the filter over the batch and its standard error."""
    n = batch.target.size
    if n == 0:
        raise ValueError("empty batch")
    if batch.times.size != sol.v_times.size or not np.allclose(batch.times, sol.v_times):
        raise ValueError("batch and solution use different observation nodes")
    err2 = (batch.target - estimate_on_path(sol, batch.observations)) ** 2
    mean = float(err2.mean())
    se = float(err2.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return mean, se


@dataclass(frozen=True)
class OracleComparison:
    mse_gap: float  # relative gap of the errors
    weight_gap: float  # relative L2 gap of the coefficients
    passed: bool


def compare_with_oracle(
    sol: FilterSolution, oracle: OracleResult, tol: float = ORACLE_TOL, weight_tol: float = 1e-4
) -> OracleComparison:
    """Relative disagreement between the operator solution and the projection.

    The error gap is taken relative to ``max(mse_oracle, 1e-10 * variance)`` so a
    zero-error problem compares against round-off rather than against zero.
    """
    if oracle.times.size != sol.v_times.size or not np.allclose(oracle.times, sol.v_times):
        raise ValueError("oracle and solution use different observation nodes")
    denom = max(oracle.mse, 1e-10 * oracle.variance, 1e-300)
    mse_gap = abs(sol.mse - oracle.mse) / denom
    w_norm = float(np.linalg.norm(oracle.weights))
    diff = float(np.linalg.norm(sol.v - oracle.weights))
    weight_gap = diff / w_norm if w_norm > 0 else diff
    return OracleComparison(float(mse_gap), weight_gap,
                            bool(mse_gap <= tol and weight_gap <= weight_tol))


@dataclass(frozen=True)
class MonteCarloReport:
    mse: float
    empirical: float
    standard_error: float
    allowance: float  # k standard errors plus the round-off floor
    paths: int
    passed: bool


def monte_carlo_check(sol: FilterSolution, batch: PathBatch, k: float = 3.0) -> MonteCarloReport:
    """Empirical error against the predicted one.

    Passes when they differ by at most ``k`` standard errors plus
    ``1e-12 * variance``; the floor covers zero-error problems where both sides
    are round-off.
    """
    mean, se = empirical_mse(sol, batch)
    allowance = k * se + 1e-12 * sol.variance
    return MonteCarloReport(sol.mse, mean, se, allowance, int(batch.target.size),
                            bool(abs(mean - sol.mse) <= allowance))

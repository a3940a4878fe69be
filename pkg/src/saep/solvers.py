"""Fixed-point solvers: naive EP, AMP, and self-averaging EP.

All three algorithms share one message sweep in TAP form (two
matrix-vector products, no factorizations) and differ only in how the
cavity precisions are refreshed between sweeps:

* ``amp``: two scalars from the running tilted-variance averages;
* ``saep``: two scalars driven by the S-transform of the measurement
  spectrum, so any rotation-invariant ensemble is covered;
* ``ep``: per-coordinate vectors from the exact Gram diagonals, which
  costs a dense factorization per sweep and is the baseline the spectral
  methods are measured against.

The first sweep runs with the configured initial cavities; updates start
at the second iteration once tilted variances from a completed sweep
exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, solve_triangular
from scipy.linalg.lapack import dtrtri

from .ensembles import SpectralProfile, singular_values
from .exceptions import (
    DegenerateStateError,
    DivergenceError,
    DomainError,
    InstabilityError,
)
from .freeprob import alpha_prime, s_transform
from .scalar_models import ModelSpec, likelihood_moments_batch, prior_moments_batch

ALGORITHMS = ("ep", "amp", "saep")
_DEFAULT_DAMPING = {"ep": 0.3, "amp": 0.0, "saep": 0.0}


@dataclass
class SolverConfig:
    """Knobs shared by the three solvers.

    ``damping`` relaxes the message updates (rho_x, rho_z, m) as
    ``new = (1 - d) * proposed + d * old``; ``None`` picks the
    per-algorithm default (0.3 for EP, undamped otherwise).
    ``spectral_source`` records whether SAEP should use the ensemble's
    analytic law or the singular values of the concrete matrix.
    """

    algorithm: str = "saep"
    max_iters: int = 200
    tol: float = 1e-8
    damping: float | None = None
    spectral_source: str = "empirical"
    init_v: float = 1.0
    init_site: float | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.damping is not None and not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.spectral_source not in ("analytic", "empirical"):
            raise ValueError("spectral_source must be 'analytic' or 'empirical'")

    @property
    def effective_damping(self) -> float:
        return _DEFAULT_DAMPING[self.algorithm] if self.damping is None else self.damping


@dataclass
class SolverState:
    """Everything a sweep reads and writes.

    Cavity vectors are per-coordinate for EP and constant blocks for
    AMP/SAEP (the scalars ride along in ``v_x``/``v_z``).  Site vectors
    exist only for EP.
    """

    rho_x: np.ndarray
    rho_z: np.ndarray
    m: np.ndarray
    eta_x: np.ndarray
    eta_z: np.ndarray
    chi_x: np.ndarray
    chi_z: np.ndarray
    cavity_x: np.ndarray
    cavity_z: np.ndarray
    v_x: float
    v_z: float
    site_x: np.ndarray | None = None
    site_z: np.ndarray | None = None
    iteration: int = 0


@dataclass
class FixedPointReport:
    """Outcome of a solver run."""

    algorithm: str
    converged: bool
    iterations: int
    final_residual: float
    v_x: float
    v_z: float
    lambda_x: float
    lambda_z: float
    chi_x_mean: float
    chi_z_mean: float
    mse_trajectory: list = field(default_factory=list)
    residual_trajectory: list = field(default_factory=list)
    cavity_trajectory: list = field(default_factory=list)
    cavity_x_samples: object = None
    cavity_z_samples: object = None
    warnings: list = field(default_factory=list)
    eta_x: np.ndarray | None = None


def init_state(model: ModelSpec, y, config: SolverConfig) -> SolverState:
    """Zero messages, unit-scale cavities, and the matching tilted moments.

    EP sites default to the moment-consistent values
    ``L(0) = 1/chi(0) - LL(0)``; a flat numeric ``init_site`` is the knob
    for problems that need a different warm start (cold flat sites make
    the first x-cavity refresh go negative for sparse priors).
    """
    k, n = model.n_cols, model.n_rows
    v = float(config.init_v)
    rho_x = np.zeros(k)
    rho_z = np.zeros(n)
    eta_x, chi_x = prior_moments_batch(model.prior, rho_x, v)
    eta_z, chi_z = likelihood_moments_batch(model.likelihood, y, rho_z, v)
    state = SolverState(
        rho_x=rho_x, rho_z=rho_z, m=np.zeros(n),
        eta_x=eta_x, eta_z=eta_z, chi_x=chi_x, chi_z=chi_z,
        cavity_x=np.full(k, v), cavity_z=np.full(n, v), v_x=v, v_z=v,
    )
    if config.algorithm == "ep":
        if config.init_site is None:
            state.site_x = 1.0 / np.maximum(chi_x, 1e-12) - state.cavity_x
            state.site_z = 1.0 / np.maximum(chi_z, 1e-12) - state.cavity_z
        else:
            state.site_x = np.full(k, float(config.init_site))
            state.site_z = np.full(n, float(config.init_site))
    return state


def _sweep_z_half(state: SolverState, model: ModelSpec, h, y, damping: float):
    """rho_z update, z-side tilted moments, Onsager-corrected m."""
    d = damping
    rho_z = state.cavity_z * (h @ state.eta_x) - state.m
    if d:
        rho_z = (1.0 - d) * rho_z + d * state.rho_z
    state.rho_z = rho_z
    state.eta_z, state.chi_z = likelihood_moments_batch(
        model.likelihood, y, rho_z, state.cavity_z
    )
    m = state.cavity_z * state.eta_z - rho_z
    if d:
        m = (1.0 - d) * m + d * state.m
    state.m = m


def _sweep_x_half(state: SolverState, model: ModelSpec, h, damping: float):
    """rho_x update and x-side tilted moments."""
    d = damping
    rho_x = state.cavity_x * state.eta_x + h.T @ state.m
    if d:
        rho_x = (1.0 - d) * rho_x + d * state.rho_x
    state.rho_x = rho_x
    state.eta_x, state.chi_x = prior_moments_batch(model.prior, rho_x, state.cavity_x)


def tap_sweep(state: SolverState, model: ModelSpec, h, y, damping: float = 0.0) -> SolverState:
    """One message sweep in TAP form (mutates and returns ``state``).

    Order: rho_z from the z-cavities and the current eta_x; z-side tilted
    moments; the Onsager-corrected m; rho_x; x-side tilted moments.  Only
    ``H eta_x`` and ``H^T m`` touch the matrix.
    """
    _sweep_z_half(state, model, h, y, damping)
    _sweep_x_half(state, model, h, damping)
    state.iteration += 1
    if not (
        np.all(np.isfinite(state.eta_x))
        and np.all(np.isfinite(state.eta_z))
        and np.all(np.isfinite(state.m))
    ):
        raise DivergenceError("non-finite state after sweep", iteration=state.iteration)
    return state


def amp_cavity_update(state: SolverState, alpha: float):
    """Scalar cavity refresh from the running tilted-variance averages."""
    chi_x = float(np.mean(state.chi_x))
    chi_z = float(np.mean(state.chi_z))
    if chi_x <= 0.0:
        raise DivergenceError(f"mean tilted variance <= 0 ({chi_x})", iteration=state.iteration)
    v_z = 1.0 / chi_x
    v_x = alpha * (1.0 - v_z * chi_z) / chi_x
    return v_x, v_z


def saep_cavity_update(state: SolverState, profile: SpectralProfile, alpha: float, v_x_prev: float, warn=None):
    """Spectrum-aware scalar cavity refresh.

    ``v_z`` rescales the naive precision by the S-transform of the
    measurement Gram spectrum at ``-v_x_prev <chi_x> / alpha``; ``v_x``
    follows from the compact aspect-ratio form.  An argument outside the
    S-transform domain is clamped to the boundary and surfaced as a
    warning instead of aborting the run.
    """
    chi_x = float(np.mean(state.chi_x))
    chi_z = float(np.mean(state.chi_z))
    if chi_x <= 0.0:
        raise DivergenceError(f"mean tilted variance <= 0 ({chi_x})", iteration=state.iteration)
    arg = -v_x_prev * chi_x / alpha
    ap = alpha_prime(profile, "nxn")
    clipped = min(max(arg, -ap * (1.0 - 1e-12)), 0.0)
    if clipped != arg and warn is not None:
        warn.append(
            f"iteration {state.iteration}: S-transform argument {arg:.6g} clamped to {clipped:.6g}"
        )
    s_val = s_transform(profile, "nxn", clipped)
    v_z = (1.0 / chi_x - v_x_prev) * s_val
    v_x = alpha * (1.0 - v_z * chi_z) / chi_x
    return v_x, v_z


def ep_cavity_update(state: SolverState, h, gram=None) -> SolverState:
    """Per-coordinate cavity refresh via the exact Gram diagonals.

    Schedule: refresh the z sites from the latest z moments, factorize
    ``Lx + H^T Lz H`` once, read both Gram diagonals off the triangular
    factor, then refresh the z cavities, the x sites and the x cavities.
    The O(K^3) factorization is the whole point of comparison.  ``gram``
    is accepted for interface stability but unused: the weighted Gram
    ``H^T Lz H`` depends on the current sites and cannot be precomputed.
    """
    it = state.iteration
    if np.any(state.chi_z == 0.0) or np.any(state.chi_x == 0.0):
        raise DegenerateStateError("zero tilted variance in EP cavity update")
    site_z = 1.0 / state.chi_z - state.cavity_z
    mat = (h.T * site_z) @ h
    mat[np.diag_indices_from(mat)] += state.site_x
    try:
        low, _ = cho_factor(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise InstabilityError(
            f"precision matrix lost positive definiteness at iteration {it}", iteration=it
        ) from exc
    inv_low, info = dtrtri(low, lower=1)
    if info != 0:
        raise InstabilityError(f"triangular inversion failed at iteration {it}", iteration=it)
    # cho_factor leaves junk above the diagonal and dtrtri keeps it there
    inv_low = np.tril(inv_low)
    diag_sigma = np.einsum("ij,ij->j", inv_low, inv_low)
    w = solve_triangular(low, h.T, lower=True, check_finite=False)
    diag_h_sigma_ht = np.einsum("ij,ij->j", w, w)
    if np.any(diag_sigma == 0.0) or np.any(diag_h_sigma_ht == 0.0):
        raise DegenerateStateError("zero Gram diagonal in EP cavity update")

    cavity_z = 1.0 / diag_h_sigma_ht - site_z
    site_x = 1.0 / state.chi_x - state.cavity_x
    cavity_x = 1.0 / diag_sigma - site_x
    if np.any(cavity_z <= 0.0) or np.any(cavity_x <= 0.0):
        raise DivergenceError(
            f"EP cavity precision went non-positive at iteration {it}", iteration=it
        )
    state.site_z = site_z
    state.site_x = site_x
    state.cavity_z = cavity_z
    state.cavity_x = cavity_x
    state.v_x = float(np.mean(cavity_x))
    state.v_z = float(np.mean(cavity_z))
    return state


def objective_fe0(h, site_x, site_z, cavity_x, cavity_z) -> float:
    """Log-determinant objective whose stationary points are EP fixed points.

    ``ln|Lx + H^T Lz H| - ln|L + LL|`` with the second determinant taken
    over the full diagonal (both blocks).  The gradient with respect to
    each site precision vanishes exactly at an EP fixed point, which the
    test suite checks by central differences.
    """
    site_x = np.asarray(site_x, dtype=float)
    site_z = np.asarray(site_z, dtype=float)
    cavity_x = np.asarray(cavity_x, dtype=float)
    cavity_z = np.asarray(cavity_z, dtype=float)
    mat = (h.T * site_z) @ h
    mat[np.diag_indices_from(mat)] += site_x
    try:
        low, _ = cho_factor(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Lx + H^T Lz H is not positive definite") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(low))))
    diag = np.concatenate([site_x + cavity_x, site_z + cavity_z])
    if np.any(diag <= 0.0):
        raise ValueError("L + LL has a non-positive diagonal entry")
    return logdet - float(np.sum(np.log(diag)))


def run(
    model: ModelSpec,
    h,
    y,
    config: SolverConfig,
    x_true=None,
    profile: SpectralProfile | None = None,
) -> FixedPointReport:
    """Iterate (cavity update; sweep) until the estimator stops moving.

    Convergence is the sup-norm change of ``eta_x``; damping acts on the
    messages only.  Divergence and EP instabilities are caught and turned
    into a non-converged report with a warning rather than an exception.

    Parameters
    ----------
    x_true : array, optional
        Ground truth; enables the per-iteration MSE trajectory
        ``10 log10(||eta_x - x_true||^2 / K)``.
    profile : SpectralProfile, optional
        Spectrum for SAEP; defaults to the singular values of ``h``
        (matching ``spectral_source='empirical'``).
    """
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = h.shape
    if (n, k) != (model.n_rows, model.n_cols):
        raise ValueError(f"matrix is {h.shape}, model says {(model.n_rows, model.n_cols)}")
    alpha = model.alpha
    algo = config.algorithm
    if algo == "saep" and profile is None:
        profile = singular_values(h, check=False)
    gram = None  # EP reuses H through the factorization; no Gram precompute needed

    state = init_state(model, y, config)
    damping = config.effective_damping
    warnings: list[str] = []
    mse_traj: list = []
    residual_traj: list = []
    cavity_traj: list = []
    converged = False
    it = 0
    scalar_cavities = algo in ("amp", "saep")

    def _scalar_update(v_x_prev):
        if algo == "amp":
            return amp_cavity_update(state, alpha)
        return saep_cavity_update(state, profile, alpha, v_x_prev, warn=warnings)

    try:
        for it in range(1, config.max_iters + 1):
            # The first sweep runs on the configured initial cavities; from
            # then on v_z is refreshed before the z half-sweep and v_x right
            # after it, so v_z is always paired with z variances produced
            # under v_z itself (which keeps 1 - v_z <chi_z> positive).  At a
            # fixed point this coincides with updating both scalars at once.
            v_x_prev = state.v_x
            if it > 1 and scalar_cavities:
                _, state.v_z = _scalar_update(v_x_prev)
                if state.v_z <= 0.0:
                    raise DivergenceError(
                        f"cavity precision v_z went non-positive ({state.v_z:.6g})",
                        iteration=it,
                    )
                state.cavity_z = np.full(n, state.v_z)
            elif it > 1:
                ep_cavity_update(state, h, gram)
            eta_prev = state.eta_x
            _sweep_z_half(state, model, h, y, damping)
            if it > 1 and scalar_cavities:
                state.v_x, _ = _scalar_update(v_x_prev)
                if state.v_x <= 0.0:
                    raise DivergenceError(
                        f"cavity precision v_x went non-positive ({state.v_x:.6g})",
                        iteration=it,
                    )
                state.cavity_x = np.full(k, state.v_x)
            _sweep_x_half(state, model, h, damping)
            state.iteration += 1
            if not (np.all(np.isfinite(state.eta_x)) and np.all(np.isfinite(state.m))):
                raise DivergenceError("non-finite state after sweep", iteration=it)
            residual = float(np.max(np.abs(state.eta_x - eta_prev))) if k else 0.0
            residual_traj.append(residual)
            cavity_traj.append((it, state.v_x, state.v_z))
            if x_true is not None:
                mse = float(np.sum((state.eta_x - x_true) ** 2) / k)
                mse_traj.append((it, 10.0 * np.log10(mse) if mse > 0 else -np.inf))
            if residual <= config.tol:
                converged = True
                break
    except (DivergenceError, InstabilityError, DegenerateStateError, DomainError, ValueError) as exc:
        warnings.append(f"aborted at iteration {it}: {exc}")

    chi_x_mean = float(np.mean(state.chi_x)) if k else 0.0
    chi_z_mean = float(np.mean(state.chi_z)) if n else 0.0
    with np.errstate(divide="ignore"):
        lambda_x = (1.0 / chi_x_mean if chi_x_mean > 0 else np.inf) - state.v_x
        lambda_z = (1.0 / chi_z_mean if chi_z_mean > 0 else np.inf) - state.v_z
    if lambda_x < 0 or lambda_z < 0:
        warnings.append(f"negative site scalar: lambda_x={lambda_x:.6g}, lambda_z={lambda_z:.6g}")
    if algo == "ep" and state.site_z is not None and np.any(state.site_z < 0.0):
        warnings.append(f"{int(np.sum(state.site_z < 0))} negative z-site precisions at exit")
    return FixedPointReport(
        algorithm=algo,
        converged=converged,
        iterations=state.iteration,
        final_residual=residual_traj[-1] if residual_traj else np.inf,
        v_x=state.v_x,
        v_z=state.v_z,
        lambda_x=float(lambda_x),
        lambda_z=float(lambda_z),
        chi_x_mean=chi_x_mean,
        chi_z_mean=chi_z_mean,
        mse_trajectory=mse_traj,
        residual_trajectory=residual_traj,
        cavity_trajectory=cavity_traj,
        cavity_x_samples=state.cavity_x.copy() if algo == "ep" else state.v_x,
        cavity_z_samples=state.cavity_z.copy() if algo == "ep" else state.v_z,
        warnings=warnings,
        eta_x=state.eta_x.copy(),
    )

"""First and second moments of one-dimensional tilted densities.

A tilted density combines one non-Gaussian factor (prior or likelihood)
with a Gaussian cavity term ``exp(-v s^2 / 2 + rho s)``.  Every solver in
this package reduces its per-coordinate work to these moment maps, so the
kernels here are vectorized and numerically hardened: spike/slab
responsibilities are formed in log space and the one-sided truncated
Gaussian moments go through the scaled complementary error function, with
an asymptotic tail series once cancellation would start eating digits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, expit, ndtr

from .exceptions import DegenerateMomentError

PRIOR_FAMILIES = ("spike_slab", "gaussian")
LIKELIHOOD_FAMILIES = ("sign", "gaussian_noise")

_SQRT_2 = np.sqrt(2.0)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)

# Tail series for the lower-truncated standard Gaussian, in u = 1/t^2:
#   hazard(t) - t      = (1/t) * sum_k DELTA_COEFFS[k] u^k
#   1 - hazard*(h - t) = u * sum_k VARFAC_COEFFS[k] u^k
# Machine precision for t >= 25; the direct formula is used below that.
_TAIL_SWITCH = 25.0
_DELTA_COEFFS = np.array(
    [1.0, -2.0, 10.0, -74.0, 706.0, -8162.0, 110410.0, -1708394.0, 29752066.0]
)
_VARFAC_COEFFS = np.array(
    [1.0, -6.0, 50.0, -518.0, 6354.0, -89782.0, 1435330.0, -25625910.0, 505785122.0]
)


@dataclass(frozen=True)
class PriorSpec:
    """Separable prior on the latent signal.

    ``spike_slab`` is ``(1 - rho) delta_0 + rho Normal(0, tau)``; the
    ``gaussian`` family is the same thing with ``rho = 1``.
    """

    family: str = "spike_slab"
    rho: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if self.family not in PRIOR_FAMILIES:
            raise ValueError(f"unknown prior family {self.family!r}")
        if not np.isfinite(self.rho) or not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"slab weight rho must be in [0, 1], got {self.rho}")
        if not np.isfinite(self.tau) or self.tau <= 0.0:
            raise ValueError(f"slab variance tau must be positive, got {self.tau}")
        if self.family == "gaussian" and self.rho != 1.0:
            raise ValueError("gaussian prior requires rho = 1")


@dataclass(frozen=True)
class LikelihoodSpec:
    """Separable observation channel.

    ``sign`` is the one-bit channel ``y = sign(z)`` with labels in
    {-1, +1}; ``gaussian_noise`` is ``y = z + Normal(0, noise_var)``.
    """

    family: str = "sign"
    noise_var: float = 1.0

    def __post_init__(self):
        if self.family not in LIKELIHOOD_FAMILIES:
            raise ValueError(f"unknown likelihood family {self.family!r}")
        if not np.isfinite(self.noise_var) or self.noise_var <= 0.0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")


@dataclass(frozen=True)
class TiltedMoments:
    """Mean and variance of a one-dimensional tilted density."""

    mean: float
    variance: float


@dataclass(frozen=True)
class ModelSpec:
    """Full inference problem: prior, likelihood and dimensions (N x K)."""

    prior: PriorSpec
    likelihood: LikelihoodSpec
    n_rows: int
    n_cols: int

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("dimensions must be positive")

    @property
    def alpha(self) -> float:
        return self.n_rows / self.n_cols


def _spike_slab_moments(rho, tau, r, v):
    """Vectorized moments of ``q(x) \\propto f(x) exp(-v x^2/2 + r x)``.

    The slab responsibility uses log weights so that ``r^2 / (2 a)`` far
    beyond 700 cannot overflow.  ``rho = 0`` degenerates to a point mass
    at zero (variance 0).
    """
    a = v + 1.0 / tau
    mu = r / a
    with np.errstate(divide="ignore"):
        log_w1 = np.log(rho) - 0.5 * np.log(tau * a) + 0.5 * r * r / a
        log_w0 = np.log1p(-rho)
    p1 = expit(log_w1 - log_w0)
    mean = p1 * mu
    variance = p1 / a + p1 * (1.0 - p1) * mu * mu
    return mean, variance


def _trunc_gauss_std(t):
    """Moment factors of a standard Gaussian truncated to ``(t, inf)``.

    Returns ``(delta, varfac)`` where the truncated mean is ``t + delta``
    (``delta`` is the hazard ratio minus ``t``) and the truncated variance
    is ``varfac = 1 - hazard * delta``.
    """
    t = np.asarray(t, dtype=float)
    delta = np.empty_like(t)
    varfac = np.empty_like(t)

    tail = t > _TAIL_SWITCH
    deep = t < -26.0
    mid = ~(tail | deep)

    if np.any(mid):
        tm = t[mid]
        lam = _SQRT_2_OVER_PI / erfcx(tm / _SQRT_2)
        d = lam - tm
        delta[mid] = d
        varfac[mid] = 1.0 - lam * d
    if np.any(deep):
        # truncation point far in the left tail: erfcx would overflow, but
        # the plain density/CDF ratio is safe there (and may underflow to 0)
        td = t[deep]
        lam = np.exp(-0.5 * td * td) / (np.sqrt(2.0 * np.pi) * ndtr(-td))
        delta[deep] = lam - td
        varfac[deep] = 1.0 - lam * (lam - td)
    if np.any(tail):
        u = 1.0 / (t[tail] * t[tail])
        delta[tail] = np.polynomial.polynomial.polyval(u, _DELTA_COEFFS) / t[tail]
        varfac[tail] = u * np.polynomial.polynomial.polyval(u, _VARFAC_COEFFS)
    return delta, varfac


def _sign_moments(y, r, v):
    """Vectorized moments of the one-bit tilted density.

    ``q(z) \\propto 1{y z > 0} exp(-v z^2/2 + r z)``: a Gaussian with base
    mean ``r/v`` and variance ``1/v`` truncated to the half line with the
    sign of ``y``.
    """
    s = 1.0 / np.sqrt(v)
    t = -y * r * s  # standardized truncation point of the y-folded problem
    delta, varfac = _trunc_gauss_std(t)
    mean = y * s * delta
    variance = (s * s) * varfac
    return mean, variance


def _gaussian_noise_moments(noise_var, y, r, v):
    a = v + 1.0 / noise_var
    b = r + y / noise_var
    mean = b / a
    variance = np.broadcast_to(1.0 / a, np.shape(mean)).copy() if np.ndim(mean) else 1.0 / a
    return mean, variance


def _check_finite_scalar(name, value):
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")


def prior_tilted_moments(prior: PriorSpec, rho_x: float, v_x: float) -> TiltedMoments:
    """Mean/variance of ``q(x) \\propto f(x) exp(-v_x x^2/2 + rho_x x)``.

    Closed form for the spike/slab family: the slab component is a
    Gaussian with precision ``v_x + 1/tau``, and the spike/slab
    responsibilities come from the two normalizers evaluated in log
    space.

    Parameters
    ----------
    prior : PriorSpec
    rho_x : float
        Linear cavity coefficient.
    v_x : float
        Cavity precision, must be positive.
    """
    _check_finite_scalar("rho_x", rho_x)
    _check_finite_scalar("v_x", v_x)
    if v_x <= 0.0:
        raise ValueError(f"cavity precision v_x must be positive, got {v_x}")
    mean, variance = _spike_slab_moments(prior.rho, prior.tau, float(rho_x), float(v_x))
    return TiltedMoments(float(mean), float(variance))


def likelihood_tilted_moments(
    lik: LikelihoodSpec, y: float, rho_z: float, v_z: float
) -> TiltedMoments:
    """Mean/variance of ``q(z) \\propto f(y|z) exp(-v_z z^2/2 + rho_z z)``.

    For the one-bit channel this is a one-sided truncated Gaussian; the
    hazard (inverse Mills) ratio is evaluated through ``erfcx`` and an
    asymptotic tail series, so deep truncation keeps full precision.
    """
    _check_finite_scalar("rho_z", rho_z)
    _check_finite_scalar("v_z", v_z)
    if v_z <= 0.0:
        raise ValueError(f"cavity precision v_z must be positive, got {v_z}")
    if lik.family == "sign":
        if y not in (-1.0, 1.0):
            raise ValueError(f"one-bit labels must be -1 or +1, got {y}")
        mean, variance = _sign_moments(float(y), float(rho_z), float(v_z))
    else:
        _check_finite_scalar("y", y)
        mean, variance = _gaussian_noise_moments(lik.noise_var, float(y), float(rho_z), float(v_z))
    if variance < 1e-300:
        raise DegenerateMomentError(
            f"tilted variance underflow ({variance}) at y={y}, rho_z={rho_z}, v_z={v_z}"
        )
    return TiltedMoments(float(mean), float(variance))


def prior_moments_batch(prior: PriorSpec, rho_x, v_x):
    """Vectorized prior tilted moments; ``v_x`` may be scalar or (K,)."""
    rho_x = np.asarray(rho_x, dtype=float)
    v_x = np.asarray(v_x, dtype=float)
    if np.any(v_x <= 0.0):
        raise ValueError("cavity precision v_x must be positive")
    eta, chi = _spike_slab_moments(prior.rho, prior.tau, rho_x, v_x)
    return np.broadcast_to(eta, rho_x.shape).copy(), np.broadcast_to(chi, rho_x.shape).copy()


def likelihood_moments_batch(lik: LikelihoodSpec, y, rho_z, v_z):
    """Vectorized likelihood tilted moments; ``v_z`` may be scalar or (N,)."""
    rho_z = np.asarray(rho_z, dtype=float)
    y = np.asarray(y, dtype=float)
    v_z = np.asarray(v_z, dtype=float)
    if np.any(v_z <= 0.0):
        raise ValueError("cavity precision v_z must be positive")
    if lik.family == "sign":
        eta, chi = _sign_moments(y, rho_z, v_z)
    else:
        eta, chi = _gaussian_noise_moments(lik.noise_var, y, rho_z, v_z)
    return np.broadcast_to(eta, rho_z.shape).copy(), np.broadcast_to(chi, rho_z.shape).copy()


def _first_bad_index(*arrays):
    mask = np.zeros(max((np.size(a) for a in arrays), default=0), dtype=bool)
    for a in arrays:
        mask |= ~np.isfinite(np.asarray(a, dtype=float)).ravel()
    bad = np.flatnonzero(mask)
    return int(bad[0]) if bad.size else None


def batch_tilted_moments(model: ModelSpec, rho_x, rho_z, y, v_x, v_z):
    """Elementwise tilted moments for a whole problem instance.

    Parameters
    ----------
    model : ModelSpec
    rho_x : (K,) array
    rho_z, y : (N,) arrays
    v_x, v_z : scalar or per-coordinate cavity precisions

    Returns
    -------
    (eta_x, chi_x, eta_z, chi_z) : arrays of shapes (K,), (K,), (N,), (N,)
    """
    rho_x = np.asarray(rho_x, dtype=float)
    rho_z = np.asarray(rho_z, dtype=float)
    y = np.asarray(y, dtype=float)
    if rho_x.shape != (model.n_cols,):
        raise ValueError(f"rho_x has shape {rho_x.shape}, expected ({model.n_cols},)")
    if rho_z.shape != (model.n_rows,) or y.shape != (model.n_rows,):
        raise ValueError("rho_z and y must both have shape (N,)")

    for name, arr, vv in (("x", rho_x, v_x), ("z", rho_z, v_z)):
        idx = _first_bad_index(arr, vv)
        if idx is not None:
            raise ValueError(f"non-finite {name}-side input at index {idx}")
        if np.any(np.asarray(vv) <= 0.0):
            idx = int(np.flatnonzero(np.atleast_1d(np.asarray(vv) <= 0.0))[0])
            raise ValueError(f"non-positive cavity precision on {name} side at index {idx}")

    eta_x, chi_x = _spike_slab_moments(model.prior.rho, model.prior.tau, rho_x, np.asarray(v_x, dtype=float))
    if model.likelihood.family == "sign":
        if rho_z.size and not np.all(np.abs(y) == 1.0):
            idx = int(np.flatnonzero(np.abs(y) != 1.0)[0])
            raise ValueError(f"one-bit label not in {{-1, +1}} at index {idx}")
        eta_z, chi_z = _sign_moments(y, rho_z, np.asarray(v_z, dtype=float))
    else:
        eta_z, chi_z = _gaussian_noise_moments(model.likelihood.noise_var, y, rho_z, np.asarray(v_z, dtype=float))

    eta_x = np.broadcast_to(eta_x, rho_x.shape).astype(float, copy=True)
    chi_x = np.broadcast_to(chi_x, rho_x.shape).astype(float, copy=True)
    eta_z = np.broadcast_to(eta_z, rho_z.shape).astype(float, copy=True)
    chi_z = np.broadcast_to(chi_z, rho_z.shape).astype(float, copy=True)

    if chi_z.size and chi_z.min(initial=np.inf) < 1e-300:
        idx = int(np.argmin(chi_z))
        raise DegenerateMomentError(f"tilted variance underflow on z side at index {idx}")
    return eta_x, chi_x, eta_z, chi_z

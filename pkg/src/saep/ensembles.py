"""Measurement-matrix ensembles and their singular-value spectra.

Two generative ensembles are supported: iid Gaussian entries with
variance 1/K, and a row-orthogonal model built from a randomly permuted
orthonormal DCT-II matrix.  A third kind loads a dense matrix from a text
file.  Spectra are represented by :class:`SpectralProfile`, either as an
analytic tag (Marchenko-Pastur / projection) or as the empirical singular
values of a concrete matrix.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NoAnalyticProfileError, NumericalFailureError

ENSEMBLE_KINDS = ("iid_gaussian", "row_orthogonal_dct", "from_file")
PROFILE_KINDS = ("marchenko_pastur", "projection", "empirical")
GRAM_SIDES = ("kxk", "nxn")


@dataclass(frozen=True)
class MatrixEnsemble:
    """Recipe for an N x K measurement matrix."""

    kind: str
    n_rows: int
    n_cols: int
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("matrix dimensions must be positive")
        if self.kind == "row_orthogonal_dct" and self.n_rows > self.n_cols:
            raise ValueError("row-orthogonal DCT ensemble requires N <= K")
        if self.kind == "from_file" and not self.path:
            raise ValueError("from_file ensemble requires a path")

    @property
    def alpha(self) -> float:
        return self.n_rows / self.n_cols


@dataclass(frozen=True)
class SpectralProfile:
    """Spectral law of the Gram matrices of a measurement matrix.

    ``marchenko_pastur`` and ``projection`` are analytic tags carrying only
    the aspect ratio ``alpha = N/K``; ``empirical`` carries the singular
    values of a concrete N x K matrix (descending, length min(N, K)).
    Eigenvalues of either Gram side are the squared singular values padded
    with zeros up to that side's dimension.
    """

    kind: str
    alpha: float
    singular_values: np.ndarray | None = None
    n_rows: int | None = None
    n_cols: int | None = None

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not np.isfinite(self.alpha) or self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.kind == "empirical":
            sv = np.asarray(self.singular_values, dtype=float)
            if sv.ndim != 1 or sv.size == 0:
                raise ValueError("empirical profile needs a 1-d singular value array")
            if not np.all(np.isfinite(sv)) or np.any(sv < 0.0):
                raise ValueError("singular values must be finite and non-negative")
            if np.any(np.diff(sv) > 0.0):
                raise ValueError("singular values must be sorted descending")
            object.__setattr__(self, "singular_values", sv)
            n, k = self.n_rows, self.n_cols
            if n is None or k is None:
                # recover dims from alpha; singular values count min(N, K)
                if self.alpha <= 1.0:
                    n = sv.size
                    k = int(round(n / self.alpha))
                else:
                    k = sv.size
                    n = int(round(k * self.alpha))
                object.__setattr__(self, "n_rows", n)
                object.__setattr__(self, "n_cols", k)
            if min(n, k) != sv.size:
                raise ValueError("need min(N, K) singular values")

    def gram_dim(self, side: str) -> int:
        _check_side(side)
        if self.kind == "empirical":
            return self.n_cols if side == "kxk" else self.n_rows
        return 0  # analytic tags have no finite dimension

    def eigenvalues(self, side: str) -> np.ndarray:
        """Gram eigenvalues for the requested side, zero-padded."""
        _check_side(side)
        if self.kind != "empirical":
            raise ValueError("only empirical profiles have explicit eigenvalues")
        lam = self.singular_values ** 2
        pad = self.gram_dim(side) - lam.size
        if pad > 0:
            lam = np.concatenate([lam, np.zeros(pad)])
        return lam

    def zero_mass(self, side: str) -> float:
        """F(0): the spectral mass sitting in exact zero eigenvalues."""
        _check_side(side)
        if self.kind == "empirical":
            lam = self.eigenvalues(side)
            return float(np.count_nonzero(lam == 0.0)) / lam.size
        a = self.alpha
        if side == "kxk":
            return max(0.0, 1.0 - a)
        return max(0.0, 1.0 - 1.0 / a)


def _check_side(side):
    if side not in GRAM_SIDES:
        raise ValueError(f"side must be one of {GRAM_SIDES}, got {side!r}")


def trial_rng(seed: int, *stream) -> np.random.Generator:
    """Counter-based generator for a (seed, stream...) key.

    Philox streams keyed this way are independent and reproducible, so
    trials can run in parallel without sharing generator state.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def _dct_rows(rows: np.ndarray, k: int) -> np.ndarray:
    """Selected rows of the K x K orthonormal DCT-II matrix."""
    n = np.arange(k)
    scale = np.where(rows == 0, np.sqrt(1.0 / k), np.sqrt(2.0 / k))
    return scale[:, None] * np.cos(np.pi * rows[:, None] * (2 * n[None, :] + 1) / (2.0 * k))


def generate(ensemble: MatrixEnsemble) -> np.ndarray:
    """Draw the dense N x K matrix described by ``ensemble``.

    iid Gaussian entries have variance exactly 1/K.  The row-orthogonal
    model takes the first N rows of a DCT-II matrix conjugated by a
    uniformly random permutation, which keeps ``H H^T = I_N`` to machine
    precision.
    """
    n, k = ensemble.n_rows, ensemble.n_cols
    if ensemble.kind == "iid_gaussian":
        rng = trial_rng(ensemble.seed)
        return rng.normal(0.0, 1.0 / np.sqrt(k), size=(n, k))
    if ensemble.kind == "row_orthogonal_dct":
        rng = trial_rng(ensemble.seed)
        perm = rng.permutation(k)
        # H = P (P_pi Psi P_pi^T): entry (i, j) of the conjugated matrix is
        # Psi[perm[i], perm[j]], and only the first N rows are needed
        h = _dct_rows(perm[:n], k)
        return np.ascontiguousarray(h[:, perm])
    return load_matrix(ensemble.path)


def singular_values(h: np.ndarray, check: bool | None = None) -> SpectralProfile:
    """Empirical spectral profile of a dense matrix.

    Parameters
    ----------
    h : (N, K) array
    check : bool, optional
        Re-run the SVD with factors and verify the reconstruction
        residual (defaults to ``__debug__``).
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if not np.all(np.isfinite(h)):
        raise ValueError("matrix has non-finite entries")
    n, k = h.shape
    if check is None:
        check = bool(__debug__)
    try:
        if check:
            u, s, vt = np.linalg.svd(h, full_matrices=False)
            norm = np.linalg.norm(h)
            resid = np.linalg.norm(h - (u * s) @ vt)
            if norm > 0 and resid / norm > 1e-8:
                raise NumericalFailureError(
                    f"SVD reconstruction residual {resid / norm:.3e} for {n}x{k} matrix"
                )
        else:
            s = np.linalg.svd(h, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"SVD failed to converge for {n}x{k} matrix") from exc
    s = np.sort(s)[::-1]
    return SpectralProfile("empirical", n / k, singular_values=s, n_rows=n, n_cols=k)


def analytic_profile(ensemble: MatrixEnsemble) -> SpectralProfile:
    """Limiting spectral law of a generative ensemble."""
    if ensemble.kind == "iid_gaussian":
        return SpectralProfile("marchenko_pastur", ensemble.alpha)
    if ensemble.kind == "row_orthogonal_dct":
        return SpectralProfile("projection", ensemble.alpha)
    raise NoAnalyticProfileError("a matrix loaded from file has no analytic spectral law")


# ---------------------------------------------------------------------------
# matrix file format: first line "N K", then N rows of K decimal floats
# ---------------------------------------------------------------------------

def save_matrix(path: str | os.PathLike, h: np.ndarray) -> None:
    h = np.asarray(h, dtype=float)
    n, k = h.shape
    with open(path, "w") as fh:
        fh.write(f"{n} {k}\n")
        for row in h:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_matrix(path: str | os.PathLike) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'N K'")
        try:
            n, k = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValueError(f"{path}: malformed dimension header {header!r}") from exc
        data = np.loadtxt(fh, dtype=float, ndmin=2)
    if data.shape != (n, k):
        raise ValueError(f"{path}: expected {n}x{k} entries, found {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite entries")
    return data

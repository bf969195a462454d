"""Stationary Gaussian fields: spectral synthesis, covariance checks, weights,
and a small Gauss-Hermite oracle for the matrix-variance inequality."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import BoxSpec, FieldSample, RngStream
from .weights import WeightFunction

__all__ = [
    "CovarianceModel",
    "LipschitzClamp",
    "NegativeSpectrum",
    "InsufficientSamples",
    "QuadratureOverflow",
    "sample_gaussian_field",
    "field_from_noise",
    "empirical_covariance",
    "gaussian_weight",
    "brascamp_lieb_oracle",
]

SPECTRUM_TOLERANCE = 1e-10


class NegativeSpectrum(ValueError):
    """Discretized covariance spectrum has entries below -tolerance."""


class InsufficientSamples(ValueError):
    pass


class QuadratureOverflow(ValueError):
    """Tensor quadrature grid exceeds the configured node budget."""


@dataclass(frozen=True)
class CovarianceModel:
    """Isotropic covariance envelope c(r), nonincreasing with c(0) = sigma2.

    Families: exponential  sigma2*exp(-r/xi);
              gaussian-bump  sigma2*exp(-r^2/xi^2);
              polynomial  sigma2*(1 + r/xi)^(-alpha).
    """

    family: str
    sigma2: float
    xi: float
    alpha: float | None = None

    def __post_init__(self):
        if self.family not in ("exponential", "gaussian-bump", "polynomial"):
            raise ValueError(f"unknown covariance family {self.family!r}")
        if self.sigma2 <= 0 or self.xi <= 0:
            raise ValueError("sigma2 and xi must be positive")
        if self.family == "polynomial" and (self.alpha is None or self.alpha <= 0):
            raise ValueError("polynomial family needs alpha > 0")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.family == "exponential":
            return self.sigma2 * np.exp(-r / self.xi)
        if self.family == "gaussian-bump":
            return self.sigma2 * np.exp(-((r / self.xi) ** 2))
        return self.sigma2 * (1.0 + r / self.xi) ** (-self.alpha)


@dataclass(frozen=True)
class LipschitzClamp:
    """Pointwise post-map b: identity, or a bounded tanh clamp.

    The tanh clamp is b(u) = cap * tanh(slope * u / cap): Lipschitz constant
    ``slope``, range bounded by ``cap``.
    """

    kind: str = "identity"
    slope: float = 1.0
    cap: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "tanh"):
            raise ValueError("clamp kind must be 'identity' or 'tanh'")
        if self.slope <= 0 or self.cap <= 0:
            raise ValueError("slope and cap must be positive")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return np.asarray(u, dtype=float)
        return self.cap * np.tanh(self.slope * np.asarray(u, dtype=float) / self.cap)

    @property
    def lipschitz(self) -> float:
        return 1.0 if self.kind == "identity" else self.slope

    @property
    def bounded(self) -> bool:
        return self.kind == "tanh"


@lru_cache(maxsize=32)
def _sqrt_spectrum(box: BoxSpec, cov: CovarianceModel) -> np.ndarray:
    """Real filter whose squared spectrum is the lattice covariance spectrum."""
    n, d, h = box.sites_per_side, box.dimension, box.spacing
    k = np.arange(n)
    wrapped = np.minimum(k, n - k) * h
    grids = np.meshgrid(*([wrapped] * d), indexing="ij")
    r = np.sqrt(sum(g * g for g in grids))
    spectrum = np.fft.fftn(cov(r)).real
    # Tolerance relative to the spectrum's own magnitude (it scales with the
    # correlation volume in cells), per the clip-small/error-large rule.
    floor = -SPECTRUM_TOLERANCE * max(cov.sigma2, float(spectrum.max()))
    if spectrum.min() < floor:
        raise NegativeSpectrum(
            f"spectrum minimum {spectrum.min():.3e} below tolerance {floor:.3e}")
    return np.sqrt(np.clip(spectrum, 0.0, None))


def field_from_noise(box: BoxSpec, cov: CovarianceModel, clamp: LipschitzClamp,
                     noise: np.ndarray) -> np.ndarray:
    """Filter lattice white noise into the target-covariance field, then clamp."""
    filtered = np.fft.ifftn(_sqrt_spectrum(box, cov) * np.fft.fftn(noise)).real
    return clamp(filtered)


def sample_gaussian_field(box: BoxSpec, cov: CovarianceModel, clamp: LipschitzClamp,
                          rng: RngStream) -> FieldSample:
    """Stationary Gaussian lattice field with covariance ~ cov, clamped pointwise.

    Spectral synthesis on the periodic lattice: the unclamped field's exact
    lattice covariance equals the wrapped tabulation of ``cov``.
    """
    if not box.periodic:
        raise ValueError("spectral sampling requires a periodic box")
    shape = (box.sites_per_side,) * box.dimension
    noise = rng.generator().standard_normal(shape)
    return FieldSample(box, field_from_noise(box, cov, clamp, noise))


def empirical_covariance(samples: list[FieldSample], lags) -> list[dict]:
    """Cross-sample covariance estimate at axis-aligned lags, with stderr.

    Unbiased over samples (divisor n-1 after centering by the cross-sample
    mean), averaged over sites; lags are rounded to whole lattice cells.
    """
    if len(samples) < 2:
        raise InsufficientSamples("need at least 2 samples")
    box = samples[0].box
    if any(s.box != box for s in samples):
        raise InsufficientSamples("samples must share a common box")
    stack = np.stack([s.values for s in samples])
    mean = stack.mean(axis=0)
    centered = stack - mean
    n = len(samples)
    out = []
    for lag in lags:
        shift = int(round(float(lag) / box.spacing))
        rolled = np.roll(centered, -shift, axis=1 if box.dimension > 1 else 0)
        per_sample = (centered * rolled).mean(axis=tuple(range(1, box.dimension + 1)))
        est = per_sample.sum() / (n - 1)
        stderr = per_sample.std(ddof=1) / np.sqrt(n) * n / (n - 1)
        out.append({"lag": float(lag), "estimate": float(est), "stderr": float(stderr)})
    return out


def gaussian_weight(cov: CovarianceModel) -> WeightFunction:
    """Scale weight (-c'(l))_+ of the covariance envelope, unit constant."""
    family = {"exponential": "gaussian-exp", "gaussian-bump": "gaussian-bump",
              "polynomial": "gaussian-poly"}[cov.family]
    params = {"sigma2": cov.sigma2, "xi": cov.xi}
    if cov.family == "polynomial":
        params["alpha"] = cov.alpha
    return WeightFunction(family, params=params)


def _evaluate_rows(fn, points: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(fn(points), dtype=float)
        if out.shape == (points.shape[0],):
            return out
    except Exception:
        pass
    return np.array([float(fn(points[i])) for i in range(points.shape[0])])


def brascamp_lieb_oracle(F: np.ndarray, observable, quadrature_level: int = 12,
                         node_budget: int = 2 ** 21, fd_step: float = 1e-5) -> dict:
    """Both sides of the matrix-variance bound for Z(F W), W standard normal.

    lhs = Var[Z(A)] and rhs = sum_ij |(F F^t)_ij| E[|d_i Z| |d_j Z|], both by
    tensor-product Gauss-Hermite quadrature; partials by central differences.
    """
    F = np.asarray(F, dtype=float)
    N = F.shape[0]
    if F.shape != (N, N) or N > 8:
        raise ValueError("F must be square with N <= 8")
    if quadrature_level ** N > node_budget:
        raise QuadratureOverflow(
            f"{quadrature_level}^{N} nodes exceed budget {node_budget}")
    nodes, wts = np.polynomial.hermite_e.hermegauss(quadrature_level)
    wts = wts / np.sqrt(2.0 * np.pi)
    grids = np.meshgrid(*([nodes] * N), indexing="ij")
    W = np.stack([g.reshape(-1) for g in grids], axis=-1)
    wgrids = np.meshgrid(*([wts] * N), indexing="ij")
    prob = np.prod(np.stack([g.reshape(-1) for g in wgrids], axis=-1), axis=1)
    A = W @ F.T
    z = _evaluate_rows(observable, A)
    ez = float(prob @ z)
    lhs = float(prob @ (z * z)) - ez * ez
    grad = np.empty_like(A)
    for i in range(N):
        bump = np.zeros(N)
        bump[i] = fd_step
        grad[:, i] = (_evaluate_rows(observable, A + bump)
                      - _evaluate_rows(observable, A - bump)) / (2 * fd_step)
    M = np.abs(F @ F.T)
    rhs = float(np.einsum("m,mi,ij,mj->", prob, np.abs(grad), M, np.abs(grad)))
    return {"lhs": lhs, "rhs": rhs}

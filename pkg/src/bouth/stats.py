"""Normal distribution helpers, p-value combination and p-value samplers.

All functions accept scalars or numpy arrays.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erfc

# Clamp for adjusted p-values before the normal quantile.
P_EPS = 1e-15

_SQRT2 = np.sqrt(2.0)

# Rational approximation coefficients for the normal quantile
# (central region and tails), relative error about 1.15e-9 before polishing.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def norm_cdf(z):
    """Standard normal CDF via the complementary error function."""
    out = 0.5 * erfc(-np.asarray(z, dtype=float) / _SQRT2)
    return out if np.ndim(out) else float(out)


def norm_sf(z):
    """Upper tail ``1 - norm_cdf(z)`` without cancellation."""
    out = 0.5 * erfc(np.asarray(z, dtype=float) / _SQRT2)
    return out if np.ndim(out) else float(out)


def norm_quantile(p):
    """Inverse of :func:`norm_cdf` for ``0 < p < 1``.

    Rational approximation followed by one Halley refinement step, which
    brings the result to near double precision.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("norm_quantile needs 0 < p < 1")
    a, b, c, d = _A, _B, _C, _D
    x = np.empty_like(p)

    lo = p < _P_LOW
    hi = p > 1 - _P_LOW
    mid = ~(lo | hi)
    if np.any(mid):
        qm = p[mid] - 0.5
        r = qm * qm
        x[mid] = ((((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * qm
                  / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1))
    for mask, sign, tail in ((lo, 1.0, p), (hi, -1.0, 1 - p)):
        if np.any(mask):
            t = np.sqrt(-2 * np.log(tail[mask]))
            x[mask] = sign * ((((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5])
                              / ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1))

    # Halley step; the residual is taken on the smaller tail for accuracy.
    resid = np.where(x > 0, (1 - p) - norm_sf(x), norm_cdf(x) - p)
    u = resid * np.sqrt(2 * np.pi) * np.exp(x * x / 2)
    x = x - u / (1 + x * u / 2)
    return x if x.ndim else float(x)


def adjust_truncated(p, alpha_cut: float):
    """Map a p-value known to exceed ``alpha_cut`` back onto [0, 1]."""
    if not 0 <= alpha_cut < 1:
        raise ValueError("alpha_cut must lie in [0, 1)")
    p = np.asarray(p, dtype=float)
    if np.any(p < alpha_cut):
        raise ValueError("p-value below the truncation point; node was detected")
    out = (p - alpha_cut) / (1 - alpha_cut)
    return out if out.ndim else float(out)


def stouffer_z(adjusted_ps):
    """Per-input Stouffer scores ``Phi^-1(1 - p)`` after clamping."""
    p = np.clip(np.asarray(adjusted_ps, dtype=float), P_EPS, 1 - P_EPS)
    return -norm_quantile(p)


def stouffer_parent_p(adjusted_ps) -> float:
    """Combined p-value ``1 - Phi(sum(Phi^-1(1 - p)) / sqrt(m))``."""
    p = np.asarray(adjusted_ps, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("cannot combine an empty set of p-values")
    return float(norm_sf(stouffer_z(p).sum() / np.sqrt(p.size)))


def combine_fisher(adjusted_ps):
    """Hook for Fisher's combination; intentionally unavailable."""
    raise NotImplementedError("only Stouffer aggregation is supported")


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream ``(seed, *key)``.

    Philox output depends only on the key and counter, so the same
    ``(seed, key)`` yields the same draws on every platform.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sample_beta_p(beta: float, rng: np.random.Generator, size=None):
    """Draw from Beta(1/beta, 1) by inverse CDF: ``U ** beta``."""
    if not beta >= 1:
        raise ValueError("beta effect size must be >= 1")
    return rng.random(size) ** beta


def sample_gaussian_p(beta: float, rng: np.random.Generator, size=None):
    """One-sided p-value of ``X ~ N(beta, 1)``."""
    x = beta + rng.standard_normal(size)
    return norm_sf(x)


def format_p(p: float) -> str:
    if not np.isfinite(p):
        return "NA"
    if p < 1e-16:
        return "<1e-16"
    return f"{p:.12g}"

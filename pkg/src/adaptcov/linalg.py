"""Small dense linear algebra helpers.

Every function accepts arrays with leading batch axes; the last two axes are
the matrix axes.
"""
import numpy as np

from .errors import InvalidCovariance, NumericalFailure


def tr(a):
    """Matrix transpose over the last two axes."""
    return np.swapaxes(a, -1, -2)


def sym(a):
    return 0.5 * (a + tr(a))


def _eig_clamped(c, tol, exc):
    c = sym(np.asarray(c, dtype=float))
    w, v = np.linalg.eigh(c)
    scale = np.maximum(1.0, np.abs(w).max(axis=-1, keepdims=True))
    if np.any(w < -tol * scale):
        raise exc(f"matrix not positive semi-definite (min eigenvalue {w.min():.3e})")
    return np.clip(w, 0.0, None), v


def psd_factor(c, tol=1e-12):
    """Return L with L @ L.T == c, via symmetric eigendecomposition.

    Negative eigenvalues down to ``-tol`` (relative to max(1, |lambda|max))
    are treated as round-off and zeroed; anything more negative raises
    InvalidCovariance.
    """
    w, v = _eig_clamped(c, tol, InvalidCovariance)
    return v * np.sqrt(w)[..., None, :]


def psd_sqrt(b, tol=1e-10):
    """Symmetric square root of a PSD matrix; raises NumericalFailure."""
    w, v = _eig_clamped(b, tol, NumericalFailure)
    return (v * np.sqrt(w)[..., None, :]) @ tr(v)


def clamp_psd(a, floor=1e-10):
    """Symmetrize and lift every eigenvalue below ``floor`` up to ``floor``."""
    a = sym(np.asarray(a, dtype=float))
    w, v = np.linalg.eigh(a)
    if np.all(w >= floor):
        return a
    w = np.maximum(w, floor)
    return (v * w[..., None, :]) @ tr(v)


def pinv(a, rtol=1e-10):
    """Moore-Penrose inverse with singular values below rtol*smax dropped."""
    return np.linalg.pinv(np.asarray(a, dtype=float), rcond=rtol)


def effective_rank(a, rtol=1e-10):
    s = np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)
    if s.size == 0 or s[..., 0].max() == 0.0:
        return 0
    return int(np.sum(s > rtol * s[..., :1]))


def sym_pinv(g, rtol=1e-10):
    """Pseudo-inverse of a symmetric PSD matrix through eigh.

    Returns ``(g_pinv, truncated)`` where ``truncated`` is True when any
    eigenvalue fell below ``rtol`` times the largest one.
    """
    w, v = np.linalg.eigh(sym(g))
    wmax = np.abs(w).max(axis=-1, keepdims=True)
    keep = w > rtol * wmax
    winv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return (v * winv[..., None, :]) @ tr(v), bool(np.any(~keep))


def is_psd(a, tol=1e-10):
    w = np.linalg.eigvalsh(sym(a))
    scale = np.maximum(1.0, np.abs(w).max(axis=-1, keepdims=True))
    return bool(np.all(w >= -tol * scale))

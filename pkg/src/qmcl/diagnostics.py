"""Equilibrium statistics: histograms, autocorrelation and distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AutocorrSeries",
    "Histogram",
    "autocorrelation",
    "compare_series",
    "histogram",
    "hovmoller_export",
    "total_variation_distance",
    "write_autocorr_csv",
    "write_histogram_csv",
]


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def B(self):
        return len(self.density)


@dataclass(frozen=True)
class AutocorrSeries:
    lags: np.ndarray
    values: np.ndarray


def histogram(series, B=45, range=None):
    """Normalized counts over ``B`` equal bins spanning ``[min, max]``.

    ``range`` overrides the span, e.g. to put two series on common edges.
    A constant series gets a single unit-width bin centred on its value.
    """
    series = np.asarray(series, dtype=float).ravel()
    if series.size == 0:
        raise ValueError("empty series")
    if B < 1:
        raise ValueError("B must be at least 1")
    lo, hi = (series.min(), series.max()) if range is None else range
    if hi <= lo:
        return Histogram(edges=np.array([lo - 0.5, lo + 0.5]), density=np.ones(1))
    counts, edges = np.histogram(series, bins=B, range=(lo, hi))
    return Histogram(edges=edges, density=counts / series.size)


def autocorrelation(series, max_lag_steps, dt=1.0, demean=False):
    """Normalized time-autocorrelation ``C(j) / C(0)`` for ``j = 0..max_lag_steps``.

    ``C(j) = sum_{n=0}^{N-1-j} f_n f_{n+j} / N`` on the raw series, or on the
    mean-subtracted series when ``demean`` is set.
    """
    f = np.asarray(series, dtype=float).ravel()
    N = f.size
    if not 0 <= max_lag_steps < N:
        raise ValueError(f"max_lag_steps must be in [0, {N}), got {max_lag_steps}")
    if demean:
        f = f - f.mean()
    C = np.array([f[: N - j] @ f[j:] for j in np.arange(max_lag_steps + 1)]) / N
    if C[0] == 0:
        raise ValueError("series is identically zero")
    values = C / C[0]
    values[0] = 1.0
    return AutocorrSeries(lags=np.arange(max_lag_steps + 1) * dt, values=values)


def _rebin(h, edges):
    # mass of each source bin spread uniformly over its width
    cdf = np.concatenate([[0.0], np.cumsum(h.density)])
    return np.diff(np.interp(edges, h.edges, cdf, left=0.0, right=cdf[-1]))


def total_variation_distance(h1: Histogram, h2: Histogram):
    """Half the L1 distance between two histograms.

    Histograms on different edges are first re-binned onto the union of both
    edge sets, treating each bin's mass as uniform across its width.
    """
    if h1.edges.shape == h2.edges.shape and np.array_equal(h1.edges, h2.edges):
        d1, d2 = h1.density, h2.density
    else:
        edges = np.union1d(h1.edges, h2.edges)
        if len(edges) < 2:
            raise ValueError("incompatible histogram edges")
        d1, d2 = _rebin(h1, edges), _rebin(h2, edges)
    return float(0.5 * np.abs(d1 - d2).sum())


def compare_series(reference, other, B=45, max_lag_steps=200, dt=1.0):
    """Histogram and autocorrelation comparison of two scalar series.

    Both histograms use ``B`` bins on the union of the two ranges. Returns a
    dict with the total variation distance, the maximum absolute
    autocorrelation deviation and the underlying objects.
    """
    reference = np.asarray(reference, dtype=float).ravel()
    other = np.asarray(other, dtype=float).ravel()
    lo = min(reference.min(), other.min())
    hi = max(reference.max(), other.max())
    h_ref = histogram(reference, B, range=(lo, hi))
    h_other = histogram(other, B, range=(lo, hi))
    a_ref = autocorrelation(reference, max_lag_steps, dt)
    a_other = autocorrelation(other, max_lag_steps, dt)
    return {
        "tv": total_variation_distance(h_ref, h_other),
        "acf_max_dev": float(np.max(np.abs(a_ref.values - a_other.values))),
        "hist_ref": h_ref,
        "hist_other": h_other,
        "acf_ref": a_ref,
        "acf_other": a_other,
    }


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

def write_histogram_csv(path, h: Histogram):
    data = np.column_stack([h.edges[:-1], h.edges[1:], h.density])
    np.savetxt(path, data, delimiter=",", header="bin_left,bin_right,density",
               comments="", fmt="%.17g")


def write_autocorr_csv(path, a: AutocorrSeries):
    np.savetxt(path, np.column_stack([a.lags, a.values]), delimiter=",",
               header="lag,value", comments="", fmt="%.17g")


def hovmoller_export(trajectory, path, dt=1.0, t0=0.0):
    """Write slow-variable snapshots as ``t,x1..xK`` rows."""
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    if traj.size == 0:
        raise ValueError("empty trajectory")
    t = t0 + dt * np.arange(len(traj))
    header = ",".join(["t"] + [f"x{k + 1}" for k in range(traj.shape[1])])
    np.savetxt(path, np.column_stack([t, traj]), delimiter=",", header=header,
               comments="", fmt="%.17g")

"""Time-series and spectral primitives for rPPG work.

Everything here operates on plain 1-D traces: periodogram PSD, heart-rate
extraction from a band-limited spectrum, Pearson / normalized correlations,
and the lag-indexed running correlation together with its alpha/beta
decomposition used to diagnose interference leakage.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

HR_BAND_HZ = (0.66, 4.16)
HR_RANGE_BPM = (40.0, 250.0)


class SignalError(ValueError):
    """Invalid trace or spectral input."""


@dataclass
class SignalTrace:
    """Uniformly sampled 1-D time series."""

    samples: np.ndarray
    fs: float
    kind: str = "raw"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise SignalError("trace needs at least 2 samples")
        if not np.all(np.isfinite(self.samples)):
            raise SignalError("trace contains non-finite samples")
        if self.fs <= 0:
            raise SignalError("sampling rate must be positive")
        if self.kind not in ("rppg", "interference", "raw"):
            raise SignalError(f"unknown trace kind {self.kind!r}")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["fs_hz", "kind"])
        writer.writerow([repr(self.fs), self.kind])
        for s in self.samples:
            writer.writerow([repr(float(s))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SignalTrace":
        rows = list(csv.reader(io.StringIO(text)))
        if len(rows) < 2 or rows[0][:2] != ["fs_hz", "kind"]:
            raise SignalError("bad trace CSV header")
        fs = float(rows[1][0])
        kind = rows[1][1]
        samples = np.array([float(r[0]) for r in rows[2:] if r], dtype=np.float64)
        return cls(samples=samples, fs=fs, kind=kind)


@dataclass
class Spectrum:
    """One-sided power spectrum restricted to a frequency band."""

    freqs: np.ndarray
    power: np.ndarray
    band: tuple

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=np.float64)
        self.power = np.asarray(self.power, dtype=np.float64)
        if self.freqs.shape != self.power.shape:
            raise SignalError("freqs/power length mismatch")
        if self.freqs.size and np.any(np.diff(self.freqs) <= 0):
            raise SignalError("freqs must be strictly increasing")
        if np.any(self.power < 0):
            raise SignalError("power must be nonnegative")


@dataclass
class CorrelationProfile:
    """Normalized correlation as a function of integer lag."""

    lags: np.ndarray
    values: np.ndarray
    alpha: float = 0.0
    beta: float = 0.0
    degenerate_lags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def peak(self) -> tuple:
        """(lag, value) of the maximum-|value| lag."""
        i = int(np.argmax(np.abs(self.values)))
        return int(self.lags[i]), float(self.values[i])


def psd(trace: SignalTrace, band=None) -> Spectrum:
    """Periodogram of the mean-removed trace, restricted to ``band``.

    Rectangular window; frequency resolution fs/N.  In-band power equals the
    in-band sum of squared DFT magnitudes (scaled by 1/N).
    """
    if band is None:
        band = (0.0, trace.fs / 2.0)
    lo, hi = float(band[0]), float(band[1])
    if lo < 0 or hi > trace.fs / 2.0 + 1e-12 or lo >= hi:
        raise SignalError(f"band {band} outside [0, fs/2]")
    x = trace.samples - trace.samples.mean()
    n = x.size
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(n, d=1.0 / trace.fs)
    power = (np.abs(spec) ** 2) / n
    sel = (freqs >= lo) & (freqs <= hi)
    return Spectrum(freqs=freqs[sel], power=power[sel], band=(lo, hi))


def estimate_hr(spec: Spectrum, band=HR_BAND_HZ) -> float:
    """Heart rate in bpm as 60x the in-band argmax frequency."""
    lo, hi = band
    sel = (spec.freqs >= lo) & (spec.freqs <= hi)
    if not np.any(sel):
        raise SignalError("no frequency bins inside HR band")
    power = spec.power[sel]
    if np.max(power) <= 0:
        raise SignalError("all-zero power in HR band")
    f_peak = spec.freqs[sel][int(np.argmax(power))]
    return 60.0 * float(f_peak)


def negative_pearson(a: SignalTrace, b: SignalTrace) -> float:
    """1 - Pearson(a, b); 0 for identical shape, 2 for anti-correlated."""
    xa, xb = a.samples, b.samples
    if xa.size != xb.size:
        raise SignalError("traces must have equal length")
    da = xa - xa.mean()
    db = xb - xb.mean()
    sa = np.sqrt(np.dot(da, da))
    sb = np.sqrt(np.dot(db, db))
    if sa == 0 or sb == 0:
        raise SignalError("zero-variance trace in negative_pearson")
    return 1.0 - float(np.dot(da, db) / (sa * sb))


def _nc(xa: np.ndarray, xb: np.ndarray) -> float:
    na = np.sqrt(np.dot(xa, xa))
    nb = np.sqrt(np.dot(xb, xb))
    if na == 0 or nb == 0:
        raise SignalError("zero-energy trace in normalized correlation")
    return float(np.dot(xa, xb) / (na * nb))


def normalized_correlation(a: SignalTrace, b: SignalTrace) -> float:
    """sum(a*b) / (||a|| ||b||)."""
    if len(a) != len(b):
        raise SignalError("traces must have equal length")
    return _nc(a.samples, b.samples)


def shift_zero_pad(x: np.ndarray, tau: int) -> np.ndarray:
    """x[v - tau] with zeros outside the valid index range."""
    out = np.zeros_like(x)
    n = x.size
    if tau >= 0:
        if tau < n:
            out[tau:] = x[: n - tau]
    else:
        if -tau < n:
            out[: n + tau] = x[-tau:]
    return out


def running_correlation(a: SignalTrace, b: SignalTrace) -> CorrelationProfile:
    """NC(a shifted by tau, b) over all lags tau in [-(L-1), L-1].

    Lags where the shifted window of ``a`` loses all energy report 0 and are
    flagged in ``degenerate_lags``.
    """
    if len(a) != len(b):
        raise SignalError("traces must have equal length")
    xa, xb = a.samples, b.samples
    L = xa.size
    nb = np.sqrt(np.dot(xb, xb))
    if nb == 0:
        raise SignalError("zero-energy reference trace")
    lags = np.arange(-(L - 1), L)
    values = np.zeros(lags.size)
    degenerate = []
    for i, tau in enumerate(lags):
        shifted = shift_zero_pad(xa, int(tau))
        na = np.sqrt(np.dot(shifted, shifted))
        if na == 0:
            degenerate.append(int(tau))
            continue
        values[i] = np.dot(shifted, xb) / (na * nb)
    return CorrelationProfile(
        lags=lags,
        values=values,
        degenerate_lags=np.array(degenerate, dtype=int),
    )


def decompose_correlation(
    r: SignalTrace, n_fg: SignalTrace, n_bg: SignalTrace, tau: int
):
    """Split NC(r + n_fg shifted, n_bg) into pulse and interference terms.

    Returns (alpha, beta, reconstructed) where alpha, beta are the norm ratios
    of the shifted pulse and interference against their shifted sum, and
    reconstructed = alpha*NC(r_shift, n_bg) + beta*NC(nfg_shift, n_bg), which
    equals NC((r + n_fg) shifted, n_bg) exactly.
    """
    if not (len(r) == len(n_fg) == len(n_bg)):
        raise SignalError("traces must have equal length")
    r_s = shift_zero_pad(r.samples, tau)
    n_s = shift_zero_pad(n_fg.samples, tau)
    comp = r_s + n_s
    norm_comp = np.sqrt(np.dot(comp, comp))
    if norm_comp == 0:
        raise SignalError("zero-energy composite signal")
    alpha = float(np.sqrt(np.dot(r_s, r_s)) / norm_comp)
    beta = float(np.sqrt(np.dot(n_s, n_s)) / norm_comp)
    xb = n_bg.samples
    nb = np.sqrt(np.dot(xb, xb))
    if nb == 0:
        raise SignalError("zero-energy background trace")
    term_r = np.dot(r_s, xb) / nb
    term_n = np.dot(n_s, xb) / nb
    reconstructed = (term_r + term_n) / norm_comp
    return alpha, beta, float(reconstructed)

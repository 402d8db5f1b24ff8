"""TOA measurement model: propagation delay, sample-grid quantization,
empirical integer-sample channel errors, LOS flags and RSTD formation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .geometry import BsLayout

SPEED_OF_LIGHT = 299_792_458.0  # m/s
NB_IOT_FS = 1.92e6  # Hz
LTE_FS = 30.72e6  # Hz

ERROR_SUPPORT = (-1, 0, 1, 2)  # TOA error, in sampling periods

# Monte Carlo counts of the TOA error per channel, over ERROR_SUPPORT.
TABLE_COUNTS = {
    "AWGN": (90, 6842, 68, 0),
    "EPA": (121, 6737, 138, 4),
    "EVA": (376, 3586, 2502, 559),
    "IDEAL": (0, 1, 0, 0),
}


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class ChannelProfile:
    name: str
    probabilities: tuple[float, float, float, float]
    error_support: tuple[int, ...] = ERROR_SUPPORT

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (len(self.error_support),) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError(f"invalid probabilities for profile {self.name}: {self.probabilities}")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        """Integer-sample TOA errors, independent per entry."""
        return rng.choice(np.array(self.error_support), size=size, p=np.array(self.probabilities))


def profile_from_counts(counts, name: str = "custom") -> ChannelProfile:
    """Normalize four error counts (over -1, 0, +1, +2 samples) into a profile."""
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (len(ERROR_SUPPORT),):
        raise DomainError(f"expected {len(ERROR_SUPPORT)} counts, got {counts.shape}")
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise DomainError("counts must be finite and non-negative")
    total = counts.sum()
    if total <= 0:
        raise DomainError("at least one count must be positive")
    return ChannelProfile(name, tuple(float(c) for c in counts / total))


def named_profile(name: str, overrides: dict | None = None) -> ChannelProfile:
    key = name.upper()
    table = dict(TABLE_COUNTS)
    if overrides:
        table.update({k.upper(): v for k, v in overrides.items()})
    if key not in table:
        raise DomainError(f"unknown channel {name!r}; known: {sorted(table)}")
    return profile_from_counts(table[key], key)


def toa_true(p, bs) -> np.ndarray | float:
    """Propagation delay ``|p - bs| / c`` in seconds."""
    d = np.linalg.norm(np.asarray(p, float) - np.asarray(bs, float), axis=-1)
    return d / SPEED_OF_LIGHT if np.ndim(d) else float(d / SPEED_OF_LIGHT)


def compute_rstd(toas) -> np.ndarray:
    """Neighbour TOAs minus the serving TOA, along the last axis."""
    toas = np.asarray(toas, dtype=float)
    if toas.ndim == 0 or toas.shape[-1] < 2:
        raise DomainError("need at least two TOAs to form an RSTD")
    return toas[..., 1:] - toas[..., :1]


@dataclass(frozen=True)
class MeasurementSet:
    """TOAs for one UE, or a batch of UEs along a leading axis.

    ``toa_true``/``toa_measured`` have n_bs entries per UE; ``rstd`` and
    ``los_status`` have n_bs - 1 (neighbours only).  ``error_samples`` keeps
    the integer channel error drawn for every BS, serving BS included.
    """

    toa_true: np.ndarray
    toa_measured: np.ndarray
    rstd: np.ndarray
    los_status: np.ndarray
    error_samples: np.ndarray
    fs: float
    quantized: bool = True

    @property
    def rstd_m(self) -> np.ndarray:
        """RSTDs converted to range differences in meters."""
        return SPEED_OF_LIGHT * self.rstd


def measure_toa(
    p,
    layout: BsLayout,
    profile: ChannelProfile,
    fs: float,
    rng: np.random.Generator,
    quantize: bool = True,
) -> MeasurementSet:
    """Simulate measured TOAs for UE position(s) ``p`` of shape (2,) or (n, 2).

    Each true TOA is rounded to the nearest sample of the ``1/fs`` grid, then
    an integer number of samples drawn from ``profile`` is added.  With
    ``quantize=False`` the rounding step is skipped (the error still counts in
    samples), which gives a continuous-time surrogate for ``fs -> inf``.
    """
    if not fs > 0:
        raise DomainError(f"fs must be positive, got {fs!r}")
    p = np.asarray(p, dtype=float)
    dist = np.linalg.norm(p[..., None, :] - layout.positions, axis=-1)
    t_true = dist / SPEED_OF_LIGHT
    k = profile.draw(rng, t_true.shape)
    if quantize:
        t_meas = (round_half_away(t_true * fs) + k) / fs
    else:
        t_meas = t_true + k / fs
    return MeasurementSet(
        toa_true=t_true,
        toa_measured=t_meas,
        rstd=compute_rstd(t_meas),
        los_status=(k[..., 1:] > 0).astype(np.int8),
        error_samples=k.astype(np.int8),
        fs=float(fs),
        quantized=quantize,
    )

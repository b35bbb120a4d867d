"""Target scenes, subgaussian noise and the linear measurement model.

Noise is drawn from numpy's PCG64 bit generator seeded with
``SeedSequence([seed, trial_index])``.  Both the bit stream and numpy's
Gaussian/uniform transforms are platform independent, so a draw is fully
determined by the integer pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dictionary import Dictionary, as_matrix

__all__ = [
    "TargetScene",
    "NoiseSpec",
    "MeasurementRecord",
    "snr_db_to_sigma",
    "sample_noise",
    "synthesize_measurement",
    "matched_filter",
    "parse_targets",
    "noise_variance",
]

NOISE_FAMILIES = ("gaussian", "rademacher", "uniform")
VARIANCE_CONVENTIONS = ("total", "per_component")


@dataclass(frozen=True)
class TargetScene:
    """Sparse scene on an N-cell grid.

    ``support`` is 1-based, matching how target positions are quoted
    (e.g. cells 100, 104, 133).  Use :attr:`support0` for array indexing.
    """

    grid_size_N: int
    support: tuple
    amplitudes: tuple

    def __post_init__(self):
        supp = tuple(int(i) for i in self.support)
        amps = tuple(complex(a) if np.iscomplexobj(a) else float(a) for a in self.amplitudes)
        object.__setattr__(self, "support", supp)
        object.__setattr__(self, "amplitudes", amps)
        if len(supp) != len(amps):
            raise ValueError("one amplitude per support index is required")
        if len(set(supp)) != len(supp):
            raise ValueError("support indices must be distinct")
        if len(supp) > self.grid_size_N:
            raise ValueError("more targets than grid cells")
        for i in supp:
            if not 1 <= i <= self.grid_size_N:
                raise ValueError(f"target position {i} outside [1, {self.grid_size_N}]")
        if any(a == 0 for a in amps):
            raise ValueError("target amplitudes must be nonzero")

    @property
    def K(self) -> int:
        return len(self.support)

    @property
    def support0(self) -> np.ndarray:
        return np.asarray(self.support, dtype=int) - 1

    def dense(self, dtype=complex) -> np.ndarray:
        x = np.zeros(self.grid_size_N, dtype=dtype)
        x[self.support0] = self.amplitudes
        return x


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean i.i.d. subgaussian noise.

    ``sigma`` is the subgaussian parameter.  Per-entry variance by family:
    gaussian sigma**2, rademacher sigma**2, uniform on [-sigma, sigma]
    sigma**2/3.  In complex mode the ``total`` convention gives each of the
    real and imaginary parts parameter sigma/sqrt(2); ``per_component`` gives
    each part parameter sigma.
    """

    sigma: float
    family: str = "gaussian"
    complex_valued: bool = True
    seed: int = 0
    variance_convention: str = "total"

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.variance_convention not in VARIANCE_CONVENTIONS:
            raise ValueError(f"unknown variance convention {self.variance_convention!r}")


@dataclass(frozen=True)
class MeasurementRecord:
    y: np.ndarray
    scene: TargetScene
    noise: NoiseSpec
    trial_index: int = 0
    dictionary_id: Optional[str] = None
    clean: Optional[np.ndarray] = field(default=None, repr=False)


def snr_db_to_sigma(snr_db: float) -> float:
    """Noise amplitude for unit-amplitude targets: sigma**2 = 1/SNR."""
    return 10.0 ** (-snr_db / 20.0)


def noise_variance(spec: NoiseSpec) -> float:
    """Per-entry variance E|e_i|^2 implied by ``spec``."""
    base = spec.sigma**2 / 3.0 if spec.family == "uniform" else spec.sigma**2
    if spec.complex_valued and spec.variance_convention == "per_component":
        return 2.0 * base
    return base


def _rng(seed: int, trial_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(trial_index)])
    return np.random.Generator(np.random.PCG64(ss))


def _draw(rng: np.random.Generator, family: str, scale: float, size: int) -> np.ndarray:
    if family == "gaussian":
        return scale * rng.standard_normal(size)
    if family == "rademacher":
        return scale * (2.0 * rng.integers(0, 2, size=size) - 1.0)
    return rng.uniform(-scale, scale, size=size)


def sample_noise(spec: NoiseSpec, M: int, trial_index: int = 0) -> np.ndarray:
    """Draw a length-M noise vector, deterministic in (spec.seed, trial_index)."""
    if M < 1:
        raise ValueError("M must be positive")
    rng = _rng(spec.seed, trial_index)
    if not spec.complex_valued:
        return _draw(rng, spec.family, spec.sigma, M)
    part = spec.sigma if spec.variance_convention == "per_component" else spec.sigma / math.sqrt(2.0)
    re = _draw(rng, spec.family, part, M)
    im = _draw(rng, spec.family, part, M)
    return re + 1j * im


def synthesize_measurement(
    A: Dictionary,
    scene: TargetScene,
    spec: NoiseSpec,
    trial_index: int = 0,
    dictionary_id: Optional[str] = None,
) -> MeasurementRecord:
    """y = sum_i x*(i) a_i + e, expanded over the support only."""
    a = as_matrix(A)
    if scene.grid_size_N != a.shape[1]:
        raise ValueError(f"scene grid N={scene.grid_size_N} but dictionary has {a.shape[1]} columns")
    clean = a[:, scene.support0] @ np.asarray(scene.amplitudes)
    if spec.complex_valued and not np.iscomplexobj(clean):
        clean = clean.astype(complex)
    e = sample_noise(spec, a.shape[0], trial_index)
    y = clean + e
    return MeasurementRecord(y, scene, spec, trial_index, dictionary_id, clean)


def matched_filter(A, y) -> np.ndarray:
    """b = A^H y."""
    a = as_matrix(A)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != a.shape[0]:
        raise ValueError(f"y has shape {y.shape}, expected ({a.shape[0]},)")
    return a.conj().T @ y


def parse_targets(text: str, N: int) -> TargetScene:
    """Parse ``"100:1.0,104:1.0"`` (1-based positions) into a scene."""
    pos, amps = [], []
    for item in filter(None, (t.strip() for t in text.split(","))):
        if ":" in item:
            p, a = item.split(":", 1)
            amp = complex(a) if "j" in a else float(a)
        else:
            p, amp = item, 1.0
        pos.append(int(p))
        amps.append(amp)
    return TargetScene(N, tuple(pos), tuple(amps))

"""Seeded generators of series with known fractal properties.

All randomness comes from numpy's PCG64 bit generator seeded with the
caller's 64-bit integer, so a ``(spec, seed)`` pair always reproduces the
same series bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .ingest import HaERecord
from .series import TimeSeries

# Level counts of the severity aspect in the reference HAZOP corpus.
SEVERITY_COUNTS = (1570, 2732, 1353, 170, 44)
POSSIBILITY_COUNTS = (419, 1760, 1607, 1134, 949)
RISK_COUNTS = (2902, 2577, 335, 55)


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` and an optional sub-stream path."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def gen_white_noise(n: int, seed: int) -> TimeSeries:
    if n < 1:
        raise InvalidInput("n must be >= 1")
    return TimeSeries(rng_for(seed).standard_normal(n))


def fgn_autocovariance(k, hurst: float) -> np.ndarray:
    k = np.abs(np.asarray(k, dtype=np.float64))
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1.0) ** h2 - 2.0 * k ** h2 + np.abs(k - 1.0) ** h2)


def _fgn_eigenvalues(n: int, hurst: float) -> np.ndarray:
    gamma = fgn_autocovariance(np.arange(n + 1), hurst)
    row = np.concatenate([gamma, gamma[-2:0:-1]])  # length 2n circulant first row
    eig = np.fft.fft(row).real
    if eig.min() < -1e-9:
        raise NumericalFailure(
            f"circulant embedding has a negative eigenvalue {eig.min():.3g} (H={hurst}, n={n})"
        )
    return np.clip(eig, 0.0, None)


def gen_fgn(n: int, hurst: float, seed: int) -> TimeSeries:
    """Unit-variance fractional Gaussian noise by circulant embedding (Davies-Harte)."""
    if n < 64 or n & (n - 1):
        raise InvalidInput("n must be a power of two >= 64")
    if not 0.0 < hurst < 1.0:
        raise InvalidInput("Hurst parameter must lie strictly inside (0, 1)")
    eig = _fgn_eigenvalues(n, hurst)
    size = 2 * n
    rng = rng_for(seed)
    z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    y = np.fft.fft(np.sqrt(eig / size) * z)
    return TimeSeries(y.real[:n])


def gen_binomial_cascade(levels: int, p: float) -> TimeSeries:
    """Binomial measure on ``2**levels`` cells; each split sends ``p`` left."""
    if not 4 <= levels <= 20:
        raise InvalidInput("levels must lie in [4, 20]")
    if not 0.0 < p < 1.0:
        raise InvalidInput("p must lie strictly inside (0, 1)")
    mass = np.ones(1)
    for _ in range(levels):
        mass = np.column_stack([mass * p, mass * (1.0 - p)]).reshape(-1)
    return TimeSeries(mass)


def _cascade_hurst(p: float, q: float) -> float:
    return 1.0 / q - math.log2(p ** q + (1.0 - p) ** q) / q


def analytic_cascade_hurst(p: float, q: float, step: float = 1e-5) -> float:
    """Generalized Hurst exponent of the binomial measure.

    ``1/q - log2(p**q + (1-p)**q) / q``.  At ``q == 0`` the formula is
    replaced by the central difference ``(h(step) + h(-step)) / 2``.
    """
    if not 0.0 < p < 1.0:
        raise InvalidInput("p must lie strictly inside (0, 1)")
    if q == 0:
        return 0.5 * (_cascade_hurst(p, step) + _cascade_hurst(p, -step))
    return _cascade_hurst(p, q)


class GeneratorKind(str, enum.Enum):
    WHITE_NOISE = "white"
    FGN = "fgn"
    CASCADE = "cascade"


@dataclass(frozen=True)
class GeneratorSpec:
    kind: GeneratorKind
    n: int = 4096  # series length; for cascades, 2 ** levels
    hurst: float = 0.5
    p: float = 0.3
    levels: int = 12

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind(self.kind))
        if self.kind is GeneratorKind.FGN and not 0.0 < self.hurst < 1.0:
            raise InvalidInput(f"Hurst parameter {self.hurst} outside (0, 1)")
        if self.kind is GeneratorKind.CASCADE and not 0.0 < self.p < 1.0:
            raise InvalidInput(f"cascade weight {self.p} outside (0, 1)")

    def generate(self, seed: int) -> TimeSeries:
        if self.kind is GeneratorKind.WHITE_NOISE:
            return gen_white_noise(self.n, seed)
        if self.kind is GeneratorKind.FGN:
            return gen_fgn(self.n, self.hurst, seed)
        # cascades are deterministic and ignore the seed
        return gen_binomial_cascade(self.levels, self.p)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is GeneratorKind.CASCADE:
            out.update(levels=self.levels, p=self.p)
        else:
            out["n"] = self.n
            if self.kind is GeneratorKind.FGN:
                out["hurst"] = self.hurst
        return out


ASPECT_LEVELS = {"severity": 5, "possibility": 5, "risk": 4}


def scale_counts(counts: Sequence[int], total: int) -> list[int]:
    """Scale class counts to ``total`` by largest remainder, keeping every class >= 1."""
    counts = np.asarray(counts, dtype=np.float64)
    if total < counts.size:
        raise InvalidInput("total must allow at least one record per class")
    exact = counts / counts.sum() * total
    out = np.maximum(np.floor(exact).astype(int), 1)
    while out.sum() < total:
        out[int(np.argmax(exact - out))] += 1
    while out.sum() > total:
        spare = np.where(out > 1, out - exact, -np.inf)
        out[int(np.argmax(spare))] -= 1
    return [int(c) for c in out]


def gen_labeled_dataset(
    class_specs: Sequence[tuple[GeneratorSpec, int]],
    counts: Sequence[int] | int,
    seed: int,
    aspect: str = "severity",
) -> list[HaERecord]:
    """Records whose series come from one generator per class.

    ``class_specs`` pairs a generator with the level it represents on
    ``aspect``; the two other aspects are set to level 1.  Record ``i`` of
    class ``c`` is generated from the sub-stream ``(seed, c, i)`` so classes
    can be produced independently and in any order.
    """
    if aspect not in ASPECT_LEVELS:
        raise InvalidInput(f"unknown aspect {aspect!r}")
    if len(class_specs) < 2:
        raise InvalidInput("need at least two classes")
    labels = [label for _, label in class_specs]
    if len(set(labels)) != len(labels):
        raise InvalidInput(f"duplicate class labels {labels}")
    if isinstance(counts, int):
        counts = [counts] * len(class_specs)
    if len(counts) != len(class_specs) or any(c < 1 for c in counts):
        raise InvalidInput("need one positive count per class")

    records = []
    for c, ((spec, label), count) in enumerate(zip(class_specs, counts)):
        records.extend(gen_records(spec, label, count, seed, aspect, stream=c))
    return records


def gen_records(spec: GeneratorSpec, label: int, count: int, seed: int,
                aspect: str = "severity", stream: int = 0) -> list[HaERecord]:
    """``count`` records of one class; record ``i`` uses sub-stream ``(seed, stream, i)``."""
    if aspect not in ASPECT_LEVELS:
        raise InvalidInput(f"unknown aspect {aspect!r}")
    out = []
    for i in range(count):
        sub_seed = int(np.random.SeedSequence([int(seed), stream, i]).generate_state(1, np.uint64)[0])
        labels = {"severity": 1, "possibility": 1, "risk": 1, aspect: int(label)}
        out.append(HaERecord(id=f"c{label}-{i:05d}", hts=spec.generate(sub_seed).values, **labels))
    return out

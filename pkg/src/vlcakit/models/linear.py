"""Immutable value types for rational transfer functions in the Laplace variable."""
from dataclasses import dataclass
import math

import numpy as np
from numpy.polynomial import polynomial as P


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial in s, coefficients in ascending powers."""
    coefficients: tuple[float, ...]

    def __post_init__(self) -> None:
        coeffs = [float(c) for c in self.coefficients]
        if any(not math.isfinite(c) for c in coeffs):
            raise ValueError(f"non-finite coefficient in {coeffs}")
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs.pop()
        object.__setattr__(self, 'coefficients', tuple(coeffs) or (0.0,))

    @classmethod
    def constant(cls, value: float) -> 'Polynomial':
        return cls((value,))

    @classmethod
    def s(cls) -> 'Polynomial':
        return cls((0.0, 1.0))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def leading(self) -> float:
        return self.coefficients[-1]

    def is_zero(self) -> bool:
        return self.coefficients == (0.0,)

    def __call__(self, s):
        return P.polyval(s, np.asarray(self.coefficients))

    def __add__(self, other: 'Polynomial') -> 'Polynomial':
        return Polynomial(tuple(P.polyadd(self.coefficients, other.coefficients)))

    def __sub__(self, other: 'Polynomial') -> 'Polynomial':
        return Polynomial(tuple(P.polysub(self.coefficients, other.coefficients)))

    def __mul__(self, other: 'Polynomial | float') -> 'Polynomial':
        if isinstance(other, Polynomial):
            return Polynomial(tuple(P.polymul(self.coefficients, other.coefficients)))
        return Polynomial(tuple(c * float(other) for c in self.coefficients))

    __rmul__ = __mul__

    def __neg__(self) -> 'Polynomial':
        return self * -1.0

    def low_order_zeros(self) -> int:
        """Multiplicity of the root at s = 0."""
        if self.is_zero():
            return 0
        count = 0
        for c in self.coefficients:
            if c != 0.0:
                break
            count += 1
        return count

    def shifted_down(self, k: int) -> 'Polynomial':
        return Polynomial(self.coefficients[k:]) if k else self


@dataclass(frozen=True)
class DelayedTransferFunction:
    numerator: Polynomial
    denominator: Polynomial
    delay_s: float = 0.0

    def __post_init__(self) -> None:
        if self.denominator.is_zero():
            raise ValueError("denominator is the zero polynomial")
        if not (self.delay_s >= 0.0 and math.isfinite(self.delay_s)):
            raise ValueError(f"delay must be finite and >= 0, got {self.delay_s}")

    @classmethod
    def gain(cls, k: float) -> 'DelayedTransferFunction':
        return cls(Polynomial.constant(k), Polynomial.constant(1.0))

    @classmethod
    def from_coefficients(cls, num, den, delay_s: float = 0.0) -> 'DelayedTransferFunction':
        return cls(Polynomial(tuple(num)), Polynomial(tuple(den)), delay_s)

    @property
    def is_delayed(self) -> bool:
        return self.delay_s > 0.0

    def with_delay(self, delay_s: float) -> 'DelayedTransferFunction':
        return DelayedTransferFunction(self.numerator, self.denominator, delay_s)

    def scaled(self, k: float) -> 'DelayedTransferFunction':
        return DelayedTransferFunction(self.numerator * k, self.denominator, self.delay_s)

    def reciprocal(self) -> 'DelayedTransferFunction':
        if self.is_delayed:
            raise ValueError("a delayed transfer function has no causal reciprocal")
        return DelayedTransferFunction(self.denominator, self.numerator)

    def reduced(self) -> 'DelayedTransferFunction':
        """Cancel shared powers of s and scale so the denominator is monic."""
        shared = min(self.numerator.low_order_zeros(), self.denominator.low_order_zeros())
        num = self.numerator.shifted_down(shared)
        den = self.denominator.shifted_down(shared)
        lead = den.leading
        return DelayedTransferFunction(num * (1.0 / lead), den * (1.0 / lead), self.delay_s)

    def dc_gain(self) -> float:
        den0 = self.denominator.coefficients[0]
        if den0 == 0.0:
            return math.inf
        return self.numerator.coefficients[0] / den0


@dataclass(frozen=True)
class FrequencyResponsePoint:
    omega: float
    magnitude: float
    phase_deg: float

    @property
    def hz(self) -> float:
        return self.omega / (2.0 * math.pi)

    @property
    def magnitude_db(self) -> float:
        return 20.0 * math.log10(self.magnitude) if self.magnitude > 0 else -math.inf

    @property
    def value(self) -> complex:
        return self.magnitude * complex(math.cos(math.radians(self.phase_deg)), math.sin(math.radians(self.phase_deg)))


@dataclass(frozen=True)
class StabilityReport:
    phase_margin_deg: float
    gain_crossover_rad_s: float
    gain_margin_db: float
    phase_crossover_rad_s: float | None
    crossover_count: int

    @property
    def gain_crossover_hz(self) -> float:
        return self.gain_crossover_rad_s / (2.0 * math.pi)

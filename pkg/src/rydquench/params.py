"""Quench parameters and unit conventions.

Energies and frequencies are angular (rad/us), times are in us, lengths in um,
and hbar = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math

TWO_PI = 2.0 * math.pi

#: Rabi frequency used throughout the experiments and numerics (2 pi x 2.5 MHz).
OMEGA_DEFAULT = TWO_PI * 2.5

#: van der Waals coefficient for the 70S Rydberg state, rad um^6 / us.
C6_DEFAULT = TWO_PI * 862690.0


@dataclass(frozen=True)
class QuenchParams:
    """Constant drive after the quench.

    ``omega`` and ``delta`` are in rad/us, ``c6`` in rad um^6/us.  Quantities
    that need a lattice spacing (``v1``, ``v2``, ``lambda``) are methods taking
    the spacing ``a`` in um.
    """

    omega: float = OMEGA_DEFAULT
    delta: float = 0.0
    c6: float = C6_DEFAULT

    @classmethod
    def from_ratios(cls, delta_over_omega: float, omega: float = OMEGA_DEFAULT,
                    c6: float = C6_DEFAULT) -> "QuenchParams":
        return cls(omega=omega, delta=delta_over_omega * omega, c6=c6)

    @property
    def r_b(self) -> float:
        """Blockade radius (C6 / Omega)^(1/6) in um."""
        if self.omega <= 0:
            raise ValueError("blockade radius needs omega > 0")
        return (self.c6 / self.omega) ** (1.0 / 6.0)

    @property
    def delta_over_omega(self) -> float:
        return self.delta / self.omega

    def spacing_for(self, rb_over_a: float) -> float:
        """Lattice spacing a that realises the requested R_b / a."""
        return self.r_b / rb_over_a

    def v1(self, a: float) -> float:
        return self.c6 / a**6

    def v2(self, a: float, geometry_kind: str = "square2d") -> float:
        """Second-neighbour interaction: diagonal (sqrt 2 a) in 2D, 2a in 1D."""
        if geometry_kind == "square2d":
            return self.v1(a) / 8.0
        return self.v1(a) / 64.0

    def lambda_scale(self, a: float, geometry_kind: str = "square2d") -> float:
        """Typical strength max{|Delta|, Omega, V2} of the non-H0 terms."""
        return max(abs(self.delta), self.omega, self.v2(a, geometry_kind))

    def with_delta(self, delta: float) -> "QuenchParams":
        return replace(self, delta=delta)

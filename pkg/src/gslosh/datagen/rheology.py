"""Shear-stress law and the fluid presets used by the generators."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Rheology:
    """Power-law stress model with yield: tau = k * gamma^n + tau0.

    k is the consistency index (Pa s^n), n the dimensionless flow index,
    tau0 the yield stress (Pa). Newtonian fluids have n = 1, tau0 = 0,
    in which case k is the dynamic viscosity.
    """

    k: float
    n: float
    tau0: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"consistency index must be >= 0, got {self.k}")
        if self.n <= 0:
            raise ValueError(f"flow index must be > 0, got {self.n}")
        if self.tau0 < 0:
            raise ValueError(f"yield stress must be >= 0, got {self.tau0}")


def herschel_bulkley(gamma, rheology: Rheology):
    """Shear stress at shear rate gamma (1/s), gamma >= 0."""
    if gamma < 0:
        raise ValueError(f"shear rate must be >= 0, got {gamma}")
    return rheology.k * gamma ** rheology.n + rheology.tau0


# Reference dynamic viscosity used to express damping strengths: the
# source liquid of the baseline simulator.
GLYCERINE_VISCOSITY = 0.950  # Pa s


def effective_viscosity(rheology: Rheology, gamma_char=1.0,
                        reference=GLYCERINE_VISCOSITY):
    """Dimensionless effective viscosity at a characteristic shear rate.

    The apparent dynamic viscosity tau(gamma)/gamma is normalized by the
    reference liquid, so the baseline fluid maps to 1.0.
    """
    if gamma_char <= 0:
        raise ValueError("characteristic shear rate must be > 0")
    apparent = herschel_bulkley(gamma_char, rheology) / gamma_char
    return apparent / reference


@dataclass(frozen=True)
class FluidPreset:
    name: str
    rheology: Rheology
    density: float  # kg/m^3


FLUIDS = {
    "glycerine": FluidPreset("glycerine", Rheology(k=0.950, n=1.0), 1261.0),
    "water": FluidPreset("water", Rheology(k=0.001, n=1.0), 1000.0),
    "blood": FluidPreset("blood", Rheology(k=0.017, n=0.708, tau0=0.0), 1060.0),
}


def fluid_preset(name) -> FluidPreset:
    try:
        return FLUIDS[name]
    except KeyError:
        raise KeyError(
            f"unknown fluid {name!r}; presets: {sorted(FLUIDS)}"
        ) from None

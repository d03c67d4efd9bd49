"""Exception hierarchy shared by the solvers."""

from __future__ import annotations


class KPotentialError(Exception):
    """Base class for all numerical failures raised by this package."""


class IndefiniteForm(KPotentialError):
    """The discrete k-form is not positive definite (k too large)."""


class UnresolvedComponent(KPotentialError):
    """A charge component spans too few grid cells."""


class NonConductorKink(KPotentialError):
    """A derivative jump was found outside the conductor."""


class GridMismatch(KPotentialError):
    pass


class NegativeSamples(KPotentialError):
    pass


class SingularSystem(KPotentialError):
    pass


class DenominatorNonpositive(KPotentialError):
    """C(E) - k^2 |E| <= 0, the closed forms are undefined."""


class DegenerateDenominator(KPotentialError):
    pass


class KinkRadius(KPotentialError):
    """Gradient requested where the one-sided derivatives disagree."""


class OutOfInterval(KPotentialError):
    pass


class TOutOfRange(KPotentialError):
    pass


class NoConvergence(KPotentialError):
    pass


class ScenarioError(ValueError):
    """Malformed scenario file or flags."""

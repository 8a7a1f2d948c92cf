"""Exception hierarchy.

Every error names the module and operation that raised it so the command-line
front end can report failures precisely.
"""


class SpecbandError(Exception):
    module = "specband"
    #: numerical failures map to exit code 3, validation failures to 2
    numerical = True

    def __init__(self, message, *, operation=None, partial=None, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module
        self.operation = operation
        self.partial = partial

    def __str__(self):
        where = self.module if self.operation is None else f"{self.module}.{self.operation}"
        return f"[{where}] {super().__str__()}"


class ValidationError(SpecbandError, ValueError):
    numerical = False


class ConfigError(ValidationError):
    module = "cli"


# potential
class NotRegular(ValidationError):
    module = "potential"


class EdgeSingularity(ValidationError):
    module = "potential"


class OutsideSpectrum(ValidationError):
    module = "potential"


# equilibrium
class NoConvergence(SpecbandError):
    module = "equilibrium"


class DomainTooSmall(SpecbandError):
    module = "equilibrium"


class SingleBand(ValidationError):
    module = "equilibrium"


# orthopoly
class TruncationTooTight(SpecbandError):
    module = "orthopoly"


class LossOfOrthogonality(SpecbandError):
    module = "orthopoly"


# jacobi
class RangeExceeded(ValidationError):
    module = "jacobi"


class SpectralParameterOnAxis(ValidationError):
    module = "jacobi"


# riemann
class IllConditioned(SpecbandError):
    module = "riemann"


class DivergentTruncation(SpecbandError):
    module = "riemann"


class ThetaDivisor(SpecbandError):
    module = "riemann"


class PoorFit(SpecbandError):
    module = "riemann"


# rmt
class NonConfining(SpecbandError):
    module = "rmt"


class InsufficientSamples(SpecbandError):
    module = "rmt"


class PotentialInputError(ValidationError):
    module = "potential"


class EquilibriumInputError(ValidationError):
    module = "equilibrium"


class OrthopolyInputError(ValidationError):
    module = "orthopoly"


class JacobiInputError(ValidationError):
    module = "jacobi"


class RiemannInputError(ValidationError):
    module = "riemann"


class RmtInputError(ValidationError):
    module = "rmt"

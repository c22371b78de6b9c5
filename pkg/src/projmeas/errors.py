"""Exception hierarchy shared across the package."""


class ProjmeasError(Exception):
    """Base class for every error raised by projmeas."""


class EnsembleError(ProjmeasError, ValueError):
    """Invalid ensemble definition (weights, shapes, singular atoms)."""


class NotInvariant(ProjmeasError):
    """A subspace expected to be invariant is not.

    Attributes
    ----------
    residual : float
        Largest relative leakage ``||(I - P_W) g P_W|| / ||g||`` over atoms.
    atom : int
        Index of the atom achieving the residual.
    """

    def __init__(self, residual, atom, msg=None):
        self.residual = float(residual)
        self.atom = int(atom)
        super().__init__(msg or f"subspace not invariant: residual {self.residual:.3e} at atom {self.atom}")


class ToleranceAmbiguity(ProjmeasError):
    """A float rank decision fell inside the ambiguity band; use rational mode."""

    def __init__(self, singular_value, cutoff):
        self.singular_value = float(singular_value)
        self.cutoff = float(cutoff)
        super().__init__(
            f"singular value {self.singular_value:.3e} within a factor 10 of cutoff "
            f"{self.cutoff:.3e}; switch to rational mode"
        )


class DegenerateFrame(ProjmeasError):
    """Orthonormal frame lost rank while propagating a word."""


class ExponentMismatch(ProjmeasError):
    """Two exponents required to be tied are statistically distinct."""


class TimeoutNoReturn(ProjmeasError):
    """A stopping time exceeded its cap."""


class ClassifierInconsistent(ProjmeasError):
    """A component classifier does not compose along products."""


class ScenarioError(ProjmeasError):
    """Scenario parse or validation failure, carrying a line number when known."""

    def __init__(self, msg, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + msg)

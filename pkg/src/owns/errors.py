"""Exception hierarchy shared by every module in the package."""


class OWNSError(Exception):
    """Base class for all errors raised by :mod:`owns`."""


class NotHyperbolic(OWNSError):
    def __init__(self, eigenvalue, tol):
        self.eigenvalue = eigenvalue
        self.tol = tol
        super().__init__(
            f"flux matrix has eigenvalue {eigenvalue!r} with imaginary part "
            f"above tolerance {tol:.3e}"
        )


class SingularBlock(OWNSError):
    """The algebraic block of a singular flux matrix cannot be eliminated."""

    def __init__(self, cond):
        self.cond = cond
        super().__init__(
            f"zero-characteristic block is numerically singular (cond={cond:.3e}); "
            "a grid node probably sits exactly on a sonic or zero-velocity point"
        )


class NotSingular(OWNSError):
    pass


class ClassificationAmbiguous(OWNSError):
    def __init__(self, indices, values, threshold, message=None):
        self.indices = list(indices)
        self.values = list(values)
        self.threshold = threshold
        super().__init__(message or (
            f"{len(self.indices)} eigenvalue(s) have |Im(alpha)| below {threshold:g} "
            f"at the classification growth rate: {self.values[:4]}"
        ))


class UnresolvedPairing(OWNSError):
    pass


class NoConvergence(OWNSError):
    def __init__(self, shift, iterations):
        self.shift = shift
        self.iterations = iterations
        super().__init__(f"inverse iteration at shift {shift!r} did not converge in {iterations} steps")


class IllConditioned(OWNSError):
    def __init__(self, what, cond):
        self.what = what
        self.cond = cond
        super().__init__(f"{what} is ill-conditioned (cond={cond:.3e})")


class PoleCollision(OWNSError):
    def __init__(self, beta, alpha):
        self.beta = beta
        self.alpha = alpha
        super().__init__(f"recursion parameter {beta!r} coincides with eigenvalue {alpha!r}")


class PoleAtEigenvalue(OWNSError):
    pass


class SolveFailure(OWNSError):
    def __init__(self, beta, cond):
        self.beta = beta
        self.cond = cond
        super().__init__(f"linear solve with shift beta={beta!r} failed (cond~{cond:.3e})")


class DegenerateLeadingCoefficient(OWNSError):
    pass


class EmptySpectrum(OWNSError):
    pass


class ExcludedAll(OWNSError):
    pass


class BadConfig(OWNSError):
    pass


class DegenerateSpectrum(OWNSError):
    pass


class BlowUp(OWNSError):
    def __init__(self, station, ratio, partial=None):
        self.station = station
        self.ratio = ratio
        self.partial = partial
        super().__init__(f"solution blew up at station {station} (|phi|/|phi0| = {ratio:.3e})")


class NonpositiveAmplitude(OWNSError):
    pass

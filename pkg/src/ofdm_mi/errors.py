"""Exception types shared across the package."""


class NonConvergenceError(ArithmeticError):
    """A series or quadrature exhausted its budget before meeting tolerance.

    Attributes
    ----------
    what : str
        Short name of the computation that failed.
    achieved : float
        Best error estimate reached before giving up.
    """

    def __init__(self, what: str, achieved: float = float("nan"), detail: str = ""):
        self.what = what
        self.achieved = achieved
        msg = f"{what} did not converge (error estimate {achieved:.3g})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)

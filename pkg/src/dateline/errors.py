class DegenerateProfileError(ValueError):
    """An uncertainty vector has zero mass on the entries active at a stage."""


class EnumerationCapError(ValueError):
    """Exact enumeration over k! orders was refused because k is too large."""

    def __init__(self, k, cap):
        super().__init__(f"ranking length k={k} exceeds the enumeration cap {cap}")
        self.k = k
        self.cap = cap


class DivergenceError(FloatingPointError):
    """Fitting produced a non-finite objective or gradient."""

    def __init__(self, iteration, what="log-likelihood"):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration

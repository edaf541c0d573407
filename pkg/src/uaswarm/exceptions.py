class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class NoIntersectionError(DomainError):
    """A back-projected ray never reaches the ground plane."""


class DegenerateGeometryError(ValueError):
    """Point configuration does not determine a unique rigid transform."""


class InsufficientOverlapError(RuntimeError):
    """Two landmark maps share too few consistent associations to align."""


class ScenarioValidationError(ValueError):
    """Scenario file failed validation. ``errors`` holds field-path messages."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))

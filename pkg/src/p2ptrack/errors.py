"""Exception types raised across the package."""


class ShapeMismatch(ValueError):
    pass


class NotScalar(ValueError):
    pass


class MissingGrad(RuntimeError):
    pass


class EmptyCloud(ValueError):
    pass


class AlreadyAugmented(ValueError):
    pass


class VariantInputMismatch(ValueError):
    pass


class EmptyRegion(ValueError):
    """A search-region crop produced no points."""


class TruncatedFile(ValueError):
    pass


class MalformedLine(ValueError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


class MissingCalib(KeyError):
    pass


class LengthMismatch(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass

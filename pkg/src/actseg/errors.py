"""Exception types shared across the pipeline."""


class ActsegError(Exception):
    """Base class for all actseg errors."""


class MalformedManifest(ActsegError):
    pass


class MissingFrame(ActsegError):
    pass


class ShapeMismatch(ActsegError):
    pass


class EmptyRegion(ActsegError):
    pass


class EmptyNegativeSet(ActsegError):
    pass


class EmptyNegatives(ActsegError):
    pass


class NoTrainableFrames(ActsegError):
    pass


class SingularCovariance(ActsegError):
    pass


class InsufficientData(ActsegError):
    pass


class DegenerateCluster(ActsegError):
    pass


class FrameTooSmall(ActsegError):
    pass


class UncoveredPixel(ActsegError):
    pass


class UnknownRefiner(ActsegError):
    pass


class EmptyRisks(ActsegError):
    pass


class EmptyFrame(ActsegError):
    pass


class EmptySequence(ActsegError):
    pass


class NoTriggeredState(ActsegError):
    pass


class UnknownRequest(ActsegError):
    pass


class InvalidAnnotation(ActsegError):
    pass


class EmptySupplementalPool(ActsegError):
    pass


class UnresolvedRequests(ActsegError):
    pass


class NoReferenceMasks(ActsegError):
    pass

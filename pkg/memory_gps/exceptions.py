class MemoryGPSException(Exception):
    """
    Base class of every error raised by memory_gps.
    """

    pass


class ImproperlyConfigured(MemoryGPSException):
    """
    Raised when a task, method or experiment configuration is invalid.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DimensionMismatch(MemoryGPSException, ValueError):
    pass


class NonFiniteValue(MemoryGPSException, ValueError):
    pass


class EmptySampleSet(MemoryGPSException, ValueError):
    pass


class SingularCovariance(MemoryGPSException, ValueError):
    """
    Raised when a covariance is singular, indefinite or not symmetric.
    """

    def __init__(self, message, condition_number=None):
        if condition_number is not None:
            message = f'{message} (condition estimate {condition_number:.3e})'
        super().__init__(message)
        self.condition_number = condition_number


class TrajOptError(MemoryGPSException):
    """
    Raised when the backward pass meets a Q_uu that stays indefinite
    after maximum jitter.
    """

    def __init__(self, message, time_step=None, eigenvalue=None):
        if time_step is not None:
            message = f'{message} at t={time_step} (min eigenvalue {eigenvalue:.3e})'
        super().__init__(message)
        self.time_step = time_step
        self.eigenvalue = eigenvalue


class DualSearchError(MemoryGPSException):
    def __init__(self, message, kl=None, eta=None):
        if kl is not None:
            message = f'{message} (final KL {kl:.6g}, eta {eta:.3e})'
        super().__init__(message)
        self.kl = kl
        self.eta = eta


class CheckpointError(MemoryGPSException):
    """
    Raised when a checkpoint cannot be parsed or has an unknown version.
    """

    pass


class IterationFailed(MemoryGPSException):
    """
    Wraps a failure inside an outer iteration with the iteration and
    condition it happened in.
    """

    def __init__(self, message, iteration=None, condition=None):
        super().__init__(f'iteration {iteration}, condition {condition}: {message}')
        self.iteration = iteration
        self.condition = condition

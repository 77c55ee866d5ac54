"""Exception types shared across the library."""


class SaSoftmaxError(Exception):
    """Base class for all library errors."""


class EmptyRow(SaSoftmaxError):
    """A row operation received valid_len < 1."""


class NonFiniteInput(SaSoftmaxError):
    """An unmasked input entry is NaN or infinite."""


class NotNormalized(SaSoftmaxError):
    """A weight row expected to sum to 1 does not."""


class ShapeMismatch(SaSoftmaxError):
    """Array arguments disagree on sequence length or feature dimension."""


class OddHeadDim(SaSoftmaxError):
    """Rotary embedding requires an even head dimension."""


class CacheMismatch(SaSoftmaxError):
    """A backward pass received a cache or upstream gradient that does not
    match the forward call that produced it."""


class EmptyHistory(SaSoftmaxError):
    """A metrics history with zero steps was passed where data is required."""


class LengthMismatch(SaSoftmaxError):
    """Two metrics histories differ in step count."""


class CorpusTooSmall(SaSoftmaxError):
    """The training corpus has fewer tokens than one training window."""


class UnknownSymbol(SaSoftmaxError):
    """Text contains a byte that is not part of the trained vocabulary."""


class TextTooShort(SaSoftmaxError):
    """Evaluation text is shorter than one window."""


class NonFiniteGradient(SaSoftmaxError):
    """A parameter gradient became NaN or infinite during training."""

class MorphoNLGError(Exception):
    """Base class for all morpho-nlg errors."""

    pass


class DASyntaxError(MorphoNLGError):
    """Raised when a dialogue act string does not follow the DA grammar."""

    def __init__(self, text, offset, reason):
        self.text = text
        self.offset = offset
        self.reason = reason
        super().__init__(f"Error: {reason} at offset {offset} in DA '{text}'")


class UnknownDATypeError(MorphoNLGError):
    """Raised when a DA type is not in the configured registry."""

    def __init__(self, da_type):
        self.da_type = da_type
        super().__init__(f"Error: Unknown DA type '{da_type}'")


class UnknownSlotError(MorphoNLGError):
    """Raised when a slot is not in the configured registry."""

    def __init__(self, slot):
        self.slot = slot
        super().__init__(f"Error: Unknown slot '{slot}'")


class EmptyDialogueActError(MorphoNLGError):
    """Raised when a dialogue act has no items."""

    def __init__(self):
        super().__init__("Error: A dialogue act needs at least one item")


class TagLengthError(MorphoNLGError):
    """Raised when a positional tag does not have the expected length."""

    def __init__(self, tag, expected):
        self.tag = tag
        self.expected = expected
        super().__init__(f"Error: Tag '{tag}' has length {len(tag)}, expected {expected}")


class TagAlphabetError(MorphoNLGError):
    """Raised when a positional tag holds a character outside the tagset alphabet."""

    def __init__(self, tag, position):
        self.tag = tag
        self.position = position
        super().__init__(f"Error: Invalid character {tag[position - 1]!r} at position {position} of tag '{tag}'")


class MisalignedRowError(MorphoNLGError):
    """Raised when form/lemma/tag rows cannot be aligned."""

    def __init__(self, line_number, reason):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"Error: Misaligned row {line_number}: {reason}")


class UnknownSlotValueError(MorphoNLGError):
    """Raised when a (slot, value) pair has no surface forms in the lexicon."""

    def __init__(self, slot, value):
        self.slot = slot
        self.value = value
        super().__init__(f"Error: No surface forms for {slot}={value!r}")


class MissingAssignmentError(MorphoNLGError):
    """Raised when placeholders have no value to be filled with."""

    def __init__(self, slots):
        self.slots = list(slots)
        super().__init__(f"Error: No value for placeholder slot(s): {', '.join(self.slots)}")


class EmptyCorpusError(MorphoNLGError):
    """Raised when an operation needs at least one sentence or instance."""

    def __init__(self, what):
        self.what = what
        super().__init__(f"Error: Empty {what}")


class NonFiniteError(MorphoNLGError):
    """Raised when a value that must be finite is NaN or infinite."""

    def __init__(self, what):
        self.what = what
        super().__init__(f"Error: Non-finite value in {what}")


class ShapeMismatchError(MorphoNLGError):
    """Raised when array shapes are inconsistent."""

    def __init__(self, what, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"Error: Shape mismatch for {what}: expected {expected}, got {actual}")


class RateOutOfRangeError(MorphoNLGError):
    """Raised when a dropout rate is outside [0, 1)."""

    def __init__(self, rate):
        self.rate = rate
        super().__init__(f"Error: Dropout rate {rate} is outside [0, 1)")


class TargetOutOfRangeError(MorphoNLGError):
    """Raised when a target index does not address a logit."""

    def __init__(self, target, size):
        self.target = target
        self.size = size
        super().__init__(f"Error: Target index {target} out of range for {size} classes")


class LengthMismatchError(MorphoNLGError):
    """Raised when two sequences that must be aligned differ in length."""

    def __init__(self, what, left, right):
        self.what = what
        self.left = left
        self.right = right
        super().__init__(f"Error: Length mismatch in {what}: {left} vs. {right}")


class TargetCountError(MorphoNLGError):
    """Raised when an expansion target is below the number of unique texts of its signature."""

    def __init__(self, signature, target, n_unique):
        self.signature = signature
        self.target = target
        self.n_unique = n_unique
        super().__init__(f"Error: Target {target} for {signature} is below its {n_unique} unique texts")


class CorpusFormatError(MorphoNLGError):
    """Raised when a corpus, lexicon or targets file cannot be parsed."""

    def __init__(self, path, line, reason):
        self.path = path
        self.line = line
        self.reason = reason
        super().__init__(f"Error: {path}:{line}: {reason}")


class CheckpointFormatError(MorphoNLGError):
    """Raised when a checkpoint file is not a valid container."""

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"Error: Checkpoint '{path}' is invalid: {reason}")


class MissingPrerequisiteError(MorphoNLGError):
    """Raised when a command needs an artifact that does not exist."""

    def __init__(self, path, what):
        self.path = path
        self.what = what
        super().__init__(f"Error: {what} not found: '{path}'")


class CommandNotFoundError(MorphoNLGError):
    """Raised when a command is not recognized."""

    def __init__(self, command):
        self.command = command
        super().__init__(f"Error: Unrecognized command '{command}'")

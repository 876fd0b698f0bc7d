"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with an operation."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class UnresolvedPlaceholderError(KeyError):
    """A placeholder token has no matching slot in the meaning representation."""

    def __init__(self, tokens):
        self.tokens = list(tokens)
        super().__init__(f"unresolved placeholder(s): {', '.join(self.tokens)}")

    def __str__(self):
        return self.args[0]


class MRParseError(ValueError):
    """Malformed meaning-representation string."""

    def __init__(self, message, text, position):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position}: {text!r}")


class CorpusFormatError(ValueError):
    """A corpus file violates its schema."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class CheckpointError(ValueError):
    """A checkpoint file is corrupt or incompatible."""

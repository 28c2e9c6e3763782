"""Exceptions raised by the library; the CLI turns them into exit statuses."""


class ShapeError(ValueError):
    """Input or parameter shapes do not match a network spec."""


class NumericOverflowError(ArithmeticError):
    """A forward pass produced non-finite activations."""

    def __init__(self, message: str, layer: int):
        super().__init__(message)
        self.layer = layer


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite. `params` holds the last good parameters."""

    def __init__(self, message: str, params=None):
        super().__init__(message)
        self.params = params


class IdxFormatError(ValueError):
    """Malformed IDX file."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ContainerError(ValueError):
    """Malformed or incompatible model container."""


class ChecksumError(ContainerError):
    """Container payload does not match its checksum."""


class KindError(ContainerError):
    """Container holds a different component than the caller asked for."""


class MissingArtifactError(FileNotFoundError):
    """A pipeline stage needs an artifact an earlier stage has not produced."""

    def __init__(self, artifact: str, path, command: str):
        super().__init__(
            f"Missing {artifact} artifact at {path}. Run '{command}' first."
        )
        self.artifact = artifact
        self.path = path
        self.command = command


class DownloadError(RuntimeError):
    """A dataset file could not be fetched."""

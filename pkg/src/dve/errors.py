"""Exception types shared across the toolkit.

Every failure mode that callers are expected to branch on gets its own
class; all inherit from :class:`DveError` so CLI and service layers can
catch the whole family at once.
"""


class DveError(Exception):
    """Base class for all toolkit errors."""


class ZeroVector(DveError):
    """A vector with (near-)zero norm appeared where a direction is required."""


class DimMismatch(DveError):
    """Embedding dimensions or array shapes disagree."""


class ShapeMismatch(DveError):
    """Label values fall outside the governing class spectrum."""


class MissingSegment(DveError):
    """A mask references a segment id with no usable record."""

    def __init__(self, segment_id: int, detail: str = "no record"):
        super().__init__(f"segment id {segment_id}: {detail}")
        self.segment_id = segment_id


class DuplicateSegment(DveError):
    """Two records share one segment id."""

    def __init__(self, segment_id: int):
        super().__init__(f"duplicate segment id {segment_id}")
        self.segment_id = segment_id


class EmptyCoverage(DveError):
    """No covered pixel supplies supervision."""


class NonFinite(DveError):
    """Loss or parameters left the finite range (learning rate too high?)."""


class EmptyClass(DveError):
    """A class has no segment records to average."""

    def __init__(self, class_id: int):
        super().__init__(f"class {class_id} has no segment records")
        self.class_id = class_id


class NoLabeledPixels(DveError):
    """Every pixel is marked ignore; nothing to train on."""


class BadMagic(DveError):
    """File does not start with the expected magic bytes."""


class BadVersion(DveError):
    """File declares an unsupported format version."""


class TruncatedPayload(DveError):
    """Declared dimensions disagree with the actual byte length."""


class UnknownDtype(DveError):
    """Volume header declares a dtype code this reader does not know."""


class BadSchema(DveError):
    """JSON document does not match the expected schema."""


class NoEmbedderConfigured(DveError):
    """Prompt missed the bank and no external embedder is configured."""


class ProviderUnreachable(DveError):
    """External embedder endpoint could not be reached."""


class ProviderTimeout(DveError):
    """External embedder did not answer within the configured timeout."""


class UnknownImage(DveError):
    """Requested image id is not loaded in the session."""


class NoMapLoaded(DveError):
    """A map query was issued but no 3D map is loaded."""


class MissingReferences(DveError):
    """Segmentation mode needs a reference bank that is not loaded."""


class MissingProbe(DveError):
    """Probe-mode segmentation requested without probe weights."""

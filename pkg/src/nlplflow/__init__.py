"""nlplflow: information-flow analysis at LLM API callsites.

Extracts prompt placeholders and dangerous sinks from Python source, labels
placeholder-output pairs with a 24-label flow taxonomy, predicts taint
propagation for (placeholder x sink) pairs, and computes taxonomy-informed
backward slices.
"""

__version__ = "0.1.0"

from .taxonomy import (  # noqa: F401
    Label,
    LabelGroup,
    NON_PROPAGATING,
    PreservationLevel,
    is_non_propagating,
    label_metadata,
    parse_label,
)

"""Link-level simulator for fully asynchronous unsourced random access."""

from .config import SystemConfig, ValidationReport, validate, derive_stream

__all__ = ["SystemConfig", "ValidationReport", "validate", "derive_stream"]
__version__ = "0.1.0"

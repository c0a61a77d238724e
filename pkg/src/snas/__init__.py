"""Hardware-aware one-shot channel-width architecture search."""

__version__ = "0.1.0"

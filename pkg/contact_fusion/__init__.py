"""Contact-patch estimation from fused proximity and tactile depth."""

__version__ = "0.3.0"

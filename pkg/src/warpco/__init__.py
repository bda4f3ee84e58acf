"""warpco: wrapper-aware rate-distortion optimization for sandwich feature codecs."""

__version__ = "0.1.0"

"""Two-party agreement protocols on finite information structures."""

__version__ = "0.1.0"

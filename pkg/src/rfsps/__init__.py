"""Resonance fluorescence through a finite-bandwidth detector, with homodyne restoration of antibunching."""

__version__ = "0.1.0"

"""Box-dimension bounds for self-affine sponges built from generalised permutation matrices."""

from __future__ import annotations

__version__ = "0.1.0"

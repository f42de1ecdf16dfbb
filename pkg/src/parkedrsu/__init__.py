"""Parked cars as self-organising roadside units: coverage maps, activation decisions,
replacement elections, broadcast assistance and an exhaustive-search baseline."""
from __future__ import annotations

__version__ = "0.1.0"

"""Polar lattices: construction, coding, shaping and analysis."""

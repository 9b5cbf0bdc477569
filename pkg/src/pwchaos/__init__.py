"""Melnikov chaos for planar piecewise-smooth systems with the saddle on the switching line."""
__version__ = "0.1.0"

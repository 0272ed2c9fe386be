"""Richardson-Gaudin pairing model: exact Bethe roots and finite-gap semiclassics."""

__version__ = "0.1.0"

"""Virtual-Z frame folding and open-system simulation of single-qubit pulse sequences."""

__version__ = "0.1.0"

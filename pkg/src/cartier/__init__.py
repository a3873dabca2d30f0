"""Language-grounded navigation targets from robot exploration data."""

__version__ = "0.1.0"

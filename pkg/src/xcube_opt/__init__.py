"""XML star-schema warehouse with a join index and workload-driven view selection."""

__version__ = "0.1.0"

"""Readout benchmarking: detector tomography, mitigated state tomography, readout metrics."""
__version__ = "0.1.0"

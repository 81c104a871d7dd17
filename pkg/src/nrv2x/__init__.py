"""5G NR radio-access latency simulator for V2N2V packet exchanges."""

__version__ = "0.1.0"

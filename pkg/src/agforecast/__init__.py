"""Attack-graph security metrics with exploit-lifecycle forecasting."""

__version__ = "0.1.0"

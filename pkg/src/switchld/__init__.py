"""Large deviations and homogenisation for switching diffusions."""

__version__ = "0.1.0"

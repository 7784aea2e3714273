"""Two-stage Bernstein estimator for monotone ozone-temperature mortality surfaces."""

__version__ = "0.1.0"

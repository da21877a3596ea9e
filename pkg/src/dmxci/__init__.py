"""Cross-channel nonlinear interference accumulation in dispersion-managed,
disaggregated optical line segments."""

__version__ = "0.1.0"

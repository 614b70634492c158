"""Control-aware age-of-information scheduling and mean-field LQ tracking."""

__version__ = "0.1.0"

"""Football tournament forecasting: team abilities, goal models and EURO simulation."""

__version__ = "0.1.0"

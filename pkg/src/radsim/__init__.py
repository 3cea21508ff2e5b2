"""AS-level routing simulator for middlebox-avoidance attacks and their
transit-revenue consequences."""

__version__ = "0.1.0"

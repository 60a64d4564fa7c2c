"""Core infrastructure: settings, logging, exceptions and numeric helpers."""

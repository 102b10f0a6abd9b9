"""Bundled graph fixtures and scenarios."""

"""Experiment runner commands."""

"""Runtime configuration and output path modules."""

"""Pipeline entrypoints."""


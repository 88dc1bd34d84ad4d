"""Pipeline services package."""

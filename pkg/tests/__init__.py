"""Test suite package."""

"""Intent-conditioned cryptographic violation detection lab."""

"""Feature registry and window feature extraction."""

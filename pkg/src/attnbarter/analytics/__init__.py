"""Empirical follower-graph pipeline: loading, filtering, ability proxy and per-percentile series."""

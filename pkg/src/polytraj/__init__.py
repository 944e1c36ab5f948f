"""Minimum-time Bezier trajectories through chains of convex polytopes."""

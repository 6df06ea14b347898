"""Simulation scenarios, clustering metrics and posterior predictive checks."""

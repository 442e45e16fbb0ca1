"""Constraint-aware Hopfield estimators for online parameter identification."""

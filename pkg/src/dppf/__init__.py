"""Optimal matrix factorizations for differentially private streaming prefix sums."""

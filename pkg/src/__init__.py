"""Restarted first-order methods and sparse MPC solvers."""

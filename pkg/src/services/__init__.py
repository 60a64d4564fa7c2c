"""Solvers, MPC formulations, plants and benchmark drivers."""

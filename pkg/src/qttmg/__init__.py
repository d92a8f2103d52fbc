"""Multigrid quantics tensor-train solvers."""

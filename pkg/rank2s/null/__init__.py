"""Null distributions: exact enumeration, Monte-Carlo, permutation and asymptotic."""

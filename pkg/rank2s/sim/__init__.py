"""Scenario generators and the power-study harness."""

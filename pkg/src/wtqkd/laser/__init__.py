"""Injection-locked FP laser model."""

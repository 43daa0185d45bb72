"""Core kernels and shared plumbing (errors, fixed-point math, random numbers)."""

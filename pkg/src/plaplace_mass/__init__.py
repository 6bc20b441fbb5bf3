"""Radial p-Laplacian laboratory for critical-exponent problems on balls."""

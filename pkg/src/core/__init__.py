"""
Core modules for numerics, synthetic data, geometry and partitioning
"""

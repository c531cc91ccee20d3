"""
Seed generation and hypergraph label propagation
"""

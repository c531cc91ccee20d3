"""
Pipeline orchestration, evaluation and command-line interface
"""

"""
Utility modules for errors and logging
"""

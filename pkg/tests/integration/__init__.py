"""
Integration tests for the src package.
"""

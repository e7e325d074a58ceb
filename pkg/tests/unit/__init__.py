"""
Unit tests for the markdown converter project.
"""

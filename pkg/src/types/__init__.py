"""
Type definitions and interfaces for modules.

This package contains standardized type definitions shared by the data, model
and evaluation modules.
"""

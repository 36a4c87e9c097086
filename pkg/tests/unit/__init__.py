"""
Unit tests for individual services and models.
"""

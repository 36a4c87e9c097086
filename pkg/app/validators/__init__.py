"""
Validation utilities for raw market CSV rows.
"""

from .market_validator import MarketValidator, RowIssue, ValidationReport

__all__ = ["MarketValidator", "RowIssue", "ValidationReport"]

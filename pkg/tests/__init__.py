"""
Test suite for desirability-ladder.

This package contains all tests organized by type:
- unit/: Unit tests for individual services and models
- integration/: CLI runs and end-to-end synthetic-market roundtrips
"""

"""
Integration tests for the CLI and the full pipeline.

Tests marked ``slow`` build large synthetic markets.
"""

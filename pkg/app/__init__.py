"""
desirability-ladder

Message-network desirability ranking, desirability-gap analytics, message
content metrics and the regression suite for online dating markets.
"""

__version__ = "1.0.0"

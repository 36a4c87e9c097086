"""
Pipeline services.
"""

from .error_handler_service import ErrorHandlerService
from .market_data_service import MarketDataService

__all__ = ["ErrorHandlerService", "MarketDataService"]

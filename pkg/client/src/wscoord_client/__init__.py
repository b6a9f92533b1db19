"""Thin client SDK for the wscoord coordination-service wire protocol."""

from .client import (ClientError, ClientSession, Conflict, ServiceError,
                     StaleEntry, TransportError, WriteResult, connect)

__all__ = [
    "ClientError",
    "ClientSession",
    "Conflict",
    "ServiceError",
    "StaleEntry",
    "TransportError",
    "WriteResult",
    "connect",
]

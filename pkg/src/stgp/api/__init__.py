from . import schemas, service

__all__ = ["schemas", "service"]

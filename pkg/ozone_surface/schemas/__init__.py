from .types import NDArray

__all__ = ["NDArray"]

"""Runtime engine: object model, interpreter, queues, events, and marshaling."""

from .engine import Engine, EngineConfig, TaskCtx

__all__ = ["Engine", "EngineConfig", "TaskCtx"]

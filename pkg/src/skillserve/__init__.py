"""skillserve - serve skill folders over HTTP (SSE/JSON) and MCP from one process."""

__version__ = "0.1.0"

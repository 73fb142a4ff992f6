"""Sample handlers and skill folders bundled with skillserve.

``skillserve.samples:registry`` is the default ``handlers`` setting, so a
project created by ``skillserve init`` serves out of the box.
"""

from skillserve.samples.handlers import registry

__all__ = ["registry"]

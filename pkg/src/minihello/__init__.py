"""mini-hello: a distributed object-oriented mini-language.

The package contains a translator that compiles .hlo source packages into
portable runpack images, and a runtime engine that executes them across
hosts: remote references, queued messaging, deep-copy argument passing,
group traversals, multi-hop routing, on-demand code transfer, and SID-based
access control. A deterministic in-process simulator drives multi-host
scenarios for tests and demos.
"""

__version__ = "0.1.0"

"""havld: a user-space high-availability virtual load director.

A single artifact covering the classic three-tier web cluster: an
LVS-style director (four scheduling algorithms plus a connection table),
backend health monitoring, a two-node heartbeat failover pair with
virtual-IP takeover, a TCP reverse-proxy data plane, and a deterministic
discrete-event simulator for the whole cluster.
"""

__version__ = "0.1.0"

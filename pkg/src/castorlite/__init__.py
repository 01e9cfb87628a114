"""castorlite: a desk-scale hierarchical storage manager.

Cooperating daemons (name server, volume manager, drive queue manager,
tape mover, stager, disk IO server) speak a framed-JSON TCP protocol and
tier files between disk pools and a simulated tape plant.  All tape
hardware timing runs on a controllable clock so week-long workloads
compress into seconds.
"""

__version__ = "0.1.0"

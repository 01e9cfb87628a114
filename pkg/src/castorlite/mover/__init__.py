from castorlite.mover.ring import BufferRing, ClockChannel, pipeline_copy, pipeline_duration
from castorlite.mover.tapestore import TapeStore
from castorlite.mover.server import MoverServer
from castorlite.mover.timing import job_duration

__all__ = ["BufferRing", "ClockChannel", "pipeline_copy", "pipeline_duration",
           "TapeStore", "MoverServer", "job_duration"]

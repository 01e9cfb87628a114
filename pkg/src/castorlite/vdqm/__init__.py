from castorlite.vdqm.state import DriveRecord, VdqmState, VolumeRequest
from castorlite.vdqm.server import VdqmServer

__all__ = ["DriveRecord", "VdqmState", "VolumeRequest", "VdqmServer"]

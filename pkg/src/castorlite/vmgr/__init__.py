from castorlite.vmgr.state import TapePool, TapeVolume, VmgrState
from castorlite.vmgr.server import VmgrServer

__all__ = ["TapePool", "TapeVolume", "VmgrState", "VmgrServer"]

from castorlite.stager.state import DiskCopy, StagerState
from castorlite.stager.server import StagerServer

__all__ = ["DiskCopy", "StagerState", "StagerServer"]

from castorlite.rfio.diskserver import RfiodServer
from castorlite.rfio.session import RfioSession

__all__ = ["RfiodServer", "RfioSession"]

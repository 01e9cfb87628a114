from castorlite.nameserver.catalog import NsCatalog, NsEntry, Segment
from castorlite.nameserver.routes import ServerRoute, resolve_route
from castorlite.nameserver.server import NameServer

__all__ = ["NsCatalog", "NsEntry", "Segment", "ServerRoute", "resolve_route", "NameServer"]

"""Instance routing for the namespace.

The namespace is rooted at /castor; the second path component names a
domain and the third selects the name-server instance serving that
sub-tree.  The conventional instance alias is "cns" + top directory
name, e.g. /castor/cern.ch/user is served by cnsuser.cern.ch.  Routing
is a pure function of the path and a static route table distributed in
client configs.
"""

from __future__ import annotations

from dataclasses import dataclass

from castorlite.errors import MalformedPath, UnknownRoute

ROOT = "castor"
MAX_COMPONENT_BYTES = 255
MAX_DEPTH = 64


def split_path(path: str) -> list[str]:
    """Validate and split an absolute namespace path into components.

    "/castor" -> ["castor"]; "/castor/cern.ch/user" ->
    ["castor", "cern.ch", "user"].
    """
    if not isinstance(path, str) or not path.startswith("/"):
        raise MalformedPath(f"path must be absolute: {path!r}")
    raw = path.rstrip("/")
    if raw == "":
        raise MalformedPath("empty path")
    parts = raw.split("/")[1:]
    if not parts or parts[0] != ROOT:
        raise MalformedPath(f"path must be rooted at /{ROOT}: {path!r}")
    if len(parts) > MAX_DEPTH:
        raise MalformedPath(f"path deeper than {MAX_DEPTH}: {path!r}")
    for comp in parts:
        if comp in ("", ".", ".."):
            raise MalformedPath(f"illegal component {comp!r} in {path!r}")
        if len(comp.encode("utf-8")) > MAX_COMPONENT_BYTES:
            raise MalformedPath(f"component longer than {MAX_COMPONENT_BYTES} bytes")
    return parts


@dataclass(frozen=True)
class ServerRoute:
    domain: str
    top_dir: str
    instance_addr: str

    @property
    def alias(self) -> str:
        return "cns" + self.top_dir


def resolve_route(path: str, routes) -> ServerRoute:
    """Pick the name-server instance serving `path` from a route table."""
    parts = split_path(path)
    if len(parts) < 3:
        raise MalformedPath(f"need /{ROOT}/<domain>/<dir>/...: {path!r}")
    domain, top_dir = parts[1], parts[2]
    exact = None
    wildcard = None
    for r in routes:
        if r.domain != domain:
            continue
        if r.top_dir == top_dir:
            exact = r
            break
        if r.top_dir == "*" and wildcard is None:
            wildcard = r
    hit = exact or wildcard
    if hit is None:
        raise UnknownRoute(f"no name server registered for /{ROOT}/{domain}/{top_dir}")
    return ServerRoute(domain=domain, top_dir=top_dir, instance_addr=hit.addr)

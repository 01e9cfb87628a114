"""Configuration loading.

Everything is TOML: a plant file describing drive models, pools and
cartridges, and a cluster file naming listen addresses, journal
locations, disk pools and policy knobs.  Paths inside a config are
resolved relative to a base directory chosen by the caller (usually the
config file's parent).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from castorlite.errors import SpecInvalid

MiB = 2**20


def _load_toml(path) -> dict:
    with open(path, "rb") as fp:
        return tomllib.load(fp)


# ---------------------------------------------------------------------------
# Tape plant
# ---------------------------------------------------------------------------

@dataclass
class DrivePlantModel:
    name: str
    drives: int
    servers: int
    streaming_rate_bytes_per_s: float
    mount_seconds: float
    position_seconds_per_fseq: float
    volume_capacity_bytes: int
    unmount_fraction: float = 0.5

    def __post_init__(self):
        if self.drives <= 0 or self.servers <= 0:
            raise SpecInvalid(f"model {self.name}: counts must be positive")
        if self.streaming_rate_bytes_per_s <= 0:
            raise SpecInvalid(f"model {self.name}: rate must be positive")


@dataclass
class PlantPool:
    name: str
    uid: int = 0
    gid: int = 0


@dataclass
class PlantVolume:
    vid: str
    pool: str
    model: str
    capacity_bytes: int


@dataclass
class PlantConfig:
    models: dict[str, DrivePlantModel] = field(default_factory=dict)
    pools: list[PlantPool] = field(default_factory=list)
    volumes: list[PlantVolume] = field(default_factory=list)

    @property
    def total_drives(self) -> int:
        return sum(m.drives for m in self.models.values())

    @property
    def total_servers(self) -> int:
        return sum(m.servers for m in self.models.values())

    def drive_records(self) -> list[tuple[str, str, str]]:
        """(drive_name, server_name, model) for every drive in the plant."""
        out = []
        for m in self.models.values():
            tag = m.name.lower()
            servers = [f"tps-{tag}-{k:02d}" for k in range(m.servers)]
            for j in range(m.drives):
                out.append((f"{tag}-d{j:02d}", servers[j % m.servers], m.name))
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "PlantConfig":
        models = {}
        for m in doc.get("model", []):
            mod = DrivePlantModel(
                name=m["name"],
                drives=int(m["drives"]),
                servers=int(m["servers"]),
                streaming_rate_bytes_per_s=float(m["streaming_rate_bytes_per_s"]),
                mount_seconds=float(m["mount_seconds"]),
                position_seconds_per_fseq=float(m["position_seconds_per_fseq"]),
                volume_capacity_bytes=int(m["volume_capacity_bytes"]),
                unmount_fraction=float(m.get("unmount_fraction", 0.5)),
            )
            models[mod.name] = mod
        pools = [PlantPool(p["name"], int(p.get("uid", 0)), int(p.get("gid", 0)))
                 for p in doc.get("pool", [])]
        volumes = []
        for v in doc.get("volume", []):
            volumes.append(PlantVolume(
                vid=v["vid"], pool=v["pool"], model=v["model"],
                capacity_bytes=int(v["capacity_bytes"]),
            ))
        for gen in doc.get("volumes", []):
            model = models.get(gen["model"])
            if model is None:
                raise SpecInvalid(f"volume group references unknown model {gen['model']!r}")
            count = int(gen["count"])
            prefix = gen["prefix"]
            cap = int(gen.get("capacity_bytes", model.volume_capacity_bytes))
            width = 6 - len(prefix)
            if width < 1 or count > 10**width:
                raise SpecInvalid(f"volume prefix {prefix!r} cannot label {count} vids")
            for i in range(count):
                volumes.append(PlantVolume(
                    vid=f"{prefix}{i:0{width}d}", pool=gen["pool"],
                    model=gen["model"], capacity_bytes=cap,
                ))
        return cls(models=models, pools=pools, volumes=volumes)

    @classmethod
    def from_toml(cls, path) -> "PlantConfig":
        return cls.from_dict(_load_toml(path))


def default_plant() -> PlantConfig:
    """The plant shipped with the package (historic CERN drive census)."""
    text = resources.files("castorlite.data").joinpath("default_plant.toml").read_bytes()
    return PlantConfig.from_dict(tomllib.loads(text.decode("utf-8")))


# ---------------------------------------------------------------------------
# Cluster
# ---------------------------------------------------------------------------

@dataclass
class RouteEntry:
    domain: str
    top_dir: str
    addr: str


@dataclass
class NameserverConfig:
    listen: str = "127.0.0.1:0"
    journal_dir: str = "ns-journal"
    domain: str = "cern.ch"
    snapshot_every: int = 1000


@dataclass
class VmgrConfig:
    listen: str = "127.0.0.1:0"
    journal_dir: str = "vmgr-journal"
    plant: str | None = None
    eot_reserve_fraction: float = 0.01
    snapshot_every: int = 1000


@dataclass
class VdqmConfig:
    listen: str = "127.0.0.1:0"
    read_compat: list[tuple[str, str]] = field(default_factory=lambda: [("9940B", "9940A")])


@dataclass
class MoverConfig:
    listen: str = "127.0.0.1:0"
    tape_root: str = "tape"
    plant: str | None = None
    n_buffers: int = 8
    buffer_bytes: int = 4 * MiB


@dataclass
class RfiodConfig:
    name: str = "ds01"
    listen: str = "127.0.0.1:0"
    root: str = "fs/ds01"


@dataclass
class FilesystemConfig:
    server: str
    path: str
    capacity_bytes: int


@dataclass
class PoolConfig:
    name: str
    tape_pool: str
    filesystems: list[FilesystemConfig]
    gc_low: float = 0.70
    gc_high: float = 0.90
    migration_threshold_bytes: int = 256 * MiB
    migration_max_age_s: float = 300.0
    copies_required: int = 1
    migration_streams: int = 2

    def __post_init__(self):
        if not (0 < self.gc_low < self.gc_high <= 1.0):
            raise SpecInvalid(f"pool {self.name}: watermarks must satisfy 0 < low < high <= 1")


@dataclass
class StagerConfig:
    listen: str = "127.0.0.1:0"
    journal_dir: str = "stager-journal"
    pools: list[PoolConfig] = field(default_factory=list)
    policy_interval_s: float = 0.0  # 0 disables the background policy loop
    snapshot_every: int = 1000


@dataclass
class ClusterConfig:
    clock: str = "virtual"
    clock_scale: float = 1.0
    quantum: float = 0.010
    nameserver: NameserverConfig = field(default_factory=NameserverConfig)
    vmgr: VmgrConfig = field(default_factory=VmgrConfig)
    vdqm: VdqmConfig = field(default_factory=VdqmConfig)
    mover: MoverConfig = field(default_factory=MoverConfig)
    rfiods: list[RfiodConfig] = field(default_factory=lambda: [RfiodConfig()])
    stager: StagerConfig = field(default_factory=StagerConfig)
    routes: list[RouteEntry] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)

    def resolve(self, p: str | None) -> str | None:
        if p is None:
            return None
        return str((self.base_dir / p).resolve())

    @classmethod
    def from_toml(cls, path) -> "ClusterConfig":
        path = Path(path)
        doc = _load_toml(path)
        return cls.from_dict(doc, base_dir=path.parent)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=Path(".")) -> "ClusterConfig":
        cl = doc.get("cluster", {})
        cfg = cls(
            clock=cl.get("clock", "virtual"),
            clock_scale=float(cl.get("clock_scale", 1.0)),
            quantum=float(cl.get("quantum", 0.010)),
            base_dir=Path(cl.get("data_dir", base_dir)),
        )
        ns = doc.get("nameserver", {})
        cfg.nameserver = NameserverConfig(
            listen=ns.get("listen", "127.0.0.1:0"),
            journal_dir=ns.get("journal_dir", "ns-journal"),
            domain=ns.get("domain", "cern.ch"),
            snapshot_every=int(ns.get("snapshot_every", 1000)),
        )
        vm = doc.get("vmgr", {})
        cfg.vmgr = VmgrConfig(
            listen=vm.get("listen", "127.0.0.1:0"),
            journal_dir=vm.get("journal_dir", "vmgr-journal"),
            plant=vm.get("plant"),
            eot_reserve_fraction=float(vm.get("eot_reserve_fraction", 0.01)),
            snapshot_every=int(vm.get("snapshot_every", 1000)),
        )
        vd = doc.get("vdqm", {})
        cfg.vdqm = VdqmConfig(
            listen=vd.get("listen", "127.0.0.1:0"),
            read_compat=[tuple(p) for p in vd.get("read_compat", [["9940B", "9940A"]])],
        )
        mv = doc.get("mover", {})
        cfg.mover = MoverConfig(
            listen=mv.get("listen", "127.0.0.1:0"),
            tape_root=mv.get("tape_root", "tape"),
            plant=mv.get("plant", vm.get("plant")),
            n_buffers=int(mv.get("n_buffers", 8)),
            buffer_bytes=int(mv.get("buffer_bytes", 4 * MiB)),
        )
        cfg.rfiods = [
            RfiodConfig(name=r.get("name", f"ds{i:02d}"),
                        listen=r.get("listen", "127.0.0.1:0"),
                        root=r.get("root", f"fs/ds{i:02d}"))
            for i, r in enumerate(doc.get("rfiod", [{}]), start=1)
        ]
        stg = doc.get("stager", {})
        pools = []
        for p in stg.get("pools", []):
            pools.append(PoolConfig(
                name=p["name"],
                tape_pool=p.get("tape_pool", p["name"]),
                filesystems=[
                    FilesystemConfig(server=f["server"], path=f["path"],
                                     capacity_bytes=int(f["capacity_bytes"]))
                    for f in p.get("filesystems", [])
                ],
                gc_low=float(p.get("gc_low", 0.70)),
                gc_high=float(p.get("gc_high", 0.90)),
                migration_threshold_bytes=int(p.get("migration_threshold_bytes", 256 * MiB)),
                migration_max_age_s=float(p.get("migration_max_age_s", 300.0)),
                copies_required=int(p.get("copies_required", 1)),
                migration_streams=int(p.get("migration_streams", 2)),
            ))
        cfg.stager = StagerConfig(
            listen=stg.get("listen", "127.0.0.1:0"),
            journal_dir=stg.get("journal_dir", "stager-journal"),
            pools=pools,
            policy_interval_s=float(stg.get("policy_interval_s", 0.0)),
            snapshot_every=int(stg.get("snapshot_every", 1000)),
        )
        cfg.routes = [
            RouteEntry(domain=r["domain"], top_dir=r.get("top_dir", "*"),
                       addr=r.get("addr", cfg.nameserver.listen))
            for r in doc.get("routes", [])
        ]
        if not cfg.routes:
            cfg.routes = [RouteEntry(domain=cfg.nameserver.domain, top_dir="*",
                                     addr=cfg.nameserver.listen)]
        return cfg

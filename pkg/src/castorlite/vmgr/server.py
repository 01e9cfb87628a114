"""Volume manager daemon."""

from __future__ import annotations

import threading

from castorlite.vmgr.state import VmgrState
from castorlite.wire.server import Daemon


class VmgrServer(Daemon):
    name = "vmgr"

    def __init__(self, clock, journal_dir, plant=None,
                 eot_reserve_fraction: float = 0.01, snapshot_every: int = 1000):
        super().__init__(clock)
        self.plant = plant
        self.state = VmgrState(journal_dir, clock, plant=plant,
                               eot_reserve_fraction=eot_reserve_fraction,
                               snapshot_every=snapshot_every)
        self._lock = threading.RLock()
        for op, fn in {
            "vmgr.add_pool": self.op_add_pool,
            "vmgr.add_volume": self.op_add_volume,
            "vmgr.add_volumes": self.op_add_volumes,
            "vmgr.set_status": self.op_set_status,
            "vmgr.release": self.op_release,
            "vmgr.release_pool": self.op_release_pool,
            "vmgr.query": self.op_query,
            "vmgr.list_volumes": self.op_list_volumes,
            "vmgr.list_pools": self.op_list_pools,
            "vmgr.select_tape_for_migration": self.op_select,
            "vmgr.update_after_write": self.op_update_after_write,
            "vmgr.plant": self.op_plant,
        }.items():
            self.register(op, fn)

    def on_stop(self):
        self.state.close()

    def _vol_dict(self, vol):
        d = vol.to_dict(busy=vol.vid in self.state.busy)
        d["reserve_bytes"] = self.state._reserve(vol)
        return d

    def op_add_pool(self, name, uid=0, gid=0):
        with self._lock:
            self.state.add_pool(name, uid, gid)
            return {}

    def op_add_volume(self, vid, pool, model, capacity_bytes, free_bytes=None):
        with self._lock:
            self.state.add_volume(vid, pool, model, capacity_bytes, free_bytes)
            return {}

    def op_add_volumes(self, volumes):
        with self._lock:
            self.state.add_volumes(volumes)
            return {"added": len(volumes)}

    def op_set_status(self, vid, flags):
        with self._lock:
            self.state.set_status(vid, flags)
            return self._vol_dict(self.state.query(vid))

    def op_release(self, vid):
        with self._lock:
            self.state.release(vid)
            return {}

    def op_release_pool(self, pool):
        with self._lock:
            return {"released": self.state.release_pool(pool)}

    def op_query(self, vid):
        with self._lock:
            return self._vol_dict(self.state.query(vid))

    def op_list_volumes(self, pool=None):
        with self._lock:
            return {"volumes": [self._vol_dict(v) for v in self.state.list_volumes(pool)]}

    def op_list_pools(self):
        with self._lock:
            return {"pools": [{"name": p.name, "uid": p.uid, "gid": p.gid,
                               "volumes": len(p.vids)}
                              for p in self.state.pools.values()]}

    def op_select(self, pool, requested_bytes, exclude_vids=()):
        with self._lock:
            vol = self.state.select_tape_for_migration(pool, int(requested_bytes),
                                                       exclude_vids=exclude_vids)
            return self._vol_dict(vol)

    def op_update_after_write(self, vid, bytes_written, files_written, keep_busy=False):
        with self._lock:
            vol = self.state.update_after_write(vid, bytes_written, files_written,
                                                keep_busy=keep_busy)
            return self._vol_dict(vol)

    def op_plant(self):
        models = []
        if self.plant is not None:
            for m in self.plant.models.values():
                models.append({
                    "name": m.name, "drives": m.drives, "servers": m.servers,
                    "streaming_rate_bytes_per_s": m.streaming_rate_bytes_per_s,
                    "mount_seconds": m.mount_seconds,
                    "position_seconds_per_fseq": m.position_seconds_per_fseq,
                    "volume_capacity_bytes": m.volume_capacity_bytes,
                })
        return {"models": models}

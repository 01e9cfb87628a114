"""Closed-form drive timing.

A transfer on a simulated drive costs:

    [unmount of the previous cartridge] + [mount if the target is not
    already mounted] + positioning proportional to the file-sequence
    distance + streaming at the model rate.

After a mount the head sits at fseq 1; after transferring fseq n it
sits at n+1, so consecutive appends cost no positioning.
"""

from __future__ import annotations


def mount_cost(model, mounted_vid: str | None, vid: str) -> float:
    if mounted_vid == vid:
        return 0.0
    cost = model.mount_seconds
    if mounted_vid is not None:
        cost += model.mount_seconds * model.unmount_fraction
    return cost


def job_duration(model, size_bytes: int, fseq: int,
                 mounted_vid: str | None, head_fseq: int, vid: str) -> float:
    cost = mount_cost(model, mounted_vid, vid)
    head = head_fseq if mounted_vid == vid else 1
    cost += abs(fseq - head) * model.position_seconds_per_fseq
    cost += size_bytes / model.streaming_rate_bytes_per_s
    return cost

"""Resolution of processing-pass input chains down to their root run."""

from __future__ import annotations

from typing import Callable, Optional

from runlog.domain.models import EntityRef, RefKind, ReconstructionPass
from runlog.errors import BrokenLineage, CorruptLineage, NotFound

Lookup = Callable[[EntityRef], Optional[object]]


def resolve_lineage(pass_id: int, lookup: Lookup) -> list[EntityRef]:
    """Walk a pass's input chain and return it root-last.

    The returned list starts with the pass itself and ends with the run the
    chain is rooted at. ``lookup`` maps a reference to the stored entity or
    ``None``. A store can only create acyclic chains ending in a run, but the
    resolver still defends against corrupted data: dangling references raise
    BrokenLineage, cycles and impossible input kinds raise CorruptLineage.
    """
    head = EntityRef(kind=RefKind.PASS, id=pass_id)
    entity = lookup(head)
    if entity is None:
        raise NotFound(f"pass {pass_id} does not exist")

    chain = [head]
    seen = {head}
    while True:
        if not isinstance(entity, ReconstructionPass):
            raise CorruptLineage(f"{chain[-1]} did not resolve to a pass")
        nxt = entity.input
        if nxt in seen:
            raise CorruptLineage(f"pass {pass_id}: input chain loops at {nxt}")
        seen.add(nxt)
        chain.append(nxt)
        if nxt.kind is RefKind.RUN:
            if lookup(nxt) is None:
                raise BrokenLineage(f"pass {pass_id}: root run {nxt.id} is missing")
            return chain
        if nxt.kind is not RefKind.PASS:
            raise CorruptLineage(f"pass {pass_id}: input kind {nxt.kind.value} is impossible")
        entity = lookup(nxt)
        if entity is None:
            raise BrokenLineage(f"pass {pass_id}: input pass {nxt.id} is missing")

import logging
from collections import Counter
from dataclasses import dataclass, field

from . import nodesets
from .nodesets import NodeSet
from .taxonomy import Taxonomy, leaf_cover

logger = logging.getLogger(__name__)

DEFAULT_MAX_COVERS = 200_000
BRUTE_FORCE_MAX_NODES = 20

EXHAUSTIVE = "exhaustive"
DEPTH_LIMITED = "depth-limited"


class CoverError(ValueError):
    pass


class CoverExplosionError(RuntimeError):
    pass


@dataclass(frozen=True)
class NolCover:
    members: NodeSet
    cover_id: int
    covered_leaves: NodeSet
    member_indices: tuple[int, ...] = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "member_indices", nodesets.to_indices(self.members))

    @property
    def size(self) -> int:
        return len(self.member_indices)


@dataclass(frozen=True)
class SkippedLevel:
    depth: int
    reason: str


@dataclass(frozen=True)
class CoverSpace:
    covers: tuple[NolCover, ...]
    mode: str
    taxonomy_hash: str
    skipped_levels: tuple[SkippedLevel, ...] = ()

    def __len__(self):
        return len(self.covers)

    def __iter__(self):
        return iter(self.covers)

    def by_id(self, cover_id: int) -> NolCover:
        return self.covers[cover_id]

    def find(self, members: NodeSet) -> NolCover | None:
        for cover in self.covers:
            if cover.members == members:
                return cover
        return None

    @property
    def all_leaves_id(self) -> int:
        for cover in self.covers:
            if cover.members == cover.covered_leaves:
                return cover.cover_id
        raise CoverError("Cover space does not contain the all-leaves cover")


def _sort_key(members: NodeSet):
    indices = nodesets.to_indices(members)
    return (len(indices), indices)


def make_cover_space(t: Taxonomy, member_sets, mode: str, skipped=()) -> CoverSpace:
    unique = sorted(set(member_sets), key=_sort_key)
    if not unique:
        raise CoverError("Cover space is empty")
    covers = tuple(
        NolCover(members=m, cover_id=i, covered_leaves=leaf_cover(t, m))
        for i, m in enumerate(unique)
    )
    return CoverSpace(
        covers=covers, mode=mode, taxonomy_hash=t.fingerprint, skipped_levels=tuple(skipped)
    )


def is_antichain(t: Taxonomy, s: NodeSet) -> bool:
    return all(not t.ancestors[v] & s for v in nodesets.iter_indices(s))


def is_nol_cover(t: Taxonomy, s: NodeSet) -> bool:
    if not s or s >> t.size:
        return False
    return leaf_cover(t, s) == t.leaves and is_antichain(t, s)


def reduce_overlaps(t: Taxonomy, s: NodeSet) -> NodeSet:
    kept = 0
    for v in nodesets.iter_indices(s):
        if not t.ancestors[v] & s:
            kept |= 1 << v
    return kept


def enumerate_nol_covers(
    t: Taxonomy, max_covers: int | None = DEFAULT_MAX_COVERS, fallback: bool = True
) -> CoverSpace:
    child_masks = [nodesets.from_indices(kids) for kids in t.children]
    start = nodesets.bit(t.root)
    visited = {start}
    stack = [start]
    while stack:
        current = stack.pop()
        for v in nodesets.iter_indices(current):
            if not child_masks[v]:
                continue
            candidate = reduce_overlaps(t, (current & ~(1 << v)) | child_masks[v])
            if candidate in visited:
                continue
            visited.add(candidate)
            if max_covers is not None and len(visited) > max_covers:
                if not fallback:
                    raise CoverExplosionError(
                        f"Cover enumeration exceeded max_covers={max_covers}; "
                        "use the depth-limited cover mode or raise the limit"
                    )
                logger.warning(
                    "enumerate_nol_covers: more than %s covers, falling back to depth-limited covers",
                    max_covers,
                )
                return depth_limited_covers(t)
            stack.append(candidate)

    space = make_cover_space(t, visited, EXHAUSTIVE)
    logger.debug("enumerate_nol_covers: covers=%s mode=%s", len(space), space.mode)
    return space


def depth_limited_covers(t: Taxonomy) -> CoverSpace:
    levels = []
    skipped = []
    for d in range(t.depth + 1):
        members = 0
        for v in range(t.size):
            if t.depths[v] == d or (t.is_leaf(v) and t.depths[v] < d):
                members |= 1 << v
        if not is_nol_cover(t, members):
            reason = "level completion is not a non-overlapping leaf cover"
            logger.warning("depth_limited_covers: skipping depth=%s: %s", d, reason)
            skipped.append(SkippedLevel(depth=d, reason=reason))
            continue
        levels.append(members)
    space = make_cover_space(t, levels, DEPTH_LIMITED, skipped)
    logger.debug("depth_limited_covers: covers=%s skipped=%s", len(space), len(skipped))
    return space


def brute_force_nol_covers(t: Taxonomy, max_nodes: int = BRUTE_FORCE_MAX_NODES) -> CoverSpace:
    if t.size > max_nodes:
        raise CoverError(
            f"Brute-force enumeration is limited to {max_nodes} nodes, taxonomy has {t.size}"
        )
    found = [s for s in range(1, 1 << t.size) if is_nol_cover(t, s)]
    return make_cover_space(t, found, EXHAUSTIVE)


def build_cover_space(t: Taxonomy, cover_mode: str = "auto", max_covers=DEFAULT_MAX_COVERS):
    if cover_mode == DEPTH_LIMITED:
        return depth_limited_covers(t)
    if cover_mode == EXHAUSTIVE:
        return enumerate_nol_covers(t, max_covers=max_covers, fallback=False)
    if cover_mode == "auto":
        return enumerate_nol_covers(t, max_covers=max_covers, fallback=True)
    raise CoverError(f"Unknown cover mode '{cover_mode}'")


def restrict_space(t: Taxonomy, space: CoverSpace, cover_ids) -> CoverSpace:
    return make_cover_space(t, [space.by_id(i).members for i in cover_ids], space.mode)


def cover_size_histogram(space: CoverSpace) -> dict[int, int]:
    return dict(sorted(Counter(cover.size for cover in space).items()))

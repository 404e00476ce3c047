from collections.abc import Iterable, Iterator

# bit i set means node i is a member
NodeSet = int

EMPTY: NodeSet = 0


def bit(index: int) -> NodeSet:
    return 1 << int(index)


def from_indices(indices: Iterable[int]) -> NodeSet:
    mask = 0
    for index in indices:
        if index < 0:
            raise ValueError(f"Negative node index {index}")
        mask |= 1 << int(index)
    return mask


def iter_indices(mask: NodeSet) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def to_indices(mask: NodeSet) -> tuple[int, ...]:
    return tuple(iter_indices(mask))


def size(mask: NodeSet) -> int:
    return mask.bit_count()


def contains(mask: NodeSet, index: int) -> bool:
    return bool(mask >> int(index) & 1)


def is_subset(a: NodeSet, b: NodeSet) -> bool:
    return a & ~b == 0


def lowest(mask: NodeSet) -> int:
    if not mask:
        raise ValueError("Empty node set has no lowest member")
    return (mask & -mask).bit_length() - 1

from concurrent.futures import ThreadPoolExecutor
from typing import List

from drc_voxel.utils.settings import DEFAULT_THREADS


def get_executor(threads: int = DEFAULT_THREADS) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=max(1, int(threads)), thread_name_prefix="drc")


def chunk_slices(total: int, chunk_size: int) -> List[slice]:
    """Contiguous slices covering range(total), in order."""
    chunk_size = max(1, int(chunk_size))
    return [slice(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)] or [slice(0, 0)]

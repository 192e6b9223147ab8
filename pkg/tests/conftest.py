import numpy as np
import pytest

from waygraph.environment import Environment, generate_environment


@pytest.fixture(scope="session")
def empty_env():
    return Environment((0.0, 0.0, 10.0, 10.0))


@pytest.fixture(scope="session")
def square_env():
    # unit square obstacle in the middle of a 10x10 world
    return Environment((0.0, 0.0, 10.0, 10.0), [[[4, 4], [5, 4], [5, 5], [4, 5]]])


@pytest.fixture(scope="session")
def u_env():
    # U-shaped pocket opening upward; straight line from inside to below is blocked
    walls = [
        [[4.0, 4.0], [4.2, 4.0], [4.2, 7.0], [4.0, 7.0]],
        [[5.8, 4.0], [6.0, 4.0], [6.0, 7.0], [5.8, 7.0]],
        [[4.0, 4.0], [6.0, 4.0], [6.0, 4.2], [4.0, 4.2]],
    ]
    return Environment((0.0, 0.0, 10.0, 10.0), walls)


@pytest.fixture(scope="session")
def rooms_env():
    return generate_environment(7, "rooms")


def raster_dijkstra(env, start_cell, goal_cell=None):
    """Independent 8-connected Dijkstra over ``env.free_raster`` (heapq-based).

    Returns the distance array (inf where unreachable). Used as the oracle for
    the packaged geodesic-field implementation.
    """
    import heapq
    import math

    free = env.free_raster
    ni, nj = free.shape
    dist = np.full((ni, nj), np.inf)
    if not free[start_cell]:
        return dist
    dist[start_cell] = 0.0
    pq = [(0.0, start_cell)]
    diag = env.cell_size * math.sqrt(2.0)
    while pq:
        d, (i, j) = heapq.heappop(pq)
        if d > dist[i, j]:
            continue
        if goal_cell is not None and (i, j) == goal_cell:
            return dist
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                x, y = i + di, j + dj
                if 0 <= x < ni and 0 <= y < nj and free[x, y]:
                    w = diag if di != 0 and dj != 0 else env.cell_size
                    nd = d + w
                    if nd < dist[x, y]:
                        dist[x, y] = nd
                        heapq.heappush(pq, (nd, (x, y)))
    return dist

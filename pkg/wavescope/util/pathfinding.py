# wavescope/util/pathfinding.py

import heapq  # For priority queue in A*
import logging
import math

import numpy as np

from .helpers import get_neighbors_8_directions

logger = logging.getLogger(__name__)


class Pathfinding:
    """
    Shortest paths on a boolean node grid (the connectivity graph of an
    r-interior). Implements A* with 8-neighbour moves and a Euclidean
    heuristic; ties are broken by lexicographic node order, so the returned
    path is deterministic.
    """
    def __init__(self, passable: np.ndarray):
        """
        Initializes the Pathfinding module with a node mask.

        Args:
            passable (np.ndarray): 2-D boolean array, True where a node belongs
                                   to the graph.
        """
        self.passable = np.asarray(passable, dtype=bool)
        logger.debug("Pathfinding initialized on a %s node grid (%d passable).",
                     self.passable.shape, int(self.passable.sum()))

    def is_within_bounds(self, node: tuple) -> bool:
        i, j = node
        return 0 <= i < self.passable.shape[0] and 0 <= j < self.passable.shape[1]

    def is_passable(self, node: tuple) -> bool:
        return self.is_within_bounds(node) and bool(self.passable[node])

    def find_path(self, start: tuple, end: tuple) -> list[tuple]:
        """
        Finds the shortest path between two nodes.

        Args:
            start (tuple): The (i, j) starting node.
            end (tuple): The (i, j) ending node.

        Returns:
            list[tuple]: Nodes from start to end, both included. Empty if no
                         path exists.
        """
        start, end = tuple(start), tuple(end)
        if not self.is_passable(start) or not self.is_passable(end):
            logger.debug("Pathfinding: start or end not passable: %s -> %s", start, end)
            return []

        def heuristic(a, b):
            return math.hypot(a[0] - b[0], a[1] - b[1])

        # Priority queue: stores (f_cost, node); tuple order breaks ties lexicographically
        open_list = [(heuristic(start, end), start)]
        g_cost = {start: 0.0}
        came_from = {}
        closed = set()

        while open_list:
            _, current = heapq.heappop(open_list)
            if current in closed:
                continue
            if current == end:
                path = [current]
                while current in came_from:
                    current = came_from[current]
                    path.append(current)
                return path[::-1]
            closed.add(current)

            for neighbor in get_neighbors_8_directions(current):
                if neighbor in closed or not self.is_passable(neighbor):
                    continue
                step = math.hypot(neighbor[0] - current[0], neighbor[1] - current[1])
                tentative = g_cost[current] + step
                if tentative < g_cost.get(neighbor, math.inf) - 1e-12:
                    g_cost[neighbor] = tentative
                    came_from[neighbor] = current
                    heapq.heappush(open_list, (tentative + heuristic(neighbor, end), neighbor))

        logger.debug("Pathfinding: no path found from %s to %s.", start, end)
        return []

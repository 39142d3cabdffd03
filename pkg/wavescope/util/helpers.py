# wavescope/util/helpers.py

import math

from scipy.special import gamma as gamma_function


def unit_ball_volume(dim: int) -> float:
    """Volume of the unit ball of R^dim."""
    return math.pi ** (dim / 2.0) / float(gamma_function(dim / 2.0 + 1.0))


def ball_volume(radius: float, dim: int) -> float:
    """Volume of a ball of the given radius in R^dim."""
    return unit_ball_volume(dim) * radius ** dim


def packing_constant(dim: int) -> float:
    """
    Constant c_n of the chain-length bound N <= c_n M sigma^-n.

    The balls of radius r/4 around consecutive chain centers are disjoint,
    so N * |B_{r/4}| <= |Omega| <= M rho0^n, i.e. c_n = 4^n / |B_1|.

    Args:
        dim (int): Ambient dimension n.

    Returns:
        float: The packing constant.
    """
    return 4.0 ** dim / unit_ball_volume(dim)


def get_neighbors_4_directions(position: tuple) -> list[tuple]:
    """
    Returns the 4 direct (non-diagonal) neighbors of a given grid position.

    Args:
        position (tuple): The (i, j) grid index.

    Returns:
        list[tuple]: Neighbor indices.
    """
    i, j = position
    return [(i, j + 1), (i, j - 1), (i + 1, j), (i - 1, j)]


def get_neighbors_8_directions(position: tuple) -> list[tuple]:
    """
    Returns the 8 (including diagonal) neighbors of a given grid position.

    Args:
        position (tuple): The (i, j) grid index.

    Returns:
        list[tuple]: Neighbor indices.
    """
    i, j = position
    return get_neighbors_4_directions(position) + [
        (i + 1, j + 1), (i - 1, j - 1), (i + 1, j - 1), (i - 1, j + 1)
    ]



"""Independent reference computations used by the test suite.

Nothing here calls into the solver or population code; each oracle works
from raw arrays with plain linear algebra or enumeration.
"""

import itertools

import numpy as np


def enumerate_policy_values(R: np.ndarray, K: np.ndarray, beta: float) -> np.ndarray:
    """Optimal values by brute force over every deterministic stationary policy.

    ``R[x, a]`` payoffs, ``K[x, a, :]`` next-state rows.  Each policy is
    evaluated exactly from ``(I - beta P) V = r``; the optimal value is the
    pointwise maximum over policies.
    """
    nx, na = R.shape
    best = np.full(nx, -np.inf)
    rows = np.arange(nx)
    for choice in itertools.product(range(na), repeat=nx):
        c = np.array(choice)
        V = np.linalg.solve(np.eye(nx) - beta * K[rows, c], R[rows, c])
        best = np.maximum(best, V)
    return best


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Unique stationary law of an irreducible chain from ``pi (P - I) = 0, sum pi = 1``."""
    n = P.shape[0]
    A = np.vstack([(P - np.eye(n)).T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def random_game_arrays(rng: np.random.Generator, nx: int, na: int) -> tuple:
    """Random payoffs and dense (hence irreducible) kernels."""
    R = rng.normal(size=(nx, na))
    K = rng.dirichlet(np.ones(nx), size=(nx, na))
    return R, K


def compositions(n: int, k: int) -> np.ndarray:
    """All weight vectors on ``n`` points whose entries are multiples of ``1/k``."""
    out = []
    for bars in itertools.combinations(range(k + n - 1), n - 1):
        parts = np.diff((-1,) + bars + (k + n - 1,)) - 1
        out.append(parts / k)
    return np.array(out)


def dominates_by_expectations(f: np.ndarray, g: np.ndarray, tol: float = 1e-12) -> bool:
    """``f`` dominates ``g`` iff every upper-set indicator has a larger mean under ``f``.

    On a finite chain the nondecreasing {0,1}-valued functions are exactly the
    indicators of ``{x >= x_k}``, so this enumerates all of them.
    """
    n = f.size
    for k in range(n):
        phi = (np.arange(n) >= k).astype(float)
        if phi @ f < phi @ g - tol:
            return False
    return True


_MASK64 = (1 << 64) - 1


def philox4x64_block(counter, key):
    """Ten rounds of Philox-4x64 on one 256-bit counter block."""
    c, k = list(counter), list(key)
    for r in range(10):
        if r:
            k = [(k[0] + 0x9E3779B97F4A7C15) & _MASK64, (k[1] + 0xBB67AE8584CAA73B) & _MASK64]
        p0 = 0xD2E7470EE14C6C93 * c[0]
        p1 = 0xCA5A826395121157 * c[2]
        c = [(p1 >> 64) ^ c[1] ^ k[0], p1 & _MASK64, (p0 >> 64) ^ c[3] ^ k[1], p0 & _MASK64]
    return c


def philox_uniforms(seed, step, n):
    """First ``n`` doubles from a Philox stream keyed ``(seed, 0)`` at counter ``(0, step, 0, 0)``.

    The generator advances the counter before each block and maps a 64-bit
    word to ``(w >> 11) * 2**-53``.
    """
    out, block = [], 0
    while len(out) < n:
        block += 1
        words = philox4x64_block([block, step, 0, 0], [seed, 0])
        out.extend((w >> 11) * 2.0**-53 for w in words)
    return out[:n]

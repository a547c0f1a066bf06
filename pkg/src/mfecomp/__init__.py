"""Mean field equilibria of anonymous stochastic games with complementarities.

Typical use::

    from mfecomp import security_game, run_mld

    traj, result = run_mld(security_game())
    result.is_equilibrium
"""

__version__ = "0.1.0"

from .lattice import *  # noqa: E402,F401,F403
from .model import *  # noqa: E402,F401,F403
from .solver import *  # noqa: E402,F401,F403
from .population import *  # noqa: E402,F401,F403
from .dynamics import *  # noqa: E402,F401,F403
from .validate import *  # noqa: E402,F401,F403
from .simulate import *  # noqa: E402,F401,F403
from .config import ConfigError, load_config, parse_config  # noqa: E402,F401

from . import lattice, model, solver, population, dynamics, validate, simulate  # noqa: E402

__all__ = (
    ["__version__", "ConfigError", "load_config", "parse_config"]
    + lattice.__all__ + model.__all__ + solver.__all__ + population.__all__
    + dynamics.__all__ + validate.__all__ + simulate.__all__
)

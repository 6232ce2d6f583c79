"""smashlab: a numerical laboratory for set addition on grids.

Compute the sum of two bounded open sets as the stabilized domain of a
divisible sandpile, verify the defining requirements of the sum as
executable checks, test the quadrature-domain inequality against families of
superharmonic functions, and play the smash game end to end with its
second-moment ledger.
"""

from .errors import (
    BoundaryContactError,
    ConfigError,
    GridMismatchError,
    GridTooCoarseError,
    NonConvergenceError,
    OutOfBoxError,
    SmashlabError,
)
from .geometry import (
    Ball,
    Box,
    Difference,
    GridSpec,
    Intersection,
    IsometryElem,
    Mask,
    Translate,
    Union,
    apply_isometry_about,
    cookie_cutter,
    cubic_isometries,
    deflate,
    diameter_growth_bound,
    essentially_contained,
    essentially_equal,
    inflate,
    measure,
    parse_shape,
    rasterize,
    working_grid,
)
from .quadrature import (
    MomentLedger,
    TestFunction,
    cubic_average,
    estimate_cs,
    integrate,
    make_test_function,
    quadrature_slack,
    second_moment,
    slack_tolerance,
)
from .sandpile import (
    DensityField,
    Odometer,
    StabilizeParams,
    SumResult,
    abelian_check,
    field_from_shapes,
    indicator,
    smash_sum,
    smash_sum_of_masks,
    topple_sweep,
)
from .smashgame import (
    GameResult,
    GameState,
    StrategyParams,
    cookie_smash,
    move1_split_to_balls,
    move2_shrink,
    move3_smash,
    move4_deposit,
    new_game,
    run_strategy,
)

__version__ = "0.1.0"

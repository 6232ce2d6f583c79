"""The solitaire smash game: moves, ledgers, and the winning strategy.

State is a table set plus a list of hand sets on one grid, with a test
function ``s`` and a difficulty ``eps``.  Moves:

1. split a hand set into disjoint rasterized balls (Vitali-style ladder of
   radii ``R (3/4)^k`` down to single cells, so the split residual is zero),
2. shrink the table by one erosion step when a mass budget allows it,
3. smash a hand set with a stamp ``C`` inside the table, replacing it by an
   equal-measure set outside the stamp,
4. deposit the part of a hand set lying outside the table onto the table.

Moves 3 and 4 conserve mask measure exactly: the smash output is selected
cell-count-exactly from the stabilized field outside the stamp (occupied
cells first, then partially filled cells ranked by the per-cell gain
``|y - o|^2 + |H| R^2 [y outside table]``), and deposits are disjoint unions.
The ranking makes the second-moment gain of every smash at least the
orbit-average value, which is what the per-move ledger inequality
``d_sigma + |H| R^2 nu >= (2/(d+2)) R^2 mu`` requires.

The strategy plays rounds with ``R_n = min(delta / 2N, eps / (6 C_s
lambda(B) sqrt(n)))`` where ``N`` is the diameter-growth constant and ``C_s =
2 N^3 c_s`` comes from the declared third-derivative bound of ``s``; it
deposits, splits every hand set into balls below ``R_n``, and cookie-smashes
each ball against the symmetrized stamp of the current table.  Mass can only
leave through explicit budgets, the ``s``-integral can only grow through
smashes (bounded by ``C_s R^3 mu`` each), and the total second moment is a
Lyapunov function forcing deposits, so the hand drains below ``eps``.
"""

from __future__ import annotations

import math
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import BoundaryContactError, ConfigError, GridTooCoarseError
from .geometry import (
    GridSpec,
    Mask,
    _ball_offsets_window,
    _transform_window,
    boundary_cell_count,
    cubic_isometries,
    cookie_cutter,
    diameter_growth_bound,
    rasterize,
    working_grid,
)
from .quadrature import MomentLedger, TestFunction, estimate_cs, second_moment, integrate
from .sandpile import StabilizeParams, smash_sum_of_masks, stabilize_array

__all__ = [
    "GameState",
    "MoveRecord",
    "RoundRecord",
    "StrategyParams",
    "GameResult",
    "new_game",
    "move1_split_to_balls",
    "move2_shrink",
    "move3_smash",
    "move4_deposit",
    "cookie_smash",
    "run_strategy",
]

_SUPPORT_FLOOR = 1e-12
_SMASH_PARAMS = StabilizeParams(order="forward", kappa="auto")


@dataclass
class MoveRecord:
    """One move's ledger deltas; smash fields are NaN for bookkeeping moves."""

    kind: str
    round_n: int
    d_mass_hand: float = 0.0
    d_s_integral: float = 0.0
    d_sigma: float = 0.0
    center: tuple | None = None
    r: float = math.nan
    R: float = math.nan
    mu: float = math.nan
    nu: float = math.nan
    moment_lhs: float = math.nan
    moment_rhs: float = math.nan
    taylor_rhs: float = math.nan


@dataclass
class RoundRecord:
    n: int
    R: float
    hand_mass_start: float
    ball_mass: float
    n_balls: int
    n_singles: int
    d_sigma_smash: float
    d_sigma_shrink: float
    d_mass_deposit: float
    d_s_integral: float
    round_moment_lhs: float
    round_moment_rhs: float
    hand_mass_end: float
    mass_end: float
    s_integral_end: float
    sigma_end: float
    min_smash_margin: float


@dataclass
class GameState:
    """Table, hands, function, difficulty, and running ledgers."""

    grid: GridSpec
    table: Mask
    hands: list
    s: TestFunction
    eps: float
    delta: float
    origin: np.ndarray
    ledger: MomentLedger
    initial_mass: float
    initial_s_integral: float
    round_n: int = 0
    shrink_count: int = 0
    history: list = field(default_factory=list)

    @property
    def hand_mass(self) -> float:
        return sum(m.measure for m in self.hands)

    @property
    def won(self) -> bool:
        return self.hand_mass < self.eps

    @property
    def lost(self) -> bool:
        return (
            self.ledger.mass < self.initial_mass - self.eps
            or self.ledger.s_integral > self.initial_s_integral + self.eps
        )

    def current_sum(self, params: StabilizeParams = _SMASH_PARAMS) -> Mask:
        """Sum of the table and every hand set, recomputed (diagnostic)."""
        w = self.table.cells.astype(float)
        for m in self.hands:
            w = w + m.cells.astype(float)
        f = w.copy()
        stabilize_array(f, params)
        return Mask(self.grid, (f >= 1.0 - params.full) | (w > 0))


def new_game(table: Mask, hands, s: TestFunction, eps: float, delta: float) -> GameState:
    """Set up ledgers for a game on an existing grid."""
    grid = table.grid
    origin = (np.asarray(grid.lo) + grid.hi) / 2.0
    hands = list(hands)
    mass = table.measure + sum(m.measure for m in hands)
    s_int = integrate(s, table) + sum(integrate(s, m) for m in hands)
    sigma = second_moment(table, origin) + sum(second_moment(m, origin) for m in hands)
    return GameState(
        grid=grid,
        table=table,
        hands=hands,
        s=s,
        eps=float(eps),
        delta=float(delta),
        origin=origin,
        ledger=MomentLedger(mass=mass, s_integral=s_int, sigma=sigma),
        initial_mass=mass,
        initial_s_integral=s_int,
    )


# ---------------------------------------------------------------------------
# Split (move 1)


def _detect_ball(grid: GridSpec, nd_idx: np.ndarray):
    """If the cell set is exactly a rasterized ball about a cell center,
    return ``(center_index, radius)``; else None."""
    centers = grid.centers_of(nd_idx)
    mean = centers.mean(axis=0)
    kc = np.rint((mean - np.asarray(grid.lo)) / grid.h - 0.5).astype(int)
    if np.any(kc < 0) or np.any(kc >= np.asarray(grid.shape)):
        return None
    dmax = float(np.max(np.linalg.norm(centers - grid.centers_of(kc[None, :])[0], axis=1)))
    # stay below the next achievable lattice distance (gap >= h/(2 dmax/h))
    r_eq = dmax + 1e-7 * grid.h
    win = _ball_offsets_window(grid.d, r_eq / grid.h)
    w = (win.shape[0] - 1) // 2
    if np.any(kc - w < 0) or np.any(kc + w >= np.asarray(grid.shape)):
        return None
    if int(win.sum()) != len(nd_idx):
        return None
    off = nd_idx - kc + w
    if np.any(off < 0) or np.any(off >= win.shape[0]):
        return None
    if not win[tuple(off.T)].all():
        return None
    return tuple(int(v) for v in kc), r_eq


def _split_window(
    win: np.ndarray,
    win_origin: np.ndarray,
    grid: GridSpec,
    R: float,
    allow_single_cells: bool,
    max_passes: int = 8,
):
    """Greedy ball packing of a boolean window.

    Rungs descend the ``R (3/4)^k`` ladder to ``2h``; remaining cells become
    single-cell balls when allowed.  Returns ``(balls, leftover_nd)`` with
    balls as ``(center_global, r, nd_cells_global)`` in placement order.
    """
    h = grid.h
    d = grid.d
    balls = []
    remainder = win.copy()
    rungs = []
    k = 1
    while True:
        r = R * 0.75**k
        if r < 2 * h:
            break
        rungs.append(r)
        k += 1
    for r in rungs:
        rcells = r / h
        bw = _ball_offsets_window(d, rcells)
        w = (bw.shape[0] - 1) // 2
        stride = int(math.ceil(2 * r / h))
        for _ in range(max_passes):
            if not remainder.any():
                break
            padded = np.pad(remainder, 1, constant_values=False)
            dist = ndimage.distance_transform_edt(padded)
            core = tuple(slice(1, -1) for _ in range(d))
            admissible = dist[core] >= rcells - 1e-9
            adm_idx = np.argwhere(admissible)
            if len(adm_idx) == 0:
                break
            phase = adm_idx[0] % stride
            sel = adm_idx[np.all(adm_idx % stride == phase[None, :], axis=1)]
            if len(sel) == 0:
                sel = adm_idx[:1]
            for c in sel:
                sl = tuple(slice(int(ci - w), int(ci + w + 1)) for ci in c)
                cells_local = np.argwhere(bw) + (c - w)
                balls.append(
                    (
                        tuple(int(v) for v in (c + win_origin)),
                        r,
                        cells_local + win_origin,
                    )
                )
                remainder[sl] &= ~bw
    leftover = np.argwhere(remainder)
    if allow_single_cells and len(leftover):
        for c in leftover:
            balls.append((tuple(int(v) for v in (c + win_origin)), 0.5 * h, (c + win_origin)[None, :]))
        leftover = np.empty((0, d), dtype=int)
    return balls, leftover


def _split_cells_to_balls(grid: GridSpec, nd_idx: np.ndarray, R: float, allow_single_cells=True):
    """Split an arbitrary cell set into disjoint balls, per connected
    component; a component that already is a ball of radius below ``R`` is
    kept whole."""
    balls = []
    leftovers = []
    if len(nd_idx) == 0:
        return balls, np.empty((0, grid.d), dtype=int)
    lo = nd_idx.min(axis=0)
    hi = nd_idx.max(axis=0)
    win = np.zeros(tuple(hi - lo + 1), dtype=bool)
    win[tuple((nd_idx - lo).T)] = True
    labels, ncomp = ndimage.label(win)
    for comp in range(1, ncomp + 1):
        comp_nd = np.argwhere(labels == comp)
        det = _detect_ball(grid, comp_nd + lo)
        if det is not None and det[1] < R:
            balls.append((det[0], det[1], comp_nd + lo))
            continue
        clo = comp_nd.min(axis=0)
        chi = comp_nd.max(axis=0)
        cwin = np.zeros(tuple(chi - clo + 1), dtype=bool)
        cwin[tuple((comp_nd - clo).T)] = True
        got, left = _split_window(cwin, lo + clo, grid, R, allow_single_cells)
        balls.extend(got)
        if len(left):
            leftovers.append(left + (lo + clo))
    leftover = np.concatenate(leftovers) if leftovers else np.empty((0, grid.d), dtype=int)
    return balls, leftover


def move1_split_to_balls(
    state: GameState, hand_index: int, R: float, eta: float, allow_single_cells: bool = True
) -> GameState:
    """Replace hand set ``hand_index`` by disjoint rasterized balls of radius
    below ``R`` contained in it, losing less than ``eta`` mass.

    With single-cell balls allowed (default) the residual is exactly zero.
    Otherwise the ladder stops at radius ``2h`` and an unreachable ``eta``
    raises :class:`GridTooCoarseError`.
    """
    if eta <= 0:
        raise ConfigError("split residual budget must be positive")
    if R <= 2 * state.grid.h:
        raise ConfigError("split needs R > 2h")
    hand = state.hands[hand_index]
    balls, leftover = _split_cells_to_balls(state.grid, hand.indices(), R, allow_single_cells)
    lost_cells = len(leftover)
    lost = lost_cells * state.grid.cell_volume
    if lost >= eta:
        raise GridTooCoarseError(
            f"grid too coarse for split residual {eta:.3g} (leftover {lost:.3g})"
        )
    ball_masks = []
    for _, _, cells in balls:
        arr = np.zeros(state.grid.shape, dtype=bool)
        arr[tuple(cells.T)] = True
        ball_masks.append(Mask(state.grid, arr))
    ds = dsig = 0.0
    if lost_cells:
        arr = np.zeros(state.grid.shape, dtype=bool)
        arr[tuple(leftover.T)] = True
        lost_mask = Mask(state.grid, arr)
        ds = -integrate(state.s, lost_mask)
        dsig = -second_moment(lost_mask, state.origin)
    state.hands[hand_index : hand_index + 1] = ball_masks
    state.ledger.mass -= lost
    state.ledger.s_integral += ds
    state.ledger.sigma += dsig
    state.history.append(
        MoveRecord("split", state.round_n, d_mass_hand=-lost, d_s_integral=ds, d_sigma=dsig, R=R)
    )
    return state


# ---------------------------------------------------------------------------
# Shrink (move 2)


def move2_shrink(state: GameState, budget: float) -> GameState:
    """Erode the table by one cell layer if the measure loss stays below the
    budget; otherwise leave it unchanged (a zero shrink is always legal)."""
    if budget <= state.grid.cell_volume:
        state.shrink_count += 1
        state.history.append(MoveRecord("shrink", state.round_n))
        return state
    est = boundary_cell_count(state.table) * state.grid.cell_volume
    applied = False
    if est < budget and state.table.count:
        from .geometry import deflate

        shrunk = deflate(state.table, state.grid.h)
        removed = state.table.difference(shrunk)
        loss = removed.measure
        if 0 < loss < budget:
            state.ledger.mass -= loss
            ds = -integrate(state.s, removed)
            dsig = -second_moment(removed, state.origin)
            state.ledger.s_integral += ds
            state.ledger.sigma += dsig
            state.table = shrunk
            state.history.append(
                MoveRecord("shrink", state.round_n, d_mass_hand=0.0, d_s_integral=ds, d_sigma=dsig)
            )
            applied = True
    if not applied:
        state.history.append(MoveRecord("shrink", state.round_n))
    state.shrink_count += 1
    return state


# ---------------------------------------------------------------------------
# Smash (move 3) and deposit (move 4)


def _bcells_window(win: np.ndarray) -> int:
    if not win.any():
        return 0
    interior = np.ones_like(win)
    for ax in range(win.ndim):
        lo = np.roll(win, 1, axis=ax)
        hi = np.roll(win, -1, axis=ax)
        sl = [slice(None)] * win.ndim
        sl[ax] = 0
        lo[tuple(sl)] = False
        sl[ax] = -1
        hi[tuple(sl)] = False
        interior &= lo & hi
    return int(np.count_nonzero(win & ~interior))


def _select_exact(field_win, stamp_win, n_b, score_win, tol_full):
    """Pick exactly ``n_b`` cells outside the stamp from the stabilized
    field: occupied cells first, then partial cells by descending score."""
    outside = ~stamp_win & (field_win > _SUPPORT_FLOOR)
    full = outside & (field_win >= 1.0 - tol_full)
    nfull = int(np.count_nonzero(full))
    sel = np.zeros_like(stamp_win)
    if nfull >= n_b:
        idx = np.argwhere(full)
        flat = np.ravel_multi_index(idx.T, full.shape)
        order = np.lexsort((flat, -score_win[tuple(idx.T)]))
        keep = idx[order[:n_b]]
        sel[tuple(keep.T)] = True
        return sel
    sel |= full
    need = n_b - nfull
    partial = outside & ~full
    idx = np.argwhere(partial)
    if len(idx) < need:
        # claim the nearest unoccupied ring when residual rounding starves
        # the partial band (at most a handful of cells)
        grown = ndimage.binary_dilation(outside | stamp_win) & ~stamp_win & ~outside
        extra = np.argwhere(grown)
        idx = np.concatenate([idx, extra]) if len(idx) else extra
    if len(idx) < need:
        raise BoundaryContactError("smash output cannot be represented in the window")
    flat = np.ravel_multi_index(idx.T, partial.shape)
    order = np.lexsort((flat, -field_win[tuple(idx.T)], -score_win[tuple(idx.T)]))
    keep = idx[order[:need]]
    sel[tuple(keep.T)] = True
    return sel


def _exact_smash_masks(
    grid: GridSpec,
    hand: Mask,
    stamp: Mask,
    origin: np.ndarray,
    table: Mask | None,
    R: float | None,
    params: StabilizeParams = _SMASH_PARAMS,
) -> Mask:
    """Global (unwindowed) smash of a hand set with a stamp; returns the
    equal-measure replacement set outside the stamp."""
    w = hand.cells.astype(float) + stamp.cells.astype(float)
    f = w.copy()
    stabilize_array(f, params)
    centers = grid.all_centers()
    dist2 = np.sum((centers - origin) ** 2, axis=1).reshape(grid.shape)
    score = dist2.copy()
    if table is not None and R is not None:
        score += len(cubic_isometries(grid.d)) * R * R * (~table.cells)
    sel = _select_exact(f, stamp.cells, hand.count, score, params.full)
    return Mask(grid, sel)


def move3_smash(state: GameState, hand_index: int, stamp: Mask) -> GameState:
    """Press hand set ``hand_index`` with a stamp inside the table: the hand
    set becomes an equal-measure set outside the stamp."""
    if not stamp.is_subset(state.table):
        raise ConfigError("smash stamp must lie inside the table")
    hand = state.hands[hand_index]
    if stamp.count == 0 or hand.count == 0:
        state.history.append(MoveRecord("smash", state.round_n))
        return state
    new_hand = _exact_smash_masks(state.grid, hand, stamp, state.origin, state.table, None)
    ds = integrate(state.s, new_hand) - integrate(state.s, hand)
    dsig = second_moment(new_hand, state.origin) - second_moment(hand, state.origin)
    state.hands[hand_index] = new_hand
    state.ledger.s_integral += ds
    state.ledger.sigma += dsig
    state.history.append(
        MoveRecord("smash", state.round_n, d_s_integral=ds, d_sigma=dsig, mu=hand.measure)
    )
    return state


def move4_deposit(state: GameState, hand_index: int, verify: bool = False) -> GameState:
    """Move the part of a hand set outside the table onto the table.

    The deposited cells are disjoint from the table, so the new table is the
    plain union (equal to the stabilized sum of the indicator weights, which
    ``verify=True`` asserts)."""
    hand = state.hands[hand_index]
    dep = hand.difference(state.table)
    if dep.count:
        if verify:
            res = smash_sum_of_masks(state.table, dep, _SMASH_PARAMS)
            union = state.table.union(dep)
            if not np.array_equal(res.domain.cells, union.cells):
                raise BoundaryContactError("disjoint deposit did not reduce to a union")
        state.hands[hand_index] = hand.intersection(state.table)
        state.table = state.table.union(dep)
    state.history.append(
        MoveRecord("deposit", state.round_n, d_mass_hand=-dep.measure)
    )
    return state


def cookie_smash(state: GameState, hand_index: int, R: float, params=None) -> GameState:
    """Composite move on a ball-shaped hand set: smash it with the
    symmetrized stamp of the table about the ball center, then deposit the
    part landing outside the table.

    Records the second-moment gain ledger row for the move.
    """
    strat = params or StrategyParams.for_game(state)
    hand = state.hands[hand_index]
    det = _detect_ball(state.grid, hand.indices())
    if det is None:
        raise ConfigError("cookie smash needs a ball-shaped hand set")
    center_idx, r = det
    if not (r < R):
        raise ConfigError("cookie smash needs the ball radius below R")
    if R >= state.delta / (2 * strat.n_d) + 1e-12:
        raise ConfigError("cookie smash needs R <= delta / (2 N)")
    x = state.grid.centers_of(np.array([center_idx]))[0]
    stamp = cookie_cutter(tuple(x.tolist()), R, state.table)
    table_before = state.table
    new_hand = _exact_smash_masks(state.grid, hand, stamp, state.origin, table_before, R)
    mu = hand.measure
    nu = new_hand.difference(table_before).measure
    dsig = second_moment(new_hand, state.origin) - second_moment(hand, state.origin)
    ds = integrate(state.s, new_hand) - integrate(state.s, hand)
    d = state.grid.d
    group = len(cubic_isometries(d))
    sup_s = float(np.max(np.abs(state.s(new_hand.true_centers())))) if new_hand.count else 0.0
    taylor_tol = sup_s * (
        _bcells_window(new_hand.cells) + _bcells_window(hand.cells)
    ) * state.grid.cell_volume
    rec = MoveRecord(
        "cookie",
        state.round_n,
        d_s_integral=ds,
        d_sigma=dsig,
        center=tuple(x.tolist()),
        r=r,
        R=R,
        mu=mu,
        nu=nu,
        moment_lhs=dsig + group * R * R * nu,
        moment_rhs=(2.0 / (d + 2)) * R * R * mu,
        taylor_rhs=strat.big_cs * R**3 * mu + taylor_tol,
    )
    state.hands[hand_index] = new_hand
    state.ledger.s_integral += ds
    state.ledger.sigma += dsig
    state.history.append(rec)
    move4_deposit(state, hand_index)
    return state


# ---------------------------------------------------------------------------
# Strategy


@dataclass(frozen=True)
class StrategyParams:
    """Constants driving the round schedule and budgets."""

    d: int
    n_d: float
    c_s: float
    big_cs: float
    r_cap: float
    eps: float
    delta: float
    lam_b: float
    rad_sum: float
    sigma_b: float
    allow_single_cells: bool = True
    grid_floor_cells: float = 4.0
    moment_slack: float = 0.9
    smash_params: StabilizeParams = _SMASH_PARAMS

    @classmethod
    def for_game(cls, state: GameState, c_s: float | None = None) -> "StrategyParams":
        d = state.grid.d
        n_d = diameter_growth_bound(d)
        if c_s is None:
            from .geometry import full_mask

            c_s = estimate_cs(state.s, full_mask(state.grid))
        big_cs = 2.0 * n_d**3 * c_s
        lam_b = state.hand_mass
        rad_sum = _rad_bound(state)
        sigma_b = state.initial_mass * rad_sum**2
        return cls(
            d=d,
            n_d=n_d,
            c_s=c_s,
            big_cs=big_cs,
            r_cap=state.delta / (2 * n_d),
            eps=state.eps,
            delta=state.delta,
            lam_b=lam_b,
            rad_sum=rad_sum,
            sigma_b=sigma_b,
        )

    def radius_for_round(self, n: int) -> float:
        if self.big_cs > 0 and self.lam_b > 0:
            branch = self.eps / (6.0 * self.big_cs * self.lam_b * math.sqrt(n))
        else:
            branch = math.inf
        return min(self.r_cap, branch)

    def round_bound(self, group_order: int) -> float:
        """Round count above which the square-summed radii must have won."""
        target = (self.d + 2) * (self.sigma_b + group_order * self.delta * self.lam_b) / self.eps
        total, n = 0.0, 0
        while total <= target and n < 10_000_000:
            n += 1
            total += self.radius_for_round(n) ** 2
        return n

    def validate_budgets(self):
        """The cubes of the radii must fit the s-integral budget."""
        if self.big_cs <= 0 or self.lam_b <= 0:
            return
        budget = self.eps / (2.0 * self.big_cs * self.lam_b)
        total = 0.0
        n = 1
        while n <= 100_000:
            rn = self.radius_for_round(n)
            total += rn**3
            if rn < self.r_cap:
                # closed tail bound for the n^{-3/2} series
                coef = self.eps / (6.0 * self.big_cs * self.lam_b)
                total += coef**3 * 2.0 / math.sqrt(n)
                break
            n += 1
        if total >= budget:
            raise ConfigError(
                f"radius schedule violates the s-integral budget ({total:.3g} >= {budget:.3g})"
            )


def _rad_bound(state: GameState) -> float:
    """Upper bound for the circumradius of the final sum about the origin."""
    pts = []
    for m in (state.table, *state.hands):
        if m.count:
            idx = m.indices()
            lo = state.grid.centers_of(idx.min(axis=0)[None, :])[0]
            hi = state.grid.centers_of(idx.max(axis=0)[None, :])[0]
            pts.append(max(np.linalg.norm(lo - state.origin), np.linalg.norm(hi - state.origin)))
    r0 = max(pts) * math.sqrt(state.grid.d) if pts else 1.0
    return 2.0 ** (1.0 / state.grid.d) * r0 + 4 * state.grid.h


@dataclass
class GameResult:
    status: str
    rounds: int
    table: Mask
    final_hand_mass: float
    mass_loss: float
    s_increase: float
    round_records: list
    smash_columns: dict
    params: dict
    runtime_s: float


class _Engine:
    """Array-level game loop with a per-window stabilization cache."""

    def __init__(self, state: GameState, strat: StrategyParams):
        self.state = state
        self.strat = strat
        grid = state.grid
        self.grid = grid
        self.d = grid.d
        self.h = grid.h
        self.hd = grid.cell_volume
        self.group = len(cubic_isometries(self.d))
        self.table = state.table.cells.copy()
        centers = grid.all_centers()
        self.dist2 = np.sum((centers - state.origin) ** 2, axis=1).reshape(grid.shape)
        s_vals = state.s(centers).reshape(grid.shape)
        self.s_shift = 0.0
        smin = float(s_vals.min())
        if smin < 0:
            self.s_shift = -smin
            s_vals = s_vals + self.s_shift
        self.s_grid = s_vals
        self.pieces = [m.indices() for m in state.hands]
        self.cache = OrderedDict()
        self.cache_cap = 512
        self.columns = {
            k: []
            for k in ("round", "R", "r", "mu", "nu", "d_sigma", "d_s", "moment_lhs", "moment_rhs", "taylor_rhs")
        }
        # ledgers recomputed on the shifted function
        led = state.ledger
        led.s_integral = self._s_sum_idx_all()
        state.initial_s_integral = led.s_integral

    # -- array helpers

    def _s_sum_idx_all(self):
        total = float(self.s_grid[self.table].sum())
        for p in self.pieces:
            total += float(self.s_grid[tuple(p.T)].sum())
        return total * self.hd

    def hand_mass(self):
        return sum(len(p) for p in self.pieces) * self.hd

    def deposit_all(self):
        """Move every hand cell outside the table onto the table."""
        moved = 0
        new_pieces = []
        for p in self.pieces:
            if len(p) == 0:
                continue
            inside = self.table[tuple(p.T)]
            out = p[~inside]
            if len(out):
                self.table[tuple(out.T)] = True
                moved += len(out)
            keep = p[inside]
            if len(keep):
                new_pieces.append(keep)
        self.pieces = new_pieces
        return moved * self.hd

    def shrink(self, n: int, R: float):
        led = self.state.ledger
        m = self.hand_mass()
        budget = 0.5 ** (self.state.shrink_count + 2) * min(
            self.strat.eps, R * R * m / ((self.d + 2) * self.strat.rad_sum**2)
        )
        self.state.shrink_count += 1
        if budget <= self.hd:
            return 0.0
        est = _bcells_window(self.table) * self.hd
        if est >= budget:
            return 0.0
        padded = np.pad(self.table, 1, constant_values=False)
        dist = ndimage.distance_transform_edt(padded)
        core = tuple(slice(1, -1) for _ in range(self.d))
        shrunk = dist[core] * self.h > self.h
        removed = self.table & ~shrunk
        loss = int(removed.sum()) * self.hd
        if not 0 < loss < budget:
            return 0.0
        dsig = -float(self.dist2[removed].sum()) * self.hd
        led.mass -= loss
        led.s_integral -= float(self.s_grid[removed].sum()) * self.hd
        led.sigma += dsig
        self.table = shrunk
        return dsig

    def smash_ball(self, center_idx, r: float, R: float):
        """Cookie smash of one ball against the current table; returns the
        retained piece (cells kept in hand) and this move's ledger deltas."""
        grid = self.grid
        d = self.d
        h = self.h
        kx = np.asarray(center_idx)
        reach = (R**d + max(r, h) ** d) ** (1.0 / d)
        hw = int(math.ceil(reach / h)) + 4
        lo = kx - hw
        hi = kx + hw + 1
        if np.any(lo < 0) or np.any(hi > np.asarray(grid.shape)):
            raise BoundaryContactError("smash window escapes the box; enlarge the grid")
        win = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
        table_win = self.table[win]
        cloc = kx - lo

        # stamp: symmetrized table about x, cut to the R-ball
        bw = _ball_offsets_window(d, R / h)
        wR = (bw.shape[0] - 1) // 2
        ssl = tuple(slice(int(c - wR), int(c + wR + 1)) for c in cloc)
        tcrop = table_win[ssl]
        if tcrop.all():
            stamp_core = bw
        else:
            stamp_core = bw & tcrop
            for u in cubic_isometries(d):
                if u.is_identity:
                    continue
                stamp_core &= _transform_window(tcrop, u)
                if not stamp_core.any():
                    break
        stamp_win = np.zeros(table_win.shape, dtype=bool)
        stamp_win[ssl] = stamp_core

        # ball cells in the window
        bsmall = _ball_offsets_window(d, r / h)
        wr = (bsmall.shape[0] - 1) // 2
        bsl = tuple(slice(int(c - wr), int(c + wr + 1)) for c in cloc)
        n_b = int(bsmall.sum())

        key = (table_win.shape, tuple(cloc.tolist()), round(r / h, 9), round(R / h, 9), stamp_win.tobytes())
        cached = self.cache.get(key)
        if cached is None:
            f = np.zeros(table_win.shape)
            f[stamp_win] += 1.0
            f[bsl] += bsmall
            stabilize_array(f, self.strat.smash_params)
            if len(self.cache) >= self.cache_cap:
                self.cache.popitem(last=False)
            self.cache[key] = f
            cached = f
        else:
            self.cache.move_to_end(key)
        fwin = cached

        score = self.dist2[win] + (self.group * R * R) * (~table_win)
        sel = _select_exact(fwin, stamp_win, n_b, score, self.strat.smash_params.full)

        sel_nd = np.argwhere(sel) + lo
        ball_nd = np.argwhere(bsmall) + (kx - wr)
        dsig = (
            float(self.dist2[tuple(sel_nd.T)].sum()) - float(self.dist2[tuple(ball_nd.T)].sum())
        ) * self.hd
        ds = (
            float(self.s_grid[tuple(sel_nd.T)].sum()) - float(self.s_grid[tuple(ball_nd.T)].sum())
        ) * self.hd
        inside = self.table[tuple(sel_nd.T)]
        dep = sel_nd[~inside]
        nu = len(dep) * self.hd
        mu = n_b * self.hd
        if len(dep):
            self.table[tuple(dep.T)] = True
        retained = sel_nd[inside]

        led = self.state.ledger
        led.s_integral += ds
        led.sigma += dsig

        sup_s = float(np.max(self.s_grid[win])) if sel.any() else 0.0
        taylor_rhs = self.strat.big_cs * R**3 * mu + sup_s * (
            _bcells_window(sel) + n_b
        ) * self.hd
        cols = self.columns
        cols["round"].append(self.state.round_n)
        cols["R"].append(R)
        cols["r"].append(r)
        cols["mu"].append(mu)
        cols["nu"].append(nu)
        cols["d_sigma"].append(dsig)
        cols["d_s"].append(ds)
        cols["moment_lhs"].append(dsig + self.group * R * R * nu)
        cols["moment_rhs"].append((2.0 / (d + 2)) * R * R * mu)
        cols["taylor_rhs"].append(taylor_rhs)
        return retained, dsig, ds, nu

    def coalesce(self, pieces):
        """Regroup mutually disjoint pieces into few hand sets (layers)."""
        layers = []
        arrays = []
        for p in pieces:
            if len(p) == 0:
                continue
            placed = False
            for arr, idx_list in layers:
                if not arr[tuple(p.T)].any():
                    arr[tuple(p.T)] = True
                    idx_list.append(p)
                    placed = True
                    break
            if not placed:
                arr = np.zeros(self.grid.shape, dtype=bool)
                arr[tuple(p.T)] = True
                layers.append((arr, [p]))
        return [np.argwhere(arr) for arr, _ in layers]


def run_strategy(
    a_shape,
    b_shape,
    s: TestFunction,
    eps: float,
    delta: float | None = None,
    grid: GridSpec | None = None,
    h: float = 1 / 64,
    c_s: float | None = None,
    max_rounds: int = 200_000,
    on_round=None,
    snapshot_dir=None,
) -> GameResult:
    """Play the full strategy for table ``A`` and hand ``B``; returns the
    result with per-round and per-smash ledgers.

    Raises :class:`GridTooCoarseError` when the round radius falls below four
    cells before the game is won ("refine grid or raise eps").
    """
    t0 = time.time()
    if delta is None:
        tmp = working_grid([a_shape, b_shape], h if grid is None else grid.h)
        c = (np.asarray(tmp.lo) + tmp.hi) / 2
        lo, hi = a_shape.bbox()
        lob, hib = b_shape.bbox()
        corners = [lo, hi, lob, hib]
        delta = 0.5 * max(float(np.linalg.norm(np.asarray(p) - c)) for p in corners)
    if grid is None:
        n_d = diameter_growth_bound(a_shape.dim)
        grid = working_grid(
            [a_shape, b_shape], h, extra=2 ** (1.0 / a_shape.dim) * delta / (2 * n_d) + 8 * h
        )
    table = rasterize(a_shape, grid)
    hand = rasterize(b_shape, grid)
    state = new_game(table, [hand], s, eps, delta)
    for p in s.singularities:
        gap = _pole_box_distance(grid, p)
        if gap < delta:
            raise ConfigError(
                f"pole {p} sits {gap:.3g} from the working region; needs at least delta={delta:.3g}"
            )
    strat = StrategyParams.for_game(state, c_s=c_s)
    strat.validate_budgets()
    engine = _Engine(state, strat)

    def finish(status):
        state.table = Mask(grid, engine.table.copy())
        state.hands = [
            Mask(grid, _cells_to_arr(grid, p)) for p in engine.pieces if len(p)
        ]
        cols = {k: np.asarray(v) for k, v in engine.columns.items()}
        return GameResult(
            status=status,
            rounds=state.round_n,
            table=state.table,
            final_hand_mass=engine.hand_mass(),
            mass_loss=state.initial_mass - state.ledger.mass,
            s_increase=state.ledger.s_integral - state.initial_s_integral,
            round_records=state.history,
            smash_columns=cols,
            params={
                "eps": eps,
                "delta": delta,
                "c_s": strat.c_s,
                "C_s": strat.big_cs,
                "N_d": strat.n_d,
                "r_cap": strat.r_cap,
                "lambda_b": strat.lam_b,
                "sigma_b": strat.sigma_b,
                "rad_sum_bound": strat.rad_sum,
                "s_shift": engine.s_shift,
                "group_order": engine.group,
                "h": grid.h,
            },
            runtime_s=time.time() - t0,
        )

    if engine.hand_mass() < eps:
        return finish("WON")

    history = state.history
    state.history = []  # round records only; per-smash data lives in columns
    while state.round_n < max_rounds:
        n = state.round_n + 1
        state.round_n = n
        dep0 = engine.deposit_all()
        m_start = engine.hand_mass()
        if m_start < eps:
            state.history = history + state.history
            return finish("WON")
        R = strat.radius_for_round(n)
        if R < strat.grid_floor_cells * grid.h:
            raise GridTooCoarseError(
                f"round radius {R:.4g} fell below {strat.grid_floor_cells} cells: refine grid or raise eps"
            )
        d_shrink = engine.shrink(n, R)

        balls = []
        for p in engine.pieces:
            got, left = _split_cells_to_balls(grid, p, R, strat.allow_single_cells)
            if len(left):
                raise GridTooCoarseError("split left residual cells with single cells enabled")
            balls.extend(got)
        n_singles = sum(1 for _, r, _ in balls if r < grid.h)
        ball_mass = sum(len(c) for _, _, c in balls) * grid.cell_volume

        retained_pieces = []
        d_sigma_round = 0.0
        d_s_round = 0.0
        dep_round = dep0
        min_margin = math.inf
        for center_idx, r, cells in balls:
            if not engine.table[center_idx]:
                retained_pieces.append(cells)
                continue
            retained, dsig, ds, nu = engine.smash_ball(center_idx, r, R)
            d_sigma_round += dsig
            d_s_round += ds
            dep_round += nu
            if len(retained):
                retained_pieces.append(retained)
            lhs = engine.columns["moment_lhs"][-1]
            rhs = engine.columns["moment_rhs"][-1]
            min_margin = min(min_margin, lhs - strat.moment_slack * rhs)
        engine.pieces = engine.coalesce(retained_pieces)

        led = state.ledger
        rec = RoundRecord(
            n=n,
            R=R,
            hand_mass_start=m_start,
            ball_mass=ball_mass,
            n_balls=len(balls),
            n_singles=n_singles,
            d_sigma_smash=d_sigma_round,
            d_sigma_shrink=d_shrink,
            d_mass_deposit=dep_round,
            d_s_integral=d_s_round,
            round_moment_lhs=d_sigma_round + d_shrink + engine.group * R * R * dep_round,
            round_moment_rhs=(1.0 / (grid.d + 2)) * R * R * ball_mass,
            hand_mass_end=engine.hand_mass(),
            mass_end=led.mass,
            s_integral_end=led.s_integral,
            sigma_end=led.sigma,
            min_smash_margin=min_margin,
        )
        state.history.append(rec)
        if on_round is not None:
            on_round(rec)
        if snapshot_dir is not None:
            from .fileio import write_mask_pgm

            write_mask_pgm(Mask(grid, engine.table.copy()), f"{snapshot_dir}/table_round{n:04d}.pgm")
        if state.lost:
            state.history = history + state.history
            return finish("LOST")
        if engine.hand_mass() < eps:
            state.history = history + state.history
            return finish("WON")
    state.history = history + state.history
    return finish("STALLED")


def _cells_to_arr(grid: GridSpec, nd_idx: np.ndarray) -> np.ndarray:
    arr = np.zeros(grid.shape, dtype=bool)
    if len(nd_idx):
        arr[tuple(nd_idx.T)] = True
    return arr


def _pole_box_distance(grid: GridSpec, pole) -> float:
    p = np.asarray(pole, dtype=float)
    lo = np.asarray(grid.lo)
    hi = grid.hi
    gap = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return float(np.linalg.norm(gap))

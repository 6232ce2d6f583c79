"""Game moves, ledgers, and the winning strategy."""

import math

import numpy as np
import pytest

from smashlab.errors import ConfigError, GridTooCoarseError
from smashlab.geometry import (
    Ball,
    Box,
    Mask,
    ball_cells,
    rasterize,
    working_grid,
)
from smashlab.quadrature import (
    constant_fn,
    mollified_newton_fn,
    neg_square_fn,
    second_moment,
    integrate,
)
from smashlab.smashgame import (
    _detect_ball,
    cookie_smash,
    move1_split_to_balls,
    move2_shrink,
    move3_smash,
    move4_deposit,
    new_game,
    run_strategy,
)


def make_state(table_shape, hand_shapes, h=1 / 32, eps=0.1, delta=2.0, s=None, extra=1.0):
    shapes = [table_shape] + list(hand_shapes)
    g = working_grid(shapes, h, extra=extra)
    table = rasterize(table_shape, g)
    hands = [rasterize(hs, g) for hs in hand_shapes]
    s = s or constant_fn(2, 1.0)
    return new_game(table, hands, s, eps, delta)


class TestMove1:
    def test_ball_already_fits_kept_whole(self):
        state = make_state(Box((-1.5, -1.5), (1.5, 1.5)), [Ball((0.0, 0.0), 0.27)])
        before = state.hands[0]
        move1_split_to_balls(state, 0, R=0.3, eta=0.05)
        assert len(state.hands) == 1
        assert np.array_equal(state.hands[0].cells, before.cells)

    def test_unit_square_covered_without_loss(self):
        state = make_state(Box((-2, -2), (2, 2)), [Box((-0.5, -0.5), (0.5, 0.5))])
        total = state.hands[0].measure
        move1_split_to_balls(state, 0, R=0.3, eta=0.05)
        covered = sum(m.measure for m in state.hands)
        assert covered == pytest.approx(total, abs=0)  # single-cell rung: no residual
        assert covered >= 0.9 * total
        # balls are pairwise disjoint and inside the original square
        acc = np.zeros(state.grid.shape, dtype=int)
        for m in state.hands:
            acc += m.cells
        assert acc.max() <= 1

    def test_two_distant_balls_returned_unchanged(self):
        state = make_state(
            Box((-3, -3), (3, 3)), [Ball((-1.5, 0.0), 0.2), Ball((1.5, 0.0), 0.2)]
        )
        state.hands = [state.hands[0].union(state.hands[1])]
        move1_split_to_balls(state, 0, R=0.3, eta=0.01)
        assert len(state.hands) == 2
        for m in state.hands:
            assert _detect_ball(state.grid, m.indices()) is not None

    def test_grid_too_coarse_without_single_cells(self):
        state = make_state(Box((-2, -2), (2, 2)), [Box((-0.5, -0.5), (0.5, 0.5))])
        with pytest.raises(GridTooCoarseError):
            move1_split_to_balls(state, 0, R=0.3, eta=1e-6, allow_single_cells=False)

    def test_never_increases_s_or_mass(self):
        s = neg_square_fn(2, (0.0, 0.0))
        state = make_state(Box((-2, -2), (2, 2)), [Ball((0.2, 0.1), 0.6)], s=s)
        mass0, s0 = state.ledger.mass, state.ledger.s_integral
        move1_split_to_balls(state, 0, R=0.25, eta=0.05)
        assert state.ledger.mass <= mass0
        assert state.ledger.s_integral <= s0 + 1e-12


class TestMove2:
    def test_one_step_deflation_when_budget_allows(self):
        state = make_state(Ball((0, 0), 1.0), [])
        before = state.table.measure
        move2_shrink(state, budget=1.0)
        loss = before - state.table.measure
        assert 0 < loss < 1.0
        # one erosion step only: about one boundary layer
        assert loss <= 4 * 2 * math.pi * state.grid.h

    def test_noop_when_budget_too_small(self):
        state = make_state(Ball((0, 0), 1.0), [])
        before = state.table
        move2_shrink(state, budget=2 * state.grid.cell_volume)
        assert np.array_equal(state.table.cells, before.cells)

    def test_empty_table_unchanged(self):
        state = make_state(Ball((0, 0), 1.0), [])
        state.table = Mask(state.grid, np.zeros(state.grid.shape, dtype=bool))
        move2_shrink(state, budget=1.0)
        assert state.table.count == 0


class TestMove3:
    def test_empty_stamp_is_identity(self):
        state = make_state(Ball((0, 0), 1.2), [Ball((0.1, 0.0), 0.4)])
        before = state.hands[0]
        move3_smash(state, 0, Mask(state.grid, np.zeros(state.grid.shape, dtype=bool)))
        assert np.array_equal(state.hands[0].cells, before.cells)

    def test_distant_stamp_leaves_hand_unchanged(self):
        table = Box((-3.2, -3.2), (3.2, 3.2))
        state = make_state(table, [Ball((-2.0, 0.0), 0.4)], extra=0.5)
        stamp = rasterize(Ball((2.0, 0.0), 0.4), state.grid)
        before = state.hands[0]
        move3_smash(state, 0, stamp)
        assert np.array_equal(state.hands[0].cells, before.cells)

    def test_mass_exactly_preserved_and_disjoint_from_stamp(self):
        table = Box((-3, -3), (3, 3))
        state = make_state(table, [Ball((0.0, 0.0), 0.5)])
        stamp = rasterize(Ball((0.0, 0.0), 0.8), state.grid)
        n0 = state.hands[0].count
        move3_smash(state, 0, stamp)
        out = state.hands[0]
        assert out.count == n0
        assert out.intersection(stamp).count == 0
        # the replacement hugs the stamp: an annulus inside B_{~sqrt(.8^2+.5^2)}
        dist = np.linalg.norm(out.true_centers(), axis=1)
        assert dist.min() >= 0.8
        assert dist.max() <= math.sqrt(0.8**2 + 0.5**2) + 3 * state.grid.h

    def test_stamp_outside_table_rejected(self):
        state = make_state(Ball((0, 0), 1.0), [Ball((0.0, 0.0), 0.3)])
        stamp = rasterize(Ball((1.2, 0.0), 0.4), state.grid)
        with pytest.raises(ConfigError):
            move3_smash(state, 0, stamp)


class TestMove4:
    def test_hand_inside_table_unchanged(self):
        state = make_state(Ball((0, 0), 1.0), [Ball((0.2, 0.0), 0.3)])
        t0, h0 = state.table, state.hands[0]
        move4_deposit(state, 0)
        assert np.array_equal(state.table.cells, t0.cells)
        assert np.array_equal(state.hands[0].cells, h0.cells)

    def test_disjoint_hand_fully_deposited(self):
        state = make_state(Ball((-1.5, 0.0), 0.8), [Ball((1.5, 0.0), 0.6)], extra=0.5)
        t0, h0 = state.table, state.hands[0]
        move4_deposit(state, 0, verify=True)
        assert state.hands[0].count == 0
        assert np.array_equal(state.table.cells, (t0.cells | h0.cells))

    def test_half_overlap_splits_exactly(self):
        state = make_state(Ball((0.0, 0.0), 1.0), [Ball((1.0, 0.0), 0.7)], extra=0.5)
        table0, hand0 = state.table, state.hands[0]
        outside = hand0.difference(table0).measure
        s0 = state.ledger.s_integral
        move4_deposit(state, 0, verify=True)
        assert state.hands[0].measure == pytest.approx(hand0.measure - outside, abs=0)
        assert state.table.measure == pytest.approx(table0.measure + outside, abs=0)
        assert state.ledger.s_integral == s0  # cells only relabeled


class TestCookieSmash:
    def test_interior_smash_makes_symmetric_annulus(self):
        table = Box((-4, -4), (4, 4))
        state = make_state(table, [Ball((0.03125, 0.03125), 0.25)], h=1 / 32, delta=40.0)
        R = 0.4
        mu = state.hands[0].measure
        sig0 = state.ledger.sigma
        cookie_smash(state, 0, R)
        rec = state.history[-2]  # cookie record precedes the deposit record
        assert rec.kind == "cookie"
        assert rec.nu == 0.0  # interior: nothing lands outside the table
        assert rec.mu == pytest.approx(mu, abs=0)
        assert rec.moment_lhs >= 0.9 * rec.moment_rhs
        assert state.hands[0].count == int(round(mu / state.grid.cell_volume))
        dist = np.linalg.norm(state.hands[0].true_centers() - 0.03125, axis=1)
        assert dist.min() >= R

    def test_constant_function_exactly_conserved(self):
        table = Box((-4, -4), (4, 4))
        state = make_state(table, [Ball((0.03125, 0.03125), 0.2)], h=1 / 32, delta=40.0)
        s0 = state.ledger.s_integral
        cookie_smash(state, 0, 0.35)
        assert state.ledger.s_integral == s0  # equal cell counts, constant s

    def test_edge_smash_deposits_mass(self):
        state = make_state(Ball((0.0, 0.0), 1.0), [Ball((0.78125, 0.0), 0.15)], h=1 / 32, delta=40.0, extra=1.5)
        hand0 = state.hands[0].measure
        table0 = state.table.measure
        cookie_smash(state, 0, 0.3)
        rec = next(r for r in reversed(state.history) if r.kind == "cookie")
        assert rec.nu > 0
        assert state.table.measure > table0
        assert state.hands[0].measure + (state.table.measure - table0) == pytest.approx(hand0, abs=1e-12)
        assert rec.moment_lhs >= 0.9 * rec.moment_rhs

    def test_requires_ball_hand(self):
        state = make_state(Box((-2, -2), (2, 2)), [Box((-0.4, -0.2), (0.4, 0.2))])
        with pytest.raises(ConfigError):
            cookie_smash(state, 0, 0.5)


class TestCurrentSum:
    def test_moves_never_grow_the_sum(self):
        state = make_state(Ball((-0.35, 0.0), 0.6), [Ball((0.35, 0.0), 0.6)], h=1 / 16, delta=25.0, extra=1.0)
        tol = 3 * 200  # a few boundary layers of slack in cells
        prev = state.current_sum()
        move4_deposit(state, 0)
        move1_split_to_balls(state, 0, R=0.3, eta=0.05)
        move2_shrink(state, budget=0.02)
        for step in range(3):
            after = state.current_sum()
            assert after.difference(prev).count <= tol
            prev = after
            # smash the largest remaining ball against the table
            sizes = [m.count for m in state.hands]
            j = sizes.index(max(sizes))
            det = _detect_ball(state.grid, state.hands[j].indices())
            if det is None or not state.table.cells[det[0]]:
                break
            cookie_smash(state, j, R=0.35)
        final = state.current_sum()
        assert final.difference(prev).count <= tol


class TestRunStrategy:
    def test_trivial_epsilon_wins_in_zero_rounds(self):
        res = run_strategy(
            Ball((-0.5, 0.0), 0.6),
            Ball((0.5, 0.0), 0.6),
            constant_fn(2, 1.0),
            eps=5.0,
            delta=8.0,
            h=1 / 16,
        )
        assert res.status == "WON"
        assert res.rounds == 0

    def test_disjoint_scene_wins_in_one_round(self):
        res = run_strategy(
            Ball((-1.6, 0.0), 0.7),
            Ball((1.6, 0.0), 0.7),
            constant_fn(2, 1.0),
            eps=0.05,
            delta=8.0,
            h=1 / 16,
        )
        assert res.status == "WON"
        assert res.rounds == 1
        assert res.mass_loss == 0.0

    def test_overlap_game_wins_with_clean_ledgers(self):
        res = run_strategy(
            Ball((-0.7, 0.0), 1.0),
            Ball((0.7, 0.0), 1.0),
            neg_square_fn(2, (0.0, 0.0)),
            eps=0.1,
            delta=10.0,
            h=1 / 32,
        )
        assert res.status == "WON"
        assert res.final_hand_mass < 0.1
        assert res.mass_loss < 0.1
        assert res.s_increase < 0.1
        cols = res.smash_columns
        assert (cols["moment_lhs"] >= 0.9 * cols["moment_rhs"] - 1e-15).all()
        assert (cols["d_s"] <= cols["taylor_rhs"] + 1e-15).all()
        for rec in res.round_records:
            assert rec.round_moment_lhs >= 0.9 * rec.round_moment_rhs

    def test_deterministic_replay(self):
        args = dict(eps=0.2, delta=10.0, h=1 / 32)
        a, b = Ball((-0.6, 0.0), 0.8), Ball((0.6, 0.0), 0.8)
        s = neg_square_fn(2, (0.0, 0.0))
        r1 = run_strategy(a, b, s, **args)
        r2 = run_strategy(a, b, s, **args)
        assert r1.rounds == r2.rounds
        assert np.array_equal(r1.table.cells, r2.table.cells)
        np.testing.assert_array_equal(r1.smash_columns["d_sigma"], r2.smash_columns["d_sigma"])
        assert [r.hand_mass_end for r in r1.round_records] == [
            r.hand_mass_end for r in r2.round_records
        ]

    def test_grid_floor_raises(self):
        with pytest.raises(GridTooCoarseError, match="refine grid or raise eps"):
            run_strategy(
                Ball((-0.5, 0.0), 0.7),
                Ball((0.5, 0.0), 0.7),
                constant_fn(2, 1.0),
                eps=0.05,
                delta=1.0,  # radius cap delta/2N is far below four cells
                h=1 / 16,
            )

    def test_sigma_within_cap_every_round(self):
        res = run_strategy(
            Ball((-0.6, 0.0), 0.9),
            Ball((0.6, 0.0), 0.9),
            neg_square_fn(2, (0.0, 0.0)),
            eps=0.15,
            delta=9.0,
            h=1 / 32,
        )
        cap = res.params["rad_sum_bound"] ** 2
        for rec in res.round_records:
            assert rec.sigma_end <= rec.mass_end * cap + 1e-9

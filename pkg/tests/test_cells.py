"""Cell zoo: genotype validity and formats, vertex semantics, discrete vs
relaxed equivalence, derivation, and the GRU/LSTM baselines — all against
independent straight-line oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dartsrenet import autograd as ag
from dartsrenet.autograd import Tensor
from dartsrenet.cells import (ACTIVATIONS, Activation, AlphaTable, CellWeights,
                              Genotype, GenotypeCell, GRUCell, LSTMCell, MixedCell,
                              derive_genotype, preset_genotypes, vertex_step)

from oracles import (derive_ref, fd_grad, genotype_cell_ref, gru_ref, lstm_ref,
                     max_rel_err, mixed_cell_ref)


# --------------------------------------------------------------------------
# Genotype
# --------------------------------------------------------------------------


class TestGenotype:
    def test_invalid_predecessor_rejected(self):
        with pytest.raises(ValueError):
            Genotype(((1, Activation.RELU),))  # vertex 1 cannot point at itself
        with pytest.raises(ValueError):
            Genotype(((0, Activation.RELU), (5, Activation.TANH)))

    def test_text_round_trip(self):
        g = preset_genotypes()["vanilla"]
        assert Genotype.from_text(g.to_text()) == g

    def test_text_format_exact(self):
        g = Genotype(((0, Activation.RELU), (1, Activation.SIGMOID)))
        assert g.to_text() == "vertices=2\nv1 pred=0 act=ReLU\nv2 pred=1 act=Sigmoid\n"

    def test_malformed_text(self):
        with pytest.raises(ValueError):
            Genotype.from_text("v1 pred=0 act=ReLU\n")
        with pytest.raises(ValueError):
            Genotype.from_text("vertices=1\nv1 pred=0 act=Swish\n")

    def test_file_round_trip(self, tmp_path):
        g = preset_genotypes()["dws"]
        g.save(tmp_path / "cell.genotype")
        assert Genotype.load(tmp_path / "cell.genotype") == g

    def test_dot_export(self):
        dot = preset_genotypes()["dws"].to_dot()
        assert dot.count("[label=") == 9 + 8  # 9 vertices + 8 labeled edges
        assert 'v0 [label="x_t,h_{t-1}"]' in dot
        assert dot.count("->") == 8
        # chain design: consecutive predecessors, activations in caption order
        for j in range(8):
            assert f"v{j} -> v{j + 1}" in dot

    @settings(max_examples=30, deadline=None)
    @given(st.data())
    def test_random_round_trip(self, data):
        n = data.draw(st.integers(1, 10))
        entries = tuple(
            (data.draw(st.integers(0, i)), data.draw(st.sampled_from(ACTIVATIONS)))
            for i in range(n))
        g = Genotype(entries)
        assert Genotype.from_text(g.to_text()) == g


class TestPresets:
    def test_all_presets_valid_eight_vertex(self):
        for name, g in preset_genotypes().items():
            assert g.num_vertices == 8, name

    def test_dws_has_no_identity(self):
        acts = [a for _, a in preset_genotypes()["dws"].entries]
        assert Activation.IDENTITY not in acts
        assert acts.count(Activation.RELU) == 6
        assert acts.count(Activation.SIGMOID) == 2

    def test_dws_is_a_pure_chain(self):
        preds = [p for p, _ in preset_genotypes()["dws"].entries]
        assert preds == list(range(8))

    def test_vanilla_has_no_tanh(self):
        acts = [a for _, a in preset_genotypes()["vanilla"].entries]
        assert Activation.TANH not in acts

    def test_sigmoid_weighting_fan_out(self):
        g = preset_genotypes()["sigmoid_weighting"]
        preds = [p for p, _ in g.entries]
        assert preds[4:] == [4, 4, 4, 4]  # vertices 5..8 all read vertex 4
        acts = [a for _, a in g.entries]
        assert acts.count(Activation.IDENTITY) == 5
        assert Activation.TANH not in acts


# --------------------------------------------------------------------------
# vertex_step
# --------------------------------------------------------------------------


class TestVertexStep:
    def _step(self, w_scale, rng, f=Activation.TANH, n=4):
        x = Tensor(rng.standard_normal((2, 3)), dtype=np.float64)
        h_prev = Tensor(rng.standard_normal((2, n)), dtype=np.float64)
        w = Tensor(np.full((3, 2 * n), w_scale), dtype=np.float64)
        b = Tensor(np.zeros(2 * n), dtype=np.float64)
        return x, h_prev, w, b

    def test_gate_closed_keeps_state(self, rng):
        x, h_prev, _, _ = self._step(0.0, rng)
        w = Tensor(np.zeros((3, 8)), dtype=np.float64)
        b = np.zeros(8)
        b[:4] = -50.0  # gate half saturates closed
        _, _, h_new = vertex_step(x, h_prev, w, Tensor(b, dtype=np.float64), Activation.TANH)
        np.testing.assert_allclose(h_new.data, h_prev.data, atol=1e-12)

    def test_gate_open_takes_candidate(self, rng):
        x, h_prev, _, _ = self._step(0.0, rng)
        w = Tensor(rng.standard_normal((3, 8)), dtype=np.float64)
        b = np.zeros(8)
        b[:4] = 50.0
        _, h_tilde, h_new = vertex_step(x, h_prev, w, Tensor(b, dtype=np.float64),
                                        Activation.TANH)
        np.testing.assert_allclose(h_new.data, h_tilde.data, atol=1e-12)

    def test_gate_in_unit_interval(self, rng):
        x, h_prev, w, b = self._step(0.7, rng)
        c, _, _ = vertex_step(x, h_prev, w, b, Activation.RELU)
        assert np.all((c.data > 0) & (c.data < 1))

    def test_sigmoid_vertex_from_zero_state_in_unit_interval(self, rng):
        h = Tensor(np.zeros((2, 4)), dtype=np.float64)
        for _ in range(6):
            x = Tensor(rng.standard_normal((2, 3)), dtype=np.float64)
            w = Tensor(rng.standard_normal((3, 8)), dtype=np.float64)
            b = Tensor(rng.standard_normal(8), dtype=np.float64)
            _, _, h = vertex_step(x, h, w, b, Activation.SIGMOID)
            assert np.all((h.data >= 0) & (h.data <= 1))

    def test_convex_blend_bounds(self, rng):
        x, h_prev, w, b = self._step(0.5, rng, n=6)
        w = Tensor(rng.standard_normal((3, 12)), dtype=np.float64)
        _, h_tilde, h_new = vertex_step(x, h_prev, w, b, Activation.IDENTITY)
        lo = np.minimum(h_prev.data, h_tilde.data) - 1e-12
        hi = np.maximum(h_prev.data, h_tilde.data) + 1e-12
        assert np.all(h_new.data >= lo) and np.all(h_new.data <= hi)


# --------------------------------------------------------------------------
# Discrete cell
# --------------------------------------------------------------------------


def _relu_chain(n):
    return Genotype(tuple((i, Activation.RELU) for i in range(n)))


class TestGenotypeCell:
    def test_zero_weights_zero_input(self, rng):
        """Zero weights and zero biases with zero state: each vertex emits
        0.5*f(0), so the cell mean is 0 unless a vertex uses sigmoid."""
        cell = GenotypeCell(_relu_chain(8), 3, 4, rng, dtype=np.float64)
        for w, b in zip(cell.weights.ws, cell.weights.bs):
            w.data[:] = 0.0
            b.data[:] = 0.0
        x = Tensor(np.zeros((2, 3)), dtype=np.float64)
        h, _ = cell.step(x, cell.initial_state(2))
        np.testing.assert_array_equal(h.data, np.zeros((2, 4)))

        # each sigmoid vertex contributes 0.5 * sigmoid(0) = 0.25 to the sum
        dws = GenotypeCell(preset_genotypes()["dws"], 3, 4, rng, dtype=np.float64)
        for w, b in zip(dws.weights.ws, dws.weights.bs):
            w.data[:] = 0.0
            b.data[:] = 0.0
        h, _ = dws.step(x, dws.initial_state(2))
        np.testing.assert_allclose(h.data, np.full((2, 4), 2 * 0.25 / 8), atol=1e-15)

    def test_single_vertex_identity_is_its_own_mean(self, rng):
        g = Genotype(((0, Activation.IDENTITY),))
        cell = GenotypeCell(g, 3, 4, rng, dtype=np.float64)
        x = Tensor(rng.standard_normal((2, 3)), dtype=np.float64)
        h, states = cell.step(x, cell.initial_state(2))
        np.testing.assert_array_equal(h.data, states[1].data)

    @pytest.mark.parametrize("preset", ["vanilla", "sigmoid_weighting", "dws"])
    @pytest.mark.parametrize("input_mode", ["current", "previous"])
    def test_matches_straight_line_oracle(self, preset, input_mode, rng):
        genotype = preset_genotypes()[preset]
        cell = GenotypeCell(genotype, 5, 6, rng, dtype=np.float64, input_mode=input_mode)
        ws = [w.data for w in cell.weights.ws]
        bs = [b.data for b in cell.weights.bs]
        state = cell.initial_state(3)
        ref_states = [s.data for s in state]
        for _ in range(4):
            x = rng.standard_normal((3, 5))
            h, state = cell.step(Tensor(x, dtype=np.float64), state)
            ref_h, ref_states = genotype_cell_ref(genotype, ws, bs, x, ref_states, input_mode)
            np.testing.assert_allclose(h.data, ref_h, atol=1e-5, rtol=0)

    def test_input_modes_differ_after_first_step(self, rng):
        genotype = preset_genotypes()["dws"]
        cur = GenotypeCell(genotype, 4, 5, rng, dtype=np.float64, input_mode="current")
        prev = GenotypeCell(genotype, 4, 5, np.random.default_rng(0), dtype=np.float64,
                            input_mode="previous", weights=cur.weights)
        x = Tensor(rng.standard_normal((2, 4)), dtype=np.float64)
        h_c, s_c = cur.step(x, cur.initial_state(2))
        h_p, s_p = prev.step(x, prev.initial_state(2))
        assert not np.allclose(h_c.data, h_p.data)
        h_c2, _ = cur.step(x, s_c)
        h_p2, _ = prev.step(x, s_p)
        assert not np.allclose(h_c2.data, h_p2.data)

    def test_sigmoid_vertex_range_and_relu_nonnegative_over_time(self, rng):
        g = Genotype(((0, Activation.SIGMOID), (1, Activation.RELU)))
        cell = GenotypeCell(g, 3, 4, rng, dtype=np.float64)
        state = cell.initial_state(2)
        for _ in range(8):
            x = Tensor(rng.standard_normal((2, 3)) * 2, dtype=np.float64)
            _, state = cell.step(x, state)
            assert np.all((state[1].data >= 0) & (state[1].data <= 1))
            assert np.all(state[2].data >= 0)

    def test_gradients_reach_all_weights(self, rng):
        cell = GenotypeCell(preset_genotypes()["vanilla"], 3, 4, rng)
        params = [t for _, t in cell.named_params()]
        ag.zero_grads(params)
        x = Tensor(rng.standard_normal((2, 3)).astype(np.float32))
        h, state = cell.step(x, cell.initial_state(2))
        h2, _ = cell.step(x, state)
        ag.backward(h2.sum())
        for name, t in cell.named_params():
            assert np.any(t.grad != 0), name

    def test_composite_gradient_matches_finite_differences(self, rng):
        """Two chained cell steps, gradient w.r.t. one weight matrix."""
        genotype = _relu_chain(3)
        cell = GenotypeCell(genotype, 3, 4, rng, dtype=np.float64)
        x_data = rng.standard_normal((2, 3))

        def loss_from(ws):
            with ag.no_grad():
                probe = GenotypeCell(genotype, 3, 4, np.random.default_rng(1),
                                     dtype=np.float64)
                for w, arr in zip(probe.weights.ws, ws):
                    w.data = arr
                for b, cur in zip(probe.weights.bs, cell.weights.bs):
                    b.data = cur.data
                x = Tensor(x_data, dtype=np.float64)
                h, st = probe.step(x, probe.initial_state(2))
                h2, _ = probe.step(x, st)
                return float(ag.mul(h2, h2).sum().data)

        params = [t for _, t in cell.named_params()]
        ag.zero_grads(params)
        x = Tensor(x_data, dtype=np.float64)
        h, st = cell.step(x, cell.initial_state(2))
        h2, _ = cell.step(x, st)
        ag.backward(ag.mul(h2, h2).sum())
        arrays = [w.data.copy() for w in cell.weights.ws]
        for k in (0, 2):
            fd = fd_grad(loss_from, arrays, k)
            assert max_rel_err(cell.weights.ws[k].grad, fd, floor=1e-8) < 1e-4


# --------------------------------------------------------------------------
# Alpha tables, mixed cell, derivation
# --------------------------------------------------------------------------


def _saturated_tables(rng, num_vertices, lo=0.0, hi=1e4):
    tables = []
    for i in range(1, num_vertices + 1):
        t = np.full((i, 4), lo)
        t[rng.integers(0, i), rng.integers(0, 4)] = hi
        tables.append(t)
    return tables


class TestDerive:
    def test_single_spike(self):
        t1 = np.zeros((1, 4))
        t1[0, 2] = 2.0  # ReLU column
        g = derive_genotype([t1])
        assert g.entries == ((0, Activation.RELU),)

    def test_predecessor_by_peak_value(self):
        t1 = np.zeros((1, 4))
        t1[0, 2] = 1.0
        t2 = np.zeros((2, 4))
        t2[0, 1] = 1.0   # tanh on edge from vertex 0
        t2[1, 0] = 1.5   # sigmoid on edge from vertex 1 wins
        g = derive_genotype([t1, t2])
        assert g.entries[1] == (1, Activation.SIGMOID)

    def test_matches_brute_force_enumeration(self, rng):
        for _ in range(1000):
            tables = [rng.standard_normal((i, 4)) for i in range(1, 4)]
            assert derive_genotype([t.copy() for t in tables]).entries == derive_ref(tables)

    def test_ties_break_to_lowest_index(self):
        t1 = np.zeros((1, 4))
        t2 = np.zeros((2, 4))
        g = derive_genotype([t1, t2])
        assert g.entries == ((0, Activation.SIGMOID), (0, Activation.SIGMOID))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(-8, 8), st.data())
    def test_per_vertex_shift_invariance(self, shift, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 16)))
        tables = [rng.standard_normal((i, 4)) for i in range(1, 5)]
        base = derive_genotype([t.copy() for t in tables])
        vertex = data.draw(st.integers(0, 3))
        tables[vertex] = tables[vertex] + shift
        assert derive_genotype(tables) == base


class TestMixedCell:
    def test_uniform_alpha_averages_activations(self, rng):
        """Single-predecessor vertex with equal logits: candidate path is the
        plain average of the four activation outputs."""
        alpha = AlphaTable.from_arrays([np.zeros((1, 4))])
        cell = MixedCell(3, 4, rng, num_vertices=1, dtype=np.float64, alpha=alpha)
        x = rng.standard_normal((2, 3))
        state = cell.initial_state(2)
        h, _ = cell.step(Tensor(x, dtype=np.float64), state)
        ref_h, _ = mixed_cell_ref([alpha.tables[0].data], [w.data for w in cell.weights.ws],
                                  [b.data for b in cell.weights.bs], x,
                                  [s.data for s in state])
        np.testing.assert_allclose(h.data, ref_h, atol=1e-12)

    def test_saturated_equals_discrete_vertex(self, rng):
        t = np.zeros((1, 4))
        t[0, 2] = 1e4  # ReLU one-hot
        alpha = AlphaTable.from_arrays([t])
        cell = MixedCell(3, 4, rng, num_vertices=1, dtype=np.float64, alpha=alpha)
        x = Tensor(rng.standard_normal((2, 3)), dtype=np.float64)
        state = cell.initial_state(2)
        h_mixed, _ = cell.step(x, state)
        x_in = ag.concat([x, state[0]], axis=1)
        _, _, h0 = vertex_step(x_in, state[0], cell.weights.ws[0], cell.weights.bs[0],
                               Activation.TANH)
        _, _, h1 = vertex_step(h0, state[1], cell.weights.ws[1], cell.weights.bs[1],
                               Activation.RELU)
        np.testing.assert_allclose(h_mixed.data, h1.data, atol=1e-4)

    @pytest.mark.parametrize("input_mode", ["current", "previous"])
    def test_matches_brute_force_oracle(self, input_mode, rng):
        for trial in range(10):
            tables = [rng.standard_normal((i, 4)) for i in range(1, 5)]
            alpha = AlphaTable.from_arrays(tables)
            cell = MixedCell(3, 5, rng, num_vertices=4, dtype=np.float64,
                             alpha=alpha, input_mode=input_mode)
            ws = [w.data for w in cell.weights.ws]
            bs = [b.data for b in cell.weights.bs]
            state = cell.initial_state(2)
            ref_states = [s.data for s in state]
            for _ in range(3):
                x = rng.standard_normal((2, 3))
                h, state = cell.step(Tensor(x, dtype=np.float64), state)
                ref_h, ref_states = mixed_cell_ref(tables, ws, bs, x, ref_states, input_mode)
                np.testing.assert_allclose(h.data, ref_h, atol=1e-5, rtol=0)

    def test_relaxation_consistency_saturated_tables(self, rng):
        """One-hot-saturated tables: mixed forward == derived-genotype forward."""
        for trial in range(50):
            tables = _saturated_tables(rng, num_vertices=5)
            alpha = AlphaTable.from_arrays(tables)
            mixed = MixedCell(4, 6, rng, num_vertices=5, dtype=np.float64, alpha=alpha)
            disc = GenotypeCell(derive_genotype(alpha), 4, 6, rng, dtype=np.float64,
                                weights=mixed.weights)
            xs = [rng.standard_normal((3, 4)) for _ in range(3)]
            sm, sd = mixed.initial_state(3), disc.initial_state(3)
            for x in xs:
                hm, sm = mixed.step(Tensor(x, dtype=np.float64), sm)
                hd, sd = disc.step(Tensor(x, dtype=np.float64), sd)
                np.testing.assert_allclose(hm.data, hd.data, atol=1e-4, rtol=0)

    def test_every_alpha_entry_gets_gradient(self, rng):
        cell = MixedCell(3, 4, rng, num_vertices=6)
        alphas = [t for _, t in cell.alpha.named_params()]
        ag.zero_grads(alphas + [t for _, t in cell.named_params()])
        x = Tensor(rng.standard_normal((2, 3)).astype(np.float32))
        h, _ = cell.step(x, cell.initial_state(2))
        ag.backward(h.sum())
        for name, t in cell.alpha.named_params():
            assert np.all(t.grad != 0), name

    def test_incomplete_table_rejected(self, rng):
        with pytest.raises(ValueError):
            AlphaTable.from_arrays([np.zeros((2, 4))])  # vertex 1 must have 1 row
        with pytest.raises(ValueError):
            MixedCell(3, 4, rng, num_vertices=3,
                      alpha=AlphaTable.from_arrays([np.zeros((1, 4))]))

    def test_entropy_saturated_near_zero_uniform_large(self, rng):
        saturated = AlphaTable.from_arrays(_saturated_tables(rng, 4, lo=-1e4, hi=1e4))
        assert saturated.entropy() == pytest.approx(0.0, abs=1e-6)
        uniform = AlphaTable.from_arrays([np.zeros((i, 4)) for i in range(1, 5)])
        expect = np.mean([np.log(4 * i) for i in range(1, 5)])
        assert uniform.entropy() == pytest.approx(expect, abs=1e-9)


# --------------------------------------------------------------------------
# Baselines
# --------------------------------------------------------------------------


class TestBaselines:
    def test_gru_update_gate_closed(self, rng):
        cell = GRUCell(3, 4, rng, dtype=np.float64)
        cell.b_gates.data[:4] = -60.0  # z -> 0: keep previous state
        h = Tensor(rng.standard_normal((2, 4)), dtype=np.float64)
        out, _ = cell.step(Tensor(rng.standard_normal((2, 3)), dtype=np.float64), [h])
        np.testing.assert_allclose(out.data, h.data, atol=1e-12)

    def test_lstm_forget_one_input_zero_preserves_cell(self, rng):
        cell = LSTMCell(3, 4, rng, dtype=np.float64)
        cell.w.data[:] = 0.0
        cell.b.data[:4] = -60.0          # input gate -> 0
        cell.b.data[4:8] = 60.0          # forget gate -> 1
        c = Tensor(rng.standard_normal((2, 4)), dtype=np.float64)
        h = Tensor(np.zeros((2, 4)), dtype=np.float64)
        _, (h_new, c_new) = cell.step(Tensor(rng.standard_normal((2, 3)), dtype=np.float64),
                                      [h, c])
        np.testing.assert_allclose(c_new.data, c.data, atol=1e-12)

    def test_gru_matches_oracle(self, rng):
        cell = GRUCell(5, 4, rng, dtype=np.float64)
        x = rng.standard_normal((3, 5))
        h = rng.standard_normal((3, 4))
        out, _ = cell.step(Tensor(x, dtype=np.float64), [Tensor(h, dtype=np.float64)])
        ref = gru_ref(x, h, cell.w_gates.data, cell.b_gates.data,
                      cell.w_cand.data, cell.b_cand.data)
        np.testing.assert_allclose(out.data, ref, atol=1e-5, rtol=0)

    def test_lstm_matches_oracle(self, rng):
        cell = LSTMCell(5, 4, rng, dtype=np.float64)
        x = rng.standard_normal((3, 5))
        h = rng.standard_normal((3, 4))
        c = rng.standard_normal((3, 4))
        out, (h_new, c_new) = cell.step(Tensor(x, dtype=np.float64),
                                        [Tensor(h, dtype=np.float64),
                                         Tensor(c, dtype=np.float64)])
        ref_h, ref_c = lstm_ref(x, h, c, cell.w.data, cell.b.data)
        np.testing.assert_allclose(out.data, ref_h, atol=1e-5, rtol=0)
        np.testing.assert_allclose(c_new.data, ref_c, atol=1e-5, rtol=0)


def test_cell_weights_shapes_and_schemes(rng):
    cw = CellWeights.init(rng, input_dim=7, hidden_dim=5, num_vertices=3)
    assert cw.ws[0].shape == (12, 10)
    for w in cw.ws[1:]:
        assert w.shape == (5, 10)
    for b in cw.bs:
        assert b.shape == (10,)
        np.testing.assert_array_equal(b.data[:5], 2.0)  # calibrated: gates open
        np.testing.assert_array_equal(b.data[5:], 0.0)

    plain = CellWeights.init(rng, input_dim=7, hidden_dim=5, num_vertices=3,
                             scheme="plain")
    for b in plain.bs:
        np.testing.assert_array_equal(b.data, 0)
    for w in plain.ws:
        bound = 1.0 / np.sqrt(w.shape[0])
        assert float(np.abs(w.data).max()) <= bound

    with pytest.raises(ValueError):
        CellWeights.init(rng, 7, 5, 3, scheme="fancy")

import numpy as np
import pytest

from gridcoord import feeder, numkit
from gridcoord.errors import (InvalidPartition, ParseError, ValidationError)

from conftest import (three_bus_chain_dict, two_bus_dict,
                      unbalanced_four_bus_dict, z3)


def hand_two_bus_vmag(z, s_load, v1=1.0):
    """Exact |V2| for a constant-power load on one line (quadratic in |V2|^2)."""
    r, x = z.real, z.imag
    p, q = s_load.real, s_load.imag
    # t^2 + (2(rp + xq) - v1^2) t + (r^2 + x^2)(p^2 + q^2) = 0, t = |V2|^2
    b = 2.0 * (r * p + x * q) - v1 ** 2
    c = (r * r + x * x) * (p * p + q * q)
    roots = np.roots([1.0, b, c])
    t = max(root.real for root in roots if abs(root.imag) < 1e-12)
    return np.sqrt(t)


class TestLoadFeeder:
    def test_two_bus_valid(self, two_bus_model):
        m = two_bus_model
        assert m.n_nodes == 1
        assert m.node_ids == ["b1.a"]
        assert m.p0[0] == pytest.approx(0.1)
        assert m.q0[0] == pytest.approx(0.05)

    def test_cycle_rejected(self):
        doc = three_bus_chain_dict()
        doc["lines"].append({"from": "e", "to": "s", "z": z3(z_aa=0.01 + 0.01j)})
        with pytest.raises(ValidationError):
            feeder.load_feeder(doc)

    def test_disconnected_rejected(self):
        doc = three_bus_chain_dict()
        doc["buses"].append({"id": "x", "phases": "a"})
        doc["lines"].append({"from": "m", "to": "e", "z": z3(z_aa=0.01j)})
        with pytest.raises(ValidationError):
            feeder.load_feeder(doc)

    def test_zip_sum_violation(self):
        doc = two_bus_dict(zip_coeffs=(0.5, 0.3, 0.1))
        with pytest.raises(ValidationError):
            feeder.load_feeder(doc)

    def test_dangling_der(self):
        doc = two_bus_dict()
        doc["ders"] = [{"bus": "nowhere", "phase": "a", "inverter_id": "i"}]
        with pytest.raises(ValidationError):
            feeder.load_feeder(doc)

    def test_missing_phase_fed_from_upstream(self):
        doc = two_bus_dict()
        doc["buses"][0]["phases"] = "b"  # substation no longer carries phase a
        doc["substation"]["y0"] = [1.0]
        with pytest.raises(ValidationError):
            feeder.load_feeder(doc)

    def test_parse_error_on_garbage(self):
        with pytest.raises(ParseError):
            feeder.load_feeder("{not json")
        with pytest.raises(ParseError):
            feeder.load_feeder({"base": {}})

    def test_load_scale(self):
        m = feeder.load_feeder(two_bus_dict(), load_scale=0.5)
        assert m.p0[0] == pytest.approx(0.05)


class TestConnectivity:
    def test_two_bus(self, two_bus_model):
        M0, M = feeder.build_connectivity(two_bus_model)
        np.testing.assert_allclose(M, [[-1.0]])
        np.testing.assert_allclose(M0, [[1.0]])

    def test_three_bus_chain_invertible(self):
        m = feeder.load_feeder(three_bus_chain_dict())
        M0, M = feeder.build_connectivity(m)
        assert abs(np.linalg.det(M)) > 1e-12
        # chain: strictly one -1 per column on the downstream node
        assert np.all(np.diag(M) == -1.0)

    def test_inverse_round_trip(self, four_bus_model):
        M0, M = feeder.build_connectivity(four_bus_model)
        minv = numkit.solve_linear(M, np.eye(four_bus_model.n_nodes))
        np.testing.assert_allclose(M @ (-minv), -np.eye(four_bus_model.n_nodes),
                                   atol=1e-12)

    def test_radial_substation_identity(self, four_bus_model):
        # -M^-T M0 Y0 equals the per-node substation reference vector
        m = four_bus_model
        M0, M = feeder.build_connectivity(m)
        y0_sub = np.array([m.y0_sub[p] for p in m.bus_phases[m.substation_bus]])
        lhs = -numkit.solve_linear(M.T, M0 @ y0_sub)
        np.testing.assert_allclose(lhs, m.y0_node, atol=1e-12)


class TestEquivalents:
    def test_single_line_single_phase(self):
        m = feeder.load_feeder(two_bus_dict(z=0.013 + 0.027j))
        M0, M = feeder.build_connectivity(m)
        req, xeq = feeder.build_equivalents(m, M0, M)
        np.testing.assert_allclose(req, [[2 * 0.013]], atol=1e-15)
        np.testing.assert_allclose(xeq, [[2 * 0.027]], atol=1e-15)

    def test_zero_impedance_line(self):
        m = feeder.load_feeder(two_bus_dict(z=0.0))
        M0, M = feeder.build_connectivity(m)
        req, xeq = feeder.build_equivalents(m, M0, M)
        np.testing.assert_allclose(req, 0.0)
        np.testing.assert_allclose(xeq, 0.0)

    def test_nonnegative_diagonals(self, four_bus_model):
        M0, M = feeder.build_connectivity(four_bus_model)
        req, xeq = feeder.build_equivalents(four_bus_model, M0, M)
        assert np.all(np.diag(req) >= 0)
        assert np.all(np.diag(xeq) >= 0)

    def test_symmetric_for_decoupled_phases(self):
        # diagonal impedance blocks: the equivalents are symmetric PSD
        doc = unbalanced_four_bus_dict()
        for ln in doc["lines"]:
            z = np.array([[complex(*e) for e in row] for row in ln["z"]])
            ln["z"] = z3(full=np.diag(np.diag(z)))
        m = feeder.load_feeder(doc)
        M0, M = feeder.build_connectivity(m)
        req, xeq = feeder.build_equivalents(m, M0, M)
        np.testing.assert_allclose(req, req.T, atol=1e-12)
        np.testing.assert_allclose(xeq, xeq.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(req) >= -1e-12)
        assert np.all(np.linalg.eigvalsh(xeq) >= -1e-12)

    def test_leaf_injection_raises_leaf_voltage_by_diagonal(self):
        doc = unbalanced_four_bus_dict()
        doc["loads"] = [dict(l, a0=1.0, a1=0.0, a2=0.0) for l in doc["loads"]]
        m = feeder.load_feeder(doc)
        blocks = feeder.build_blocks(m)
        leaf = m.node_of("t2", "a")
        p_g = np.zeros(m.n_nodes)
        y_base = feeder.lindist_voltages(blocks, p_g, np.zeros(m.n_nodes))
        p_g[leaf] = 1.0
        y_up = feeder.lindist_voltages(blocks, p_g, np.zeros(m.n_nodes))
        assert y_up[leaf] - y_base[leaf] == pytest.approx(blocks.req[leaf, leaf],
                                                          abs=1e-12)


class TestBuildK:
    def test_constant_power_gives_identity(self):
        m = feeder.load_feeder(two_bus_dict(zip_coeffs=(1.0, 0.0, 0.0)))
        blocks = feeder.build_blocks(m)
        np.testing.assert_allclose(blocks.k, np.eye(1))

    def test_constant_impedance_hand_value(self):
        m = feeder.load_feeder(two_bus_dict(z=0.01 + 0.02j,
                                            zip_coeffs=(0.0, 1.0, 0.0)))
        blocks = feeder.build_blocks(m)
        expected = 1.0 + 2 * 0.01 * 0.1 + 2 * 0.02 * 0.05
        assert blocks.k[0, 0] == pytest.approx(expected)

    def test_mixed_zip_close_to_identity(self, four_bus_model):
        blocks = feeder.build_blocks(four_bus_model)
        dev = np.linalg.norm(blocks.k - np.eye(four_bus_model.n_nodes))
        assert 0.0 < dev < 0.1


class TestLindistVoltages:
    def test_no_flow_network(self):
        doc = two_bus_dict(p_kw=0.0, q_kvar=0.0)
        m = feeder.load_feeder(doc)
        blocks = feeder.build_blocks(m)
        y = feeder.lindist_voltages(blocks, np.zeros(1), np.zeros(1))
        np.testing.assert_allclose(y, m.y0_node)

    def test_two_bus_constant_power_hand_solution(self):
        m = feeder.load_feeder(two_bus_dict(z=0.01 + 0.02j))
        blocks = feeder.build_blocks(m)
        y = feeder.lindist_voltages(blocks, np.zeros(1), np.zeros(1))
        # K = I: Y = Y0 - 2r p0 - 2x q0
        assert y[0] == pytest.approx(1.0 - 2 * 0.01 * 0.1 - 2 * 0.02 * 0.05)

    def test_voltage_from_Y(self):
        assert feeder.voltage_from_Y(1.0, 1.0) == pytest.approx(1.0)
        assert feeder.voltage_from_Y(1.02, 1.0) == pytest.approx(1.01)
        assert feeder.voltage_from_Y(0.98, 1.0) == pytest.approx(0.99)

    def test_voltage_from_Y_second_order_bound(self):
        rng = np.random.default_rng(8)
        y0 = 1.0
        for y in rng.uniform(0.81, 1.21, size=200):
            approx = feeder.voltage_from_Y(y, y0)
            exact = np.sqrt(y)
            bound = (exact - np.sqrt(y0)) ** 2 / (2 * np.sqrt(y0))
            assert abs(approx - exact) <= bound + 1e-15


class TestLineFlows:
    def test_zero_case(self):
        m = feeder.load_feeder(two_bus_dict(p_kw=0.0, q_kvar=0.0))
        blocks = feeder.build_blocks(m)
        y = feeder.lindist_voltages(blocks, np.zeros(1), np.zeros(1))
        p_tl, q_tl = feeder.line_flows(blocks, y, np.zeros(1), np.zeros(1))
        np.testing.assert_allclose(p_tl, 0.0)
        np.testing.assert_allclose(q_tl, 0.0)

    def test_substation_conservation_sign(self):
        m = feeder.load_feeder(two_bus_dict(p_kw=1000.0, q_kvar=500.0))
        blocks = feeder.build_blocks(m)
        y = feeder.lindist_voltages(blocks, np.zeros(1), np.zeros(1))
        p_sub, q_sub = feeder.substation_flow(blocks, y, np.zeros(1), np.zeros(1))
        assert p_sub == pytest.approx(-1.0)
        assert q_sub == pytest.approx(-0.5)

    def test_lossless_consistency(self, four_bus_model):
        rng = np.random.default_rng(4)
        m = four_bus_model
        blocks = feeder.build_blocks(m)
        for _ in range(10):
            p_g = rng.uniform(-0.2, 0.2, m.n_nodes)
            q_g = rng.uniform(-0.1, 0.1, m.n_nodes)
            y = feeder.lindist_voltages(blocks, p_g, q_g)
            p_tl, q_tl = feeder.line_flows(blocks, y, p_g, q_g)
            p_net, q_net = feeder.net_injections(blocks, y, p_g, q_g)
            root_cols = [k for k, (lidx, _) in enumerate(m.linephases)
                         if m.oriented[lidx].up == m.substation_bus]
            assert np.sum(p_tl[root_cols]) == pytest.approx(-np.sum(p_net), abs=1e-9)
            assert np.sum(q_tl[root_cols]) == pytest.approx(-np.sum(q_net), abs=1e-9)


class TestBfmOracle:
    def test_no_load_flat_voltage(self):
        m = feeder.load_feeder(two_bus_dict(p_kw=0.0, q_kvar=0.0))
        res = feeder.bfm_oracle(m, np.zeros(1), np.zeros(1))
        np.testing.assert_allclose(res.v_mag, 1.0, atol=1e-12)
        assert abs(res.s_sub) < 1e-12

    def test_two_bus_matches_scalar_newton(self):
        z = 0.01 + 0.02j
        m = feeder.load_feeder(two_bus_dict(z=z, p_kw=100.0, q_kvar=50.0))
        res = feeder.bfm_oracle(m, np.zeros(1), np.zeros(1), tol=1e-12)
        expect = hand_two_bus_vmag(z, 0.1 + 0.05j)
        assert res.v_mag[0] == pytest.approx(expect, abs=1e-9)

    def test_losses_positive(self, four_bus_model):
        m = four_bus_model
        res = feeder.bfm_oracle(m, np.zeros(m.n_nodes), np.zeros(m.n_nodes))
        total_load_pu = np.sum(m.p0)  # ZIP evaluated near 1 pu stays close
        assert res.s_sub.real > 0.95 * total_load_pu * 0.9

    def test_linearization_close_on_small_feeder(self, four_bus_model):
        m = four_bus_model
        blocks = feeder.build_blocks(m)
        rng = np.random.default_rng(11)
        for _ in range(5):
            p_g = rng.uniform(0.0, 0.25, m.n_nodes)
            q_g = rng.uniform(-0.1, 0.1, m.n_nodes)
            res = feeder.bfm_oracle(m, p_g, q_g)
            y = feeder.lindist_voltages(blocks, p_g, q_g)
            assert np.max(np.abs(np.sqrt(y) - res.v_mag)) < 0.01

    def test_zip_voltage_dependence(self):
        # constant-impedance load draws less power at depressed voltage
        m_cp = feeder.load_feeder(two_bus_dict(z=0.05 + 0.1j, p_kw=300.0,
                                               q_kvar=100.0, zip_coeffs=(1, 0, 0)))
        m_cz = feeder.load_feeder(two_bus_dict(z=0.05 + 0.1j, p_kw=300.0,
                                               q_kvar=100.0, zip_coeffs=(0, 1, 0)))
        r_cp = feeder.bfm_oracle(m_cp, np.zeros(1), np.zeros(1))
        r_cz = feeder.bfm_oracle(m_cz, np.zeros(1), np.zeros(1))
        assert r_cz.s_sub.real < r_cp.s_sub.real
        assert r_cz.v_mag[0] > r_cp.v_mag[0]


class TestPartition:
    def test_full_observability_degenerate(self, four_bus_model):
        m = four_bus_model
        blocks = feeder.build_blocks(m)
        part = feeder.make_partition(m, m.node_ids)
        pb = feeder.partition_blocks(blocks, part)
        assert pb.k1.shape == (m.n_nodes, 0)
        np.testing.assert_allclose(pb.koo, blocks.kb)
        np.testing.assert_allclose(pb.c2, m.y0_node)

    def test_block_shapes(self, four_bus_model):
        m = four_bus_model
        blocks = feeder.build_blocks(m)
        part = feeder.make_partition(m)
        pb = feeder.partition_blocks(blocks, part)
        n_o, n_u = part.n_o, part.n_u
        assert n_o + n_u == m.n_nodes
        assert pb.koo.shape == (n_o, n_o)
        assert pb.kou.shape == (n_u, n_o)
        assert pb.kuo.shape == (n_o, n_u)
        assert pb.kuu.shape == (n_u, n_u)
        assert pb.k1.shape == (n_o, n_u)
        assert pb.c2.shape == (n_o,)

    def test_permutation_round_trip(self, four_bus_model):
        m = four_bus_model
        blocks = feeder.build_blocks(m)
        part = feeder.make_partition(m)
        pb = feeder.partition_blocks(blocks, part)
        o, u = part.observable, part.unobservable
        kb = np.zeros_like(blocks.kb)
        kb[np.ix_(o, o)] = pb.koo
        kb[np.ix_(u, o)] = pb.kou
        kb[np.ix_(o, u)] = pb.kuo
        kb[np.ix_(u, u)] = pb.kuu
        np.testing.assert_allclose(kb, blocks.kb, atol=1e-15)

    def test_controllable_must_be_observable(self, four_bus_model):
        m = four_bus_model
        blocks = feeder.build_blocks(m)
        part = feeder.make_partition(m, ["t1.a", "t1.b"])  # excludes DER nodes
        with pytest.raises(InvalidPartition):
            feeder.partition_blocks(blocks, part)


class TestObservableVoltages:
    def test_full_observability_matches_lindist(self, four_bus_model):
        m = four_bus_model
        blocks = feeder.build_blocks(m)
        pb = feeder.partition_blocks(blocks, feeder.make_partition(m, m.node_ids))
        rng = np.random.default_rng(3)
        p_g = rng.uniform(-0.2, 0.3, m.n_nodes)
        q_g = rng.uniform(-0.2, 0.2, m.n_nodes)
        p_o, q_o = feeder.observable_net_injections(pb, p_g, q_g)
        y_o = feeder.observable_voltages(pb, p_o, q_o)
        y = feeder.lindist_voltages(blocks, p_g, q_g)
        np.testing.assert_allclose(y_o, y, atol=1e-9)

    def test_ground_truth_k1_c2_identity(self, four_bus_model):
        m = four_bus_model
        blocks = feeder.build_blocks(m)
        pb = feeder.partition_blocks(blocks, feeder.make_partition(m))
        rng = np.random.default_rng(9)
        for _ in range(5):
            p_g = np.zeros(m.n_nodes)
            q_g = np.zeros(m.n_nodes)
            for node in m.der_nodes:
                p_g[node] = rng.uniform(0.0, 0.3)
                q_g[node] = rng.uniform(-0.15, 0.15)
            p_o, q_o = feeder.observable_net_injections(pb, p_g, q_g)
            y_o = feeder.observable_voltages(pb, p_o, q_o)
            y_full = feeder.lindist_voltages(blocks, p_g, q_g)
            np.testing.assert_allclose(y_o, y_full[pb.partition.observable],
                                       atol=1e-9)

    def test_k1_zero_reduces_to_isolated_form(self, four_bus_model):
        m = four_bus_model
        blocks = feeder.build_blocks(m)
        pb = feeder.partition_blocks(blocks, feeder.make_partition(m))
        n_o = pb.partition.n_o
        k1 = np.zeros_like(pb.k1)
        c2 = m.y0_node[pb.partition.observable]
        p_o = np.zeros(n_o)
        q_o = np.zeros(n_o)
        y_o = feeder.observable_voltages(pb, p_o, q_o, k1=k1, c2=c2)
        expect = numkit.solve_linear(np.eye(n_o) + pb.koo, c2)
        np.testing.assert_allclose(y_o, expect, atol=1e-12)

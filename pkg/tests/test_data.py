import shutil

import numpy as np
import pytest

from gridcoord import data as bundle
from gridcoord import feeder
from gridcoord.errors import ChecksumMismatch, ParseError


class TestBundle:
    def test_list_scenarios(self):
        names = bundle.list_scenarios()
        for expected in ("tiny-2bus", "feeder13-highpv", "feeder13-lowpv",
                         "feeder13-extreme", "feeder40-highpv"):
            assert expected in names

    def test_tiny_2bus(self):
        sc = bundle.load_scenario("tiny-2bus")
        assert sc.feeder.n_nodes == 1
        assert len(sc.feeder.der_nodes) == 1
        assert sc.p_available_kw[0] == pytest.approx(300.0)

    def test_feeder13_highpv_der_layout(self):
        sc = bundle.load_scenario("feeder13-highpv")
        assert len(sc.feeder.der_nodes) == 9
        der_buses = sorted({d.bus for d in sc.feeder.ders})
        assert der_buses == ["634", "675", "680"]
        np.testing.assert_allclose(sc.p_available_kw, 300.0)
        assert sc.transmission is not None

    def test_feeder13_highpv_overvoltage_exists(self):
        # the defining property of the scenario: uncontrolled full output
        # pushes some bus-phase above the 1.05 pu planning limit
        sc = bundle.load_scenario("feeder13-highpv")
        m = sc.feeder
        p_g = np.zeros(m.n_nodes)
        for k, node in enumerate(m.der_nodes):
            p_g[node] = sc.p_available_kw[k] / m.s_base_kva
        res = feeder.bfm_oracle(m, p_g, np.zeros(m.n_nodes))
        assert res.v_mag.max() > 1.05

    def test_feeder40_size(self):
        sc = bundle.load_scenario("feeder40-highpv")
        assert 36 <= sc.feeder.n_nodes <= 45
        assert len(sc.feeder.der_nodes) == 12

    def test_bench_candidates(self):
        sc = bundle.load_scenario("feeder13-bench")
        assert len(sc.feeder.der_nodes) >= 21

    def test_unknown_scenario(self):
        with pytest.raises(ParseError):
            bundle.load_scenario("does-not-exist")

    def test_tampered_file_rejected(self, tmp_path):
        root = tmp_path / "data"
        shutil.copytree(bundle.data_root(), root)
        victim = root / "feeders" / "tiny2.json"
        victim.write_text(victim.read_text().replace("100.0", "101.0"))
        with pytest.raises(ChecksumMismatch):
            bundle.load_scenario("tiny-2bus", root=root)

    def test_unlisted_file_rejected(self, tmp_path):
        root = tmp_path / "data"
        shutil.copytree(bundle.data_root(), root)
        (root / "scenarios" / "rogue.json").write_text("{}")
        with pytest.raises(ChecksumMismatch):
            bundle.load_scenario("rogue", root=root)

    def test_all_bundled_scenarios_load(self):
        for name in bundle.list_scenarios():
            sc = bundle.load_scenario(name)
            assert sc.feeder.n_nodes > 0
            blocks = feeder.build_blocks(sc.feeder)
            assert blocks.k.shape == (sc.feeder.n_nodes, sc.feeder.n_nodes)

"""Constant chain: frozen references, overflow path, admissibility."""

import json
import math

import numpy as np
import pytest

from parareg import constants as C

GOLDEN_ARGS = dict(d=1, lam=1.0, Lam=1.0, theta=0.75, R=0.06)

# reference values computed with 60-digit arithmetic from the closed
# formulas for the golden configuration above (c2=1, g_norm=0, tau=1)
REF = {
    "nu": 9.656854249492380195,
    "eta": 0.05177669529663688110,
    "alpha": 0.1286796564403574268,
    "delta": 0.0001149892637611695874,
    "xi": 0.2603961612262504014,
    "barrier_b": 5.651657934476735089,
    "barrier_c": 645.736670942150899,
    "beta_barrier": 444.6521898108853989,
    "gamma": 2114764.273483989655,
    "sigma": 2.044779782368011988e-06,
    "kappa0": 88888.88888888888889,
    "epsilon": 7.269200930179863488e-09,
    "c_w2": 7.680605590825748774,
    "c_w3": 7.680606051635817069,
    "c_vol": 2.453736899129264121e-05,
}


class TestChain:
    def test_golden_values(self):
        chain = C.compute_constants(**GOLDEN_ARGS)
        for name, want in REF.items():
            assert getattr(chain, name) == pytest.approx(want, rel=5e-13), name

    def test_exact_members(self):
        chain = C.compute_constants(**GOLDEN_ARGS)
        assert chain.barrier_a == 0.875
        assert chain.C0 == 3072.0
        assert chain.C2 == 3840.0
        assert chain.C1 == 3840.0 + 7.0 / 6.0
        assert chain.M == chain.gamma + 1.0
        assert chain.epsilon_w3 == chain.epsilon
        assert chain.H1 == 0.5 * 0.06**2
        assert chain.H2 == 0.06**2 / 8.0

    def test_all_links_positive(self):
        chain = C.compute_constants(**GOLDEN_ARGS)
        for name, value, formula in chain.entries():
            assert value > 0.0, name
            assert math.isfinite(value), name
            assert formula

    def test_epsilon_in_unit_interval(self):
        chain = C.compute_constants(**GOLDEN_ARGS)
        assert 0.0 < chain.epsilon < 1.0

    def test_bit_reproducible(self):
        one = C.compute_constants(**GOLDEN_ARGS).to_dict()
        two = C.compute_constants(**GOLDEN_ARGS).to_dict()
        assert one.keys() == two.keys()
        for key in one:
            assert one[key] == two[key], key

    def test_overflow_configuration_keeps_logs(self):
        # steep theta with a wide ratio pushes the barrier amplitude
        # past float range; the chain must survive through the logs
        R = 0.9 * C.r_bound(3, 5.0)
        chain = C.compute_constants(3, 1.0, 5.0, 5.0, R)
        assert math.isinf(chain.beta_barrier)
        assert math.isinf(chain.gamma)
        assert math.isinf(chain.M)
        assert math.isfinite(chain.log_beta_barrier)
        assert math.isfinite(chain.log_gamma)
        assert math.isfinite(chain.log_M)
        assert 0.0 < chain.epsilon < 1.0
        assert math.isfinite(chain.c_w2) and chain.c_w2 > 0
        assert math.isfinite(chain.c_w3) and chain.c_w3 > 0

    def test_g_norm_enters_c0_and_w3(self):
        plain = C.compute_constants(**GOLDEN_ARGS)
        loaded = C.compute_constants(**GOLDEN_ARGS, g_norm=1.0)
        assert loaded.C0 == 768.0 * (1.0 * 2.0 + 3.0)
        assert loaded.c_w3 > plain.c_w3

    def test_json_round_trip(self):
        chain = C.compute_constants(**GOLDEN_ARGS)
        data = json.loads(chain.to_json())
        assert data["inputs"]["d"] == 1
        assert data["inputs"]["R"] == 0.06
        assert data["constants"]["epsilon"]["value"] == chain.epsilon
        assert "formula" in data["constants"]["c_w2"]


class TestSideConditions:
    def test_golden_admissible(self):
        chain = C.compute_constants(**GOLDEN_ARGS)
        sides = C.side_conditions(1, 0.75, 0.06, chain.kappa0)
        assert sides.ok
        assert sides.t1_plus_h1 < 0.0
        assert sides.s0_floor > -1.0

    def test_small_kappa0_breaks_drop(self):
        sides = C.side_conditions(1, 0.75, 0.06, 10.0)
        assert not sides.drop_ok
        assert not sides.ok

    def test_r_bound_values(self):
        assert C.r_bound(1, 0.75) == pytest.approx(1.0 / 14.0, rel=1e-15)
        assert C.r_bound(3, 5.0) == pytest.approx(
            1.0 / (82.0 * math.sqrt(3.0)), rel=1e-15)


class TestBounds:
    def test_dyadic_kappas(self):
        assert C.dyadic_kappas(3.0, 5) == [3.0, 6.0, 12.0, 24.0, 48.0]
        assert len(C.dyadic_kappas(24.0)) == 11

    def test_w2_anchor_and_decay(self):
        chain = C.compute_constants(**GOLDEN_ARGS)
        assert chain.w2_bound(chain.kappa0) == chain.c_w2
        assert chain.w2_bound(2.0 * chain.kappa0) < chain.c_w2
        ks = np.array(C.dyadic_kappas(chain.kappa0, 6))
        vals = chain.w2_bound(ks)
        assert np.all(np.diff(vals) < 0.0)

    def test_w3_anchor(self):
        chain = C.compute_constants(**GOLDEN_ARGS)
        assert chain.w3_bound(chain.kappa0) == chain.c_w3
        assert chain.w3_bound(4.0 * chain.kappa0) < chain.c_w3


class TestErrors:
    @pytest.mark.parametrize("kwargs,link", [
        (dict(d=4, lam=1.0, Lam=1.0, theta=1.0, R=0.05), "d"),
        (dict(d=1, lam=2.0, Lam=1.0, theta=1.0, R=0.05), "ellipticity"),
        (dict(d=1, lam=1.0, Lam=1.0, theta=0.5, R=0.05), "theta"),
        (dict(d=1, lam=1.0, Lam=1.0, theta=6.0, R=0.05), "theta"),
        (dict(d=1, lam=1.0, Lam=1.0, theta=1.0, R=1.0), "R"),
        (dict(d=1, lam=1.0, Lam=1.0, theta=1.0, R=0.05, c_vol=1.5), "c_vol"),
        (dict(d=1, lam=1.0, Lam=1.0, theta=1.0, R=0.05, c2=0.0), "inputs"),
        (dict(d=1, lam=1.0, Lam=1.0, theta=1.0, R=0.05, tau=0.0), "inputs"),
    ])
    def test_broken_links_raise(self, kwargs, link):
        with pytest.raises(C.ChainError) as err:
            C.compute_constants(**kwargs)
        assert err.value.link == link

    def test_chain_error_is_value_error(self):
        assert issubclass(C.ChainError, ValueError)

import pytest

from deltasparse.config import PRESETS, ConfigError, RunConfig


def test_defaults_valid_and_roundtrip():
    cfg = RunConfig()
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    q = cfg.quant_config()
    assert (q.weight.total_bits, q.weight.frac_bits, q.act.frac_bits, q.acc.frac_bits) == (8, 6, 8, 14)


@pytest.mark.parametrize("bad", [
    dict(gamma=1.2), dict(theta=-0.1), dict(M=6, N=4), dict(M=0), dict(freq_mhz=0),
    dict(weight_bits=9), dict(lidx_bits=17), dict(dram="sram"), dict(delta_alpha=0.0),
    dict(delta_alpha=0.1, epochs=5), dict(weight_bits=8, weight_frac=8), dict(overhead_cycles=-1),
])
def test_invalid(bad):
    with pytest.raises(ConfigError):
        RunConfig(**bad)


def test_nine_bit_message_is_clear():
    with pytest.raises(ConfigError, match="9 bits"):
        RunConfig(weight_bits=9)


def test_updated_ignores_none_and_rejects_unknown():
    cfg = RunConfig().updated(gamma=0.5, theta=None)
    assert cfg.gamma == 0.5 and cfg.theta == 0.0
    with pytest.raises(ConfigError):
        RunConfig().updated(bogus=1)


def test_presets():
    s = RunConfig().with_preset("spartus")
    assert (s.M, s.N, s.freq_mhz, s.lidx_bits) == (64, 8, 200.0, 8)
    e = RunConfig().with_preset("edge")
    assert (e.M, e.N, e.freq_mhz, e.lidx_bits, e.dram_bits_per_cycle) == (4, 1, 125.0, 10, 72)
    assert set(PRESETS) == {"spartus", "edge"}


def test_accelerator_config_mirrors_run_config():
    a = RunConfig(M=8, N=4, freq_mhz=100, overhead_cycles=5, dram="gddr6").accelerator(lidx_bits=6)
    assert (a.M, a.N, a.f_pl, a.pipeline_overhead, a.lidx_bits, a.dram) == (8, 4, 100e6, 5, 6, "gddr6")

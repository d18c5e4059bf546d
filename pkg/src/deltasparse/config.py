"""Run-wide configuration, stored in the CONFIG section and threaded through every stage."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .quant import FixedPointFormat, QuantConfig
from .sim import DEFAULT_OVERHEAD_CYCLES, DRAM_ENERGY_PJ_PER_BIT, AcceleratorConfig

# VAL entries are stored as one signed byte each
MAX_WEIGHT_BITS = 8


class ConfigError(ValueError):
    pass


PRESETS = {
    "spartus": dict(M=64, N=8, freq_mhz=200.0, lidx_bits=8, dram="ddr3", dram_bits_per_cycle=None),
    "edge": dict(M=4, N=1, freq_mhz=125.0, lidx_bits=10, dram="ddr3l", dram_bits_per_cycle=72),
}


@dataclass(frozen=True)
class RunConfig:
    gamma: float = 0.0
    theta: float = 0.0
    M: int = 4
    N: int = 2
    freq_mhz: float = 200.0
    seed: int = 0
    delta_alpha: float = 1.0
    epochs: int = 1
    overhead_cycles: int = DEFAULT_OVERHEAD_CYCLES
    weight_bits: int = 8
    weight_frac: int | None = None
    act_bits: int = 16
    act_frac: int | None = None
    acc_bits: int = 48
    lidx_bits: int | None = None  # None: just wide enough for H/M
    dram: str = "ddr3"
    dram_bits_per_cycle: int | None = None
    lut_size: int = 1024
    lut_clip: float = 8.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.theta < 0:
            raise ConfigError(f"theta must be non-negative, got {self.theta}")
        if self.M < 1 or self.N < 1:
            raise ConfigError(f"M and N must be positive, got M={self.M} N={self.N}")
        if self.M % self.N:
            raise ConfigError(f"M={self.M} is not divisible by N={self.N}")
        if self.freq_mhz <= 0:
            raise ConfigError("clock frequency must be positive")
        if self.overhead_cycles < 0:
            raise ConfigError("overhead cycles must be non-negative")
        if not 0.0 < self.delta_alpha <= 1.0:
            raise ConfigError(f"delta alpha must be in (0, 1], got {self.delta_alpha}")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        # step-then-prune: the last epoch runs at min(1, epochs * delta_alpha)
        if self.epochs * self.delta_alpha < 1.0 - 1e-9:
            raise ConfigError(
                f"{self.epochs} epochs at delta alpha {self.delta_alpha} never reach alpha=1, "
                "so the pruned matrix would not be column balanced")
        if not 2 <= self.weight_bits <= MAX_WEIGHT_BITS:
            raise ConfigError(
                f"weight width {self.weight_bits} bits is not supported; VAL storage holds "
                f"2..{MAX_WEIGHT_BITS} bit weights")
        if self.lidx_bits is not None and not 1 <= self.lidx_bits <= 16:
            raise ConfigError(f"lidx bits must be in 1..16, got {self.lidx_bits}")
        if self.dram not in DRAM_ENERGY_PJ_PER_BIT:
            raise ConfigError(f"unknown DRAM type {self.dram!r}")
        if self.dram_bits_per_cycle is not None and self.dram_bits_per_cycle < 1:
            raise ConfigError("DRAM bits per cycle must be positive")
        try:
            self.quant_config()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def quant_config(self) -> QuantConfig:
        wf = self.weight_bits - 2 if self.weight_frac is None else self.weight_frac
        af = self.act_bits // 2 if self.act_frac is None else self.act_frac
        return QuantConfig(FixedPointFormat(self.weight_bits, wf), FixedPointFormat(self.act_bits, af),
                           FixedPointFormat(self.acc_bits, wf + af), self.lut_size, self.lut_clip)

    def accelerator(self, lidx_bits: int | None = None) -> AcceleratorConfig:
        return AcceleratorConfig(M=self.M, N=self.N, f_pl=self.freq_mhz * 1e6,
                                 pipeline_overhead=self.overhead_cycles, weight_bits=self.weight_bits,
                                 lidx_bits=lidx_bits or self.lidx_bits or 8, dram=self.dram,
                                 dram_bits_per_cycle=self.dram_bits_per_cycle)

    def updated(self, **changes) -> "RunConfig":
        """Apply the non-None entries of ``changes``."""
        changes = {k: v for k, v in changes.items() if v is not None}
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return replace(self, **changes)

    def with_preset(self, name: str) -> "RunConfig":
        return replace(self, **PRESETS[name])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

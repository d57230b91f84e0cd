"""Scenario parameters for one Monte-Carlo grid point."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .afdm import AfdmConfig, SPEED_OF_LIGHT, default_c1

KMH = 1000.0 / 3600.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to simulate and estimate one scenario.

    Defaults reproduce the paper's simulation table (N=512, 90 GHz, 15 kHz,
    G0=1, d0=100 m, n=2.19/3.19, taps 1..20) at SNR 10 dB, v = 60 km/h.
    """

    n_sub: int = 512
    c1: float | None = None
    c2: float = 0.0
    delta_f: float = 15e3
    f_c: float = 90e9
    c_light: float = SPEED_OF_LIGHT
    k_v: int = 1
    num_paths: int = 3
    est_num_paths: int | None = None
    shape_m: float = 1.0
    g0: float = 1.0
    d0_true: float = 100.0
    velocity_kmh: float = 60.0
    snr_db: float = 10.0
    fading_exps: tuple[float, float] = (2.19, 3.19)
    tap_range: tuple[int, int] = (1, 20)
    trials: int = 1000
    seed: int = 0
    eps1: float = 1e-3
    eps2: float = 1e-3
    max_iter_ec: int = 1000
    max_iter_em: int = 1000
    d0_init: float = 10.0
    d0_bounds: tuple[float, float] = (0.1, 1e5)
    damping: float = 1.0
    relinearize: bool = True
    nu_tol: float = 1e-5
    drop_mode: str = "largest"
    exclude_nonconverged: bool = False
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for key in ("fading_exps", "tap_range", "d0_bounds"):
            object.__setattr__(self, key, tuple(getattr(self, key)))
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if self.est_num_paths is not None and not 1 <= self.est_num_paths <= self.num_paths:
            raise ValueError("est_num_paths must lie in [1, num_paths]")
        if self.shape_m < 0.5:
            raise ValueError("shape_m must be >= 0.5")
        if self.d0_true <= 0 or self.g0 <= 0:
            raise ValueError("d0_true and g0 must be positive")
        lo, hi = self.tap_range
        if not 1 <= lo <= hi < self.n_sub:
            raise ValueError(f"tap_range {self.tap_range} must satisfy 1 <= lo <= hi < n_sub")
        if self.num_paths - 1 > hi - lo + 1:
            raise ValueError("not enough distinct taps for the requested number of NLoS paths")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.drop_mode not in ("largest", "random"):
            raise ValueError("drop_mode must be 'largest' or 'random'")
        if self.nu_tol is not None and self.nu_tol <= 0:
            raise ValueError("nu_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")

    @property
    def velocity(self) -> float:
        """Target speed in m/s."""
        return self.velocity_kmh * KMH

    @property
    def n_est(self) -> int:
        return self.num_paths if self.est_num_paths is None else self.est_num_paths

    @property
    def afdm(self) -> AfdmConfig:
        c1 = self.c1
        if c1 is None:
            nu_max = self.velocity * self.f_c / (self.c_light * self.delta_f)
            c1 = default_c1(self.n_sub, nu_max, self.k_v)
        return AfdmConfig(n_sub=self.n_sub, c1=c1, c2=self.c2, delta_f=self.delta_f,
                          f_c=self.f_c, c_light=self.c_light, k_v=self.k_v)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("fading_exps", "tap_range", "d0_bounds"):
            d[key] = list(d[key])
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

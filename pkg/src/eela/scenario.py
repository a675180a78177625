"""Scenario description and the flat ``key = value`` config format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .acoustics import ChannelParams, power_for_range
from .game import GameParams
from .mobility import CurrentField
from .protocol import Policy, ProtocolConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    region_side_m: float = 2500.0
    n_sensors: int = 30
    n_anchors: int = 4
    policy: Policy = Policy.EELA
    current_speed_mps: float = 2.0
    game: GameParams = field(default_factory=lambda: GameParams(
        total_energy_anchor=0.01, total_energy_sensor=0.001))
    channel: ChannelParams = field(default_factory=ChannelParams)
    replications: int = 100
    seed: int = 1
    horizon_s: float = 120.0

    p_max_watts: float = 100.0
    # None means the region diagonal, i.e. Q_ini = P_max
    initial_range_m: float | None = None
    fixed_min_range_m: float = 2000.0
    reach_margin_m: float = 100.0
    twohop_power_rule: str = "range"
    wakeup_jitter_s: float = 6.0
    request_jitter_s: float = 30.0
    retry_jitter_s: float = 8.0
    reply_backoff_s: float = 0.5
    max_retries: int = 3
    energy_denominator: str = "localized"
    idle_power_w: float = 0.1
    sleep_power_w: float = 1e-4
    mobility_dt_s: float = 0.1
    meander_wavelength_m: float = 2500.0
    meander_amplitude_m: float = 300.0
    phase_speed: float = 0.1

    def __post_init__(self):
        if isinstance(self.policy, str):
            object.__setattr__(self, "policy", Policy.parse(self.policy))
        for name in ("n_sensors", "n_anchors", "replications"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("region_side_m", "horizon_s", "p_max_watts", "fixed_min_range_m", "mobility_dt_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if min(self.current_speed_mps, self.wakeup_jitter_s, self.request_jitter_s,
               self.retry_jitter_s, self.reply_backoff_s) < 0:
            raise ConfigError("speed, jitter and backoff must be non-negative")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")
        if self.energy_denominator not in ("localized", "all"):
            raise ConfigError("energy_denominator must be 'localized' or 'all'")
        if self.twohop_power_rule not in ("range", "sum"):
            raise ConfigError("twohop_power_rule must be 'range' or 'sum'")

    @property
    def diagonal_m(self) -> float:
        return self.region_side_m * math.sqrt(3.0)

    @property
    def channel_params(self) -> ChannelParams:
        """Channel whose detection threshold makes ``P_max`` reach exactly the region diagonal."""
        base = replace(self.channel, max_range_m=max(self.channel.max_range_m, 2.0 * self.diagonal_m))
        return base.calibrated(self.p_max_watts, self.diagonal_m)

    @property
    def game_params(self) -> GameParams:
        return replace(self.game, n_sensors=self.n_sensors, region_side_m=self.region_side_m,
                       p_max_watts=self.p_max_watts, q_max_watts=self.p_max_watts)

    @property
    def current_field(self) -> CurrentField:
        return CurrentField(peak_speed_mps=self.current_speed_mps,
                            meander_wavelength_m=self.meander_wavelength_m,
                            meander_amplitude_m=self.meander_amplitude_m,
                            phase_speed=self.phase_speed, jet_width_m=self.region_side_m / 2,
                            center_y_m=self.region_side_m / 2)

    def protocol_config(self) -> ProtocolConfig:
        chan = self.channel_params
        r_ini = self.diagonal_m if self.initial_range_m is None else self.initial_range_m
        return ProtocolConfig(policy=self.policy,
                              q_ini_watts=min(power_for_range(r_ini, chan), self.p_max_watts),
                              fixed_min_watts=min(power_for_range(self.fixed_min_range_m, chan),
                                                  self.p_max_watts),
                              reach_margin_m=self.reach_margin_m,
                              drift_mps=2.0 * self.current_speed_mps,
                              twohop_power_rule=self.twohop_power_rule)

    @property
    def collection_window_s(self) -> float:
        return 2.0 * self.diagonal_m / self.channel.sound_speed_mps

    @property
    def retry_timeout_s(self) -> float:
        one_way = self.diagonal_m / self.channel.sound_speed_mps
        return self.collection_window_s + self.reply_backoff_s + 2.0 * one_way

    def with_overrides(self, **kw) -> "Scenario":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


_GAME_KEYS = {f.name for f in dataclasses.fields(GameParams)} - {
    "n_sensors", "region_side_m", "p_max_watts", "q_max_watts"}
_CHANNEL_KEYS = {"frequency_khz", "spreading_k", "a_norm", "sound_speed_mps", "min_range_m"}
_SCENARIO_KEYS = {f.name for f in dataclasses.fields(Scenario)} - {"game", "channel"}


def _coerce(text: str, like):
    if isinstance(like, Policy):
        return Policy.parse(text)
    if isinstance(like, bool):
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float) or like is None:
        return None if text.lower() == "none" else float(text)
    return text


def parse_config(text: str, base: Scenario | None = None) -> Scenario:
    """Parse ``key = value`` lines (``#`` starts a comment); unknown keys are errors."""
    base = base or Scenario()
    top, game, chan = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _GAME_KEYS:
                game[key] = _coerce(value, getattr(base.game, key))
            elif key in _CHANNEL_KEYS:
                chan[key] = _coerce(value, getattr(base.channel, key))
            elif key in _SCENARIO_KEYS:
                top[key] = _coerce(value, getattr(base, key))
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    try:
        return replace(base, game=replace(base.game, **game), channel=replace(base.channel, **chan), **top)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)

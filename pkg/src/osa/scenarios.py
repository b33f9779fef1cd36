"""Experiment presets: the three symmetric-channel settings studied in the
numerical experiments, all with four channels and the same price set."""

from __future__ import annotations

from dataclasses import dataclass

from .channel import ChannelParams
from .solver import RewardParams


@dataclass(frozen=True)
class Scenario:
    name: str
    n_channels: int
    alpha: float
    beta: float
    phi: float
    c_s: float
    p_p: float
    p_3g: float
    gamma: float

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(self.alpha, self.beta)

    def channels(self) -> list:
        return [self.channel] * self.n_channels

    @property
    def rewards(self) -> RewardParams:
        return RewardParams(
            phi=self.phi, c_s=self.c_s, p_p=self.p_p, p_3g=self.p_3g, gamma=self.gamma
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_channels": self.n_channels,
            "alpha": self.alpha,
            "beta": self.beta,
            "phi": self.phi,
            "c_s": self.c_s,
            "p_p": self.p_p,
            "p_3g": self.p_3g,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(**d)


SCENARIOS = {
    1: Scenario("scenario-1-often-occupied", 4, 0.15, 0.10, 350.0, 50.0, 100.0, 800.0, 10.0),
    2: Scenario("scenario-2-often-idle", 4, 0.85, 0.70, 350.0, 50.0, 100.0, 800.0, 10.0),
    3: Scenario("scenario-3-low-transition", 4, 0.95, 0.05, 350.0, 50.0, 100.0, 800.0, 10.0),
}

"""Synthetic randomized trials with known treatment effects.

Setting 1: ``C ~ Bernoulli(0.5)``, ``T ~ Bernoulli(0.3)``,
``Y = 0.5 C + 1.5 T + 2 T C + N(0, 1)``; true ATE 2.5.

Setting 2: as Setting 1 with ``T ~ Bernoulli(0.5)``.

Setting 3: five covariates with a nonlinear outcome::

    C1 ~ Bernoulli(0.5)
    C2 = C1 + U,  U ~ Uniform(-0.5, 1)
    C3, C4 ~ N(0, 1)
    C5 = C3 + C4 + N(0, 1)
    T  ~ Bernoulli(0.3)
    Y  = 0.5 C4 + 2 T C1 C2 - 1.5 T + C2 C3 + C5 + N(0, 1)

which gives ATE ``2 E[C1 C2] - 1.5 = -0.25``. ``c2_sign=-1`` selects
``C2 = C1 - U`` instead (ATE -0.75).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import TabularDataset, make_rng
from .exceptions import ConfigError
from .sampling import ConfoundingFunction, Logistic

SETTING_IDS = ("setting1", "setting2", "setting3")


@dataclass(frozen=True)
class DgpSetting:
    id: str
    n: int = 100_000
    c2_sign: int = 1

    def __post_init__(self):
        if self.id not in SETTING_IDS:
            raise ConfigError(f"unknown setting {self.id!r}; expected one of {', '.join(SETTING_IDS)}")
        if self.c2_sign not in (1, -1):
            raise ConfigError("c2_sign must be +1 or -1")

    @property
    def treated_prob(self) -> float:
        return 0.5 if self.id == "setting2" else 0.3

    @property
    def true_ate(self) -> float:
        if self.id == "setting3":
            # E[C1 C2] = E[C1] + c2_sign * E[C1] E[U] with E[U] = 0.25
            return 2 * (0.5 + self.c2_sign * 0.5 * 0.25) - 1.5
        return 1.5 + 2 * 0.5

    @property
    def oracle_adjustment_terms(self) -> tuple:
        """Outcome regression terms besides the intercept and ``T``."""
        if self.id == "setting3":
            return (("C4",), ("T", "C1", "C2"), ("C2", "C3"), ("C5",))
        return (("C",), ("T", "C"))

    @property
    def covariate_names(self) -> tuple:
        return ("C1", "C2", "C3", "C4", "C5") if self.id == "setting3" else ("C",)

    def with_n(self, n: int) -> "DgpSetting":
        return replace(self, n=n)


def get_setting(setting_id: str, n: int = 100_000, **kw) -> DgpSetting:
    return DgpSetting(str(setting_id).lower(), n=n, **kw)


def generate(setting: DgpSetting | str, rng, n: int | None = None) -> TabularDataset:
    """Draw one synthetic RCT. Columns are drawn in a fixed order for reproducibility."""
    if isinstance(setting, str):
        setting = get_setting(setting)
    n = setting.n if n is None else n
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = make_rng(rng)
    if setting.id in ("setting1", "setting2"):
        c = rng.binomial(1, 0.5, n).astype(float)
        t = rng.binomial(1, setting.treated_prob, n)
        y = 0.5 * c + 1.5 * t + 2.0 * t * c + rng.standard_normal(n)
        return TabularDataset(c.reshape(-1, 1), t, y, ("C",))

    c1 = rng.binomial(1, 0.5, n).astype(float)
    c2 = c1 + setting.c2_sign * rng.uniform(-0.5, 1.0, n)
    c3 = rng.standard_normal(n)
    c4 = rng.standard_normal(n)
    c5 = c3 + c4 + rng.standard_normal(n)
    t = rng.binomial(1, setting.treated_prob, n)
    y = 0.5 * c4 + 2.0 * t * c1 * c2 - 1.5 * t + c2 * c3 + c5 + rng.standard_normal(n)
    return TabularDataset(np.column_stack([c1, c2, c3, c4, c5]), t, y, setting.covariate_names)


def dgp_confounding_function(setting: DgpSetting | str) -> ConfoundingFunction:
    """Designer confounding function used with each setting."""
    sid = setting if isinstance(setting, str) else setting.id
    if sid in ("setting1", "setting2"):
        return Logistic(-1.0, ((("C",), 2.5),))
    if sid == "setting3":
        return Logistic(
            0.0,
            (
                (("C1",), 0.5),
                (("C2",), -0.7),
                (("C3",), 1.2),
                (("C4",), 1.5),
                (("C5",), -1.2),
                (("C1", "C2"), 0.5),
            ),
        )
    raise ConfigError(f"unknown setting {sid!r}")


def strength_confounding_function(strength: float) -> Logistic:
    """``expit(-1 + strength * C)``, the Setting 1 family used for strength sweeps."""
    return Logistic(-1.0, ((("C",), float(strength)),))

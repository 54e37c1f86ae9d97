"""Formulation descriptor shared by the solvers, studies, and CLI."""

from dataclasses import dataclass

from .errors import ValidationError

_NAMES = {
    "rk": ("rk", False),
    "gmls": ("gmls", False),
    "ba-rk": ("rk", True),
    "ba-gmls": ("gmls", True),
}


@dataclass(frozen=True)
class Formulation:
    """Weight route plus the bond-associated stabilization switch."""

    route: str = "rk"
    bond_associated: bool = True

    def __post_init__(self):
        if self.route not in ("rk", "gmls"):
            raise ValidationError(f"unknown route {self.route!r}")

    @classmethod
    def parse(cls, name: str) -> "Formulation":
        key = name.strip().lower()
        if key not in _NAMES:
            raise ValidationError(
                f"unknown formulation {name!r}; choose rk, gmls, ba-rk, ba-gmls")
        route, ba = _NAMES[key]
        return cls(route=route, bond_associated=ba)

    @property
    def label(self) -> str:
        return ("ba-" if self.bond_associated else "") + self.route


ALL_FORMULATIONS = tuple(Formulation.parse(n) for n in _NAMES)

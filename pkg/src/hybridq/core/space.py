"""Mode specifications and tensor-product spaces."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import prod
from typing import Iterable

from ..errors import InvalidArgument

BOSON = "boson"
SPIN_HALF = "spin_half"
MULTILEVEL = "multilevel"
_KINDS = (BOSON, SPIN_HALF, MULTILEVEL)


@dataclass(frozen=True)
class ModeSpec:
    """One tensor factor: a truncated boson, a spin-1/2 or a d-level system.

    Use the ``boson``/``spin``/``multilevel`` constructors rather than
    passing ``dim`` by hand.
    """

    label: str
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidArgument(f"unknown mode kind {self.kind!r}")
        if not isinstance(self.label, str) or not self.label:
            raise InvalidArgument("mode label must be a non-empty string")
        if self.kind == SPIN_HALF and self.dim != 2:
            raise InvalidArgument("spin_half modes have dimension 2")
        if int(self.dim) != self.dim or self.dim < 2:
            raise InvalidArgument(
                f"mode {self.label!r}: dimension/cutoff must be an integer >= 2, "
                f"got {self.dim!r}")

    @classmethod
    def boson(cls, label: str, cutoff: int) -> "ModeSpec":
        return cls(label, BOSON, cutoff)

    @classmethod
    def spin(cls, label: str) -> "ModeSpec":
        return cls(label, SPIN_HALF, 2)

    @classmethod
    def multilevel(cls, label: str, dim: int) -> "ModeSpec":
        return cls(label, MULTILEVEL, dim)

    @property
    def is_boson(self) -> bool:
        return self.kind == BOSON


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered tensor product of modes; the first mode is the slowest index."""

    modes: tuple[ModeSpec, ...]

    def __init__(self, modes: Iterable[ModeSpec]):
        modes = tuple(modes)
        if not modes:
            raise InvalidArgument("a space needs at least one mode")
        labels = [m.label for m in modes]
        if len(set(labels)) != len(labels):
            raise InvalidArgument(f"duplicate mode labels in {labels}")
        object.__setattr__(self, "modes", modes)

    @cached_property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.dim for m in self.modes)

    @cached_property
    def dim(self) -> int:
        return prod(self.dims)

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidArgument(
                f"no mode labelled {label!r} in space {self.labels}") from None

    def mode(self, label: str) -> ModeSpec:
        return self.modes[self.index(label)]

    def basis_index(self, levels: dict[str, int]) -> int:
        """Flat index of the product basis state given per-mode levels.

        Modes not named in ``levels`` are taken in level 0.
        """
        unknown = set(levels) - set(self.labels)
        if unknown:
            raise InvalidArgument(f"unknown mode labels {sorted(unknown)}")
        idx = 0
        for mode in self.modes:
            n = int(levels.get(mode.label, 0))
            if not 0 <= n < mode.dim:
                raise InvalidArgument(
                    f"level {n} out of range for mode {mode.label!r} (dim {mode.dim})")
            idx = idx * mode.dim + n
        return idx

    def __repr__(self):
        inner = ", ".join(f"{m.label}:{m.kind}[{m.dim}]" for m in self.modes)
        return f"CompositeSpace({inner})"


def single_mode_space(mode: ModeSpec) -> CompositeSpace:
    return CompositeSpace((mode,))

"""Global latent layout: which shared factors each modality sees.

Indices follow two conventions. Global shared factors ``c_1..c_{d_c}`` and the
extended-vector coordinates ``1..d_e`` are 1-based, as in every report.
Column positions inside latent matrices are 0-based.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

from pairlat.errors import SpecificationError
from pairlat.world.graph import ModalityGraph


@dataclass(frozen=True)
class LatentSpec:
    graph: ModalityGraph
    n_shared: int
    shared_maps: tuple[tuple[int, ...], ...]
    specific_dims: tuple[int, ...]

    def __post_init__(self):
        M = self.graph.n_modalities
        if len(self.shared_maps) != M or len(self.specific_dims) != M:
            raise SpecificationError(
                f"Expected {M} shared maps and specific dims, got "
                f"{len(self.shared_maps)} and {len(self.specific_dims)}"
            )
        if self.n_shared < 0:
            raise SpecificationError(f"Global shared count must be >= 0, got {self.n_shared}")

        covered = set()
        for m, pi in enumerate(self.shared_maps, start=1):
            if len(set(pi)) != len(pi):
                raise SpecificationError(f"shared map {list(pi)} is not injective", m)
            for r in pi:
                if not 1 <= r <= self.n_shared:
                    raise SpecificationError(
                        f"shared index c{r} outside [1, {self.n_shared}]", m
                    )
            if self.specific_dims[m - 1] < 0:
                raise SpecificationError("specific dimension must be >= 0", m)
            if len(pi) + self.specific_dims[m - 1] == 0:
                raise SpecificationError("modality has no latent dimensions", m)
            covered.update(pi)

        missing = sorted(set(range(1, self.n_shared + 1)) - covered)
        if missing:
            raise SpecificationError(
                f"global shared factors {['c%d' % r for r in missing]} are not "
                "used by any modality"
            )

    # Per-modality dimensions

    def d_c(self, m: int) -> int:
        return len(self.pi(m))

    def d_s(self, m: int) -> int:
        return self.specific_dims[self._index(m)]

    def d_x(self, m: int) -> int:
        return self.d_c(m) + self.d_s(m)

    def pi(self, m: int) -> tuple[int, ...]:
        return self.shared_maps[self._index(m)]

    def _index(self, m: int) -> int:
        if not 1 <= m <= self.graph.n_modalities:
            raise SpecificationError(f"unknown modality {m}")
        return m - 1

    # Global latent matrix layout: [c_1..c_dc, s^(1), ..., s^(M)]

    @property
    def n_specific(self) -> int:
        return sum(self.specific_dims)

    @property
    def n_latent(self) -> int:
        return self.n_shared + self.n_specific

    def shared_columns(self, m: int) -> tuple[int, ...]:
        return tuple(r - 1 for r in self.pi(m))

    def specific_columns(self, m: int) -> tuple[int, ...]:
        start = self.n_shared + sum(self.specific_dims[: self._index(m)])
        return tuple(range(start, start + self.d_s(m)))

    def latent_columns(self, m: int) -> tuple[int, ...]:
        return self.shared_columns(m) + self.specific_columns(m)

    @cached_property
    def node_names(self) -> tuple[str, ...]:
        names = [f"c{r}" for r in range(1, self.n_shared + 1)]
        for m in self.graph.modalities:
            names += [f"s{m}_{k}" for k in range(1, self.d_s(m) + 1)]
        return tuple(names)

    def owner_of_specific(self, column: int) -> int:
        for m in self.graph.modalities:
            if column in self.specific_columns(m):
                return m
        raise SpecificationError(f"column {column} is not a specific latent")

    # Extended shared vector z_e^c

    @property
    def d_e(self) -> int:
        return sum(len(pi) for pi in self.shared_maps)

    def offset(self, m: int) -> int:
        return sum(len(pi) for pi in self.shared_maps[: self._index(m)])

    def index_set(self, m: int) -> tuple[int, ...]:
        """``I_m``: 1-based extended coordinates occupied by z_c^(m)."""

        o = self.offset(m)
        return tuple(range(o + 1, o + self.d_c(m) + 1))

    def overlap_set(self, m: int, n: int) -> tuple[int, ...]:
        """``I_{m,n}``: coordinates of z_c^(m) whose factor also appears in z_c^(n)."""

        if m == n:
            raise SpecificationError(f"overlap needs two distinct modalities, got {m}")
        self._index(n)
        other = set(self.pi(n))
        o = self.offset(m)
        return tuple(o + k + 1 for k, r in enumerate(self.pi(m)) if r in other)

    def non_overlap_set(self, m: int, n: int) -> tuple[int, ...]:
        """``I_{m|n} = I_m \\ I_{m,n}``."""

        overlap = set(self.overlap_set(m, n))
        return tuple(u for u in self.index_set(m) if u not in overlap)

    @cached_property
    def extended_factors(self) -> tuple[int, ...]:
        """Global factor index ``r`` carried by each extended coordinate."""

        return tuple(r for pi in self.shared_maps for r in pi)

    def correspondence(self, source: int, target: int) -> tuple[tuple[int, int], ...]:
        """Local index pairs ``(k_source, k_target)`` carrying the same factor,
        ordered as ``I_{source,target}``."""

        target_pos = {r: k for k, r in enumerate(self.pi(target))}
        return tuple(
            (k, target_pos[r]) for k, r in enumerate(self.pi(source)) if r in target_pos
        )


def build_latent_spec(
    graph: ModalityGraph,
    n_shared: int,
    shared: Sequence[Sequence[int]],
    specific: Sequence[int] | Mapping[int, int],
) -> LatentSpec:
    """Validate a latent layout: ``shared[m-1]`` is the map pi_m as a list of
    1-based global factor indices."""

    if isinstance(specific, Mapping):
        specific = [int(specific.get(m, 0)) for m in graph.modalities]

    return LatentSpec(
        graph=graph,
        n_shared=int(n_shared),
        shared_maps=tuple(tuple(int(r) for r in pi) for pi in shared),
        specific_dims=tuple(int(d) for d in specific),
    )

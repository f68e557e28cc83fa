from dataclasses import dataclass
from typing import Iterable, Sequence

from pairlat.errors import GraphError

Edge = tuple[int, int]


def normalize_edge(edge: Sequence[int]) -> Edge:
    if len(edge) != 2:
        raise GraphError(f"An edge joins exactly two modalities, got {list(edge)}")
    i, j = int(edge[0]), int(edge[1])
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class ModalityGraph:
    """Undirected graph over modalities 1..M whose edges are observed pairs."""

    n_modalities: int
    edges: tuple[Edge, ...]

    def __post_init__(self):
        if self.n_modalities < 1:
            raise GraphError(f"Need at least one modality, got {self.n_modalities}")

        seen = set()
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"Self-loop on modality {i}")
            for m in (i, j):
                if not 1 <= m <= self.n_modalities:
                    raise GraphError(
                        f"Edge {{{i},{j}}} leaves [1, {self.n_modalities}]"
                    )
            if (i, j) in seen:
                raise GraphError(f"Duplicate edge {{{i},{j}}}")
            seen.add((i, j))

    @classmethod
    def build(cls, n_modalities: int, edges: Iterable[Sequence[int]]) -> "ModalityGraph":
        return cls(int(n_modalities), tuple(normalize_edge(e) for e in edges))

    @property
    def modalities(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_modalities + 1))

    def has_edge(self, i: int, j: int) -> bool:
        return normalize_edge((i, j)) in self.edges

    def neighbors(self, i: int) -> tuple[int, ...]:
        if not 1 <= i <= self.n_modalities:
            raise GraphError(f"Modality {i} is not in the graph")
        return tuple(
            sorted({b if a == i else a for a, b in self.edges if i in (a, b)})
        )

    def without_edge(self, i: int, j: int) -> "ModalityGraph":
        drop = normalize_edge((i, j))
        if drop not in self.edges:
            raise GraphError(f"Edge {{{i},{j}}} is not in the graph")
        return ModalityGraph(self.n_modalities, tuple(e for e in self.edges if e != drop))


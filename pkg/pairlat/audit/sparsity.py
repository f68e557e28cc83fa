"""De-duplicated cross-modality sparsity of the latent SCM Jacobian.

The field ``G(z_e^c)`` lives on the extended shared vector: entry ``(u, v)``
is the direct derivative of the factor behind coordinate ``u`` with respect to
the factor behind ``v``. Only the blocks ``(I_{m|n}, I_{n|m})`` are counted, so
an overlapping factor is never counted twice.
"""

from dataclasses import dataclass, field
from itertools import permutations
from typing import Iterable, Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from pairlat.errors import ContractError
from pairlat.utils.seeding import numpy_rng
from pairlat.world.graph import normalize_edge
from pairlat.world.latent import LatentSpec
from pairlat.world.scm import ScmSpec

MAX_CONDITION = 1e8


@dataclass(frozen=True)
class SparsityReport:
    counts: dict[tuple[int, int], int]
    total: int
    edge_total: int
    tau0: float
    n_probe: int
    edges: tuple[tuple[int, int], ...]
    off_edge_support: tuple[tuple[int, int], ...] = field(default=())
    # Finite probes can only miss support, never invent it.
    lower_bound: bool = True

    def to_dict(self) -> dict:
        return {
            "counts": {f"{m}|{n}": c for (m, n), c in sorted(self.counts.items())},
            "total": self.total,
            "edge_total": self.edge_total,
            "tau0": self.tau0,
            "n_probe": self.n_probe,
            "edges": [list(e) for e in self.edges],
            "off_edge_support": [list(p) for p in self.off_edge_support],
            "lower_bound": self.lower_bound,
        }


def _as_field(jacobian_field) -> np.ndarray:
    if isinstance(jacobian_field, Tensor):
        jacobian_field = jacobian_field.detach().cpu().numpy()
    out = np.asarray(jacobian_field, dtype=np.float64)
    if out.ndim == 2:
        out = out[None]
    if out.ndim != 3 or out.shape[1] != out.shape[2]:
        raise ContractError(f"Jacobian field must be (N, d_e, d_e), got {out.shape}")
    return out


def _zero_based(indices: Iterable[int]) -> list[int]:
    return [u - 1 for u in indices]


def extended_field(spec: LatentSpec, shared_jacobian: Tensor) -> Tensor:
    """Lift ``(N, d_c, d_c)`` factor derivatives onto extended coordinates."""

    factors = torch.tensor([r - 1 for r in spec.extended_factors], dtype=torch.long)
    return shared_jacobian[:, factors][:, :, factors]


def scm_jacobian_field(scm: ScmSpec, points) -> Tensor:
    """Analytic ``G(z_e^c)`` at each latent row, shape ``(N, d_e, d_e)``."""

    z = torch.as_tensor(np.asarray(points, dtype=np.float64))
    d_c = scm.latent.n_shared
    return extended_field(scm.latent, scm.direct_jacobian(z)[:, :d_c, :d_c])


def scm_jacobian_field_fd(scm: ScmSpec, points, step: float = 1e-5) -> Tensor:
    """Central-difference version of :func:`scm_jacobian_field`."""

    z = torch.as_tensor(np.asarray(points, dtype=np.float64))
    d_c = scm.latent.n_shared
    columns = []
    for p in range(d_c):
        shift = torch.zeros_like(z)
        shift[:, p] = step
        diff = scm.mechanism_values(z + shift) - scm.mechanism_values(z - shift)
        columns.append(diff[:, :d_c] / (2 * step))
    return extended_field(scm.latent, torch.stack(columns, dim=-1))


def dedup_sparsity(
    jacobian_field,
    spec: LatentSpec,
    edges: Optional[Iterable[Sequence[int]]] = None,
    tau0: float = 1e-6,
    n_probe: Optional[int] = None,
) -> SparsityReport:
    """``||G||_0`` over all ordered modality pairs and ``||G||_0,E`` over edges.

    An entry is in the support if ``|G_uv| > tau0`` at any of the first
    ``n_probe`` points of the field.
    """

    if not tau0 > 0:
        raise ContractError(f"tau0 must be > 0, got {tau0}")
    field_ = _as_field(jacobian_field)
    if n_probe is None:
        n_probe = field_.shape[0]
    if n_probe < 1 or n_probe > field_.shape[0]:
        raise ContractError(f"n_probe must lie in [1, {field_.shape[0]}], got {n_probe}")
    if field_.shape[1] != spec.d_e:
        raise ContractError(f"field acts on {field_.shape[1]} coordinates, d_e = {spec.d_e}")

    support = (np.abs(field_[:n_probe]) > tau0).any(axis=0)
    edge_set = tuple(
        sorted(normalize_edge(e) for e in (spec.graph.edges if edges is None else edges))
    )

    counts = {}
    for m, n in permutations(spec.graph.modalities, 2):
        rows = _zero_based(spec.non_overlap_set(m, n))
        cols = _zero_based(spec.non_overlap_set(n, m))
        counts[(m, n)] = int(support[np.ix_(rows, cols)].sum()) if rows and cols else 0

    on_edge = {p: c for p, c in counts.items() if normalize_edge(p) in edge_set}
    return SparsityReport(
        counts=counts,
        total=sum(counts.values()),
        edge_total=sum(on_edge.values()),
        tau0=tau0,
        n_probe=n_probe,
        edges=edge_set,
        off_edge_support=tuple(p for p, c in counts.items() if c and p not in on_edge),
    )


def _check_block_diagonal(spec: LatentSpec, t: np.ndarray) -> None:
    if t.shape != (spec.d_e, spec.d_e):
        raise ContractError(f"T must be {spec.d_e}x{spec.d_e}, got {t.shape}")

    mask = np.zeros_like(t, dtype=bool)
    for m in spec.graph.modalities:
        block = _zero_based(spec.index_set(m))
        mask[np.ix_(block, block)] = True
    if np.any(t[~mask] != 0):
        raise ContractError("T must be block-diagonal over the modality blocks I_m")

    cond = np.linalg.cond(t)
    if not cond < MAX_CONDITION:
        raise ContractError(f"T is singular or ill-conditioned (condition number {cond:.3g})")


def conjugate_sparsity_test(
    jacobian_field,
    spec: LatentSpec,
    t,
    tau0: float = 1e-6,
    n_probe: Optional[int] = None,
    edges: Optional[Iterable[Sequence[int]]] = None,
) -> tuple[int, int]:
    """``(||G||_0, ||T^{-1} G T||_0)`` under the same threshold and probes."""

    t = np.asarray(t.detach().cpu().numpy() if isinstance(t, Tensor) else t, dtype=np.float64)
    _check_block_diagonal(spec, t)

    field_ = _as_field(jacobian_field)
    conjugated = np.linalg.solve(t[None], field_ @ t[None])

    before = dedup_sparsity(field_, spec, edges, tau0, n_probe)
    after = dedup_sparsity(conjugated, spec, edges, tau0, n_probe)
    return before.total, after.total


def overlap_signature(spec: LatentSpec, m: int, u: int) -> frozenset[int]:
    """Modalities whose shared block also carries extended coordinate ``u`` of ``m``."""

    return frozenset(
        n for n in spec.graph.modalities if n != m and u in spec.overlap_set(m, n)
    )


def random_block_permutation(spec: LatentSpec, seed: int) -> np.ndarray:
    """A random member of the within-block generalized-permutation class.

    Coordinates are only exchanged with coordinates of the same modality and the
    same overlap signature, so every ``I_{m|n}`` is mapped onto itself; each
    column gets a random sign and a scale in ``[0.5, 2]``.
    """

    rng = numpy_rng(seed, "block-permutation")
    t = np.zeros((spec.d_e, spec.d_e))
    for m in spec.graph.modalities:
        groups: dict[frozenset[int], list[int]] = {}
        for u in spec.index_set(m):
            groups.setdefault(overlap_signature(spec, m, u), []).append(u - 1)
        for members in groups.values():
            targets = rng.permutation(members)
            for src, dst in zip(members, targets):
                t[dst, src] = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
    return t


def block_rotation(spec: LatentSpec, m: int, u: int, v: int, angle: float = np.pi / 4):
    """Identity except for a planar rotation of extended coordinates ``u, v``
    (1-based, both inside ``I_m``)."""

    block = spec.index_set(m)
    if u not in block or v not in block or u == v:
        raise ContractError(f"coordinates {u}, {v} must be two distinct members of I_{m}")

    t = np.eye(spec.d_e)
    c, s = np.cos(angle), np.sin(angle)
    a, b = u - 1, v - 1
    t[a, a], t[a, b], t[b, a], t[b, b] = c, -s, s, c
    return t

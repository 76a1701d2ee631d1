"""Behler-Parrinello symmetry functions over periodic neighbor lists.

Three families are implemented: radial G2 Gaussians, and angular G4/G5
three-body terms over unordered neighbor pairs.  All values are invariant
under rigid motions and atom permutations; summation orders are canonical so
repeated evaluation is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import UserInputError
from .structures import NeighborList, Structure, neighbor_list


@dataclass(frozen=True)
class CutoffParams:
    """Taper radii: flat 1 inside ``inner``, smooth decay to 0 at ``outer``."""

    inner: float
    outer: float

    def __post_init__(self):
        if not (0.0 <= self.inner < self.outer):
            raise UserInputError(f"need 0 <= inner < outer, got inner={self.inner}, outer={self.outer}")


@dataclass(frozen=True)
class RadialParams:
    """G2 parameters: Gaussian width eta (1/Å²), center r_s (Å), neighbor element."""

    eta: float
    r_s: float
    neighbor_element: str

    def __post_init__(self):
        if not np.isfinite(self.eta) or self.eta < 0:
            raise UserInputError(f"eta must be finite and >= 0, got {self.eta}")
        if self.r_s < 0:
            raise UserInputError(f"r_s must be >= 0, got {self.r_s}")


@dataclass(frozen=True)
class AngularParams:
    """G4/G5 parameters: eta (1/Å²), angular sharpness zeta, lam = +1 or -1."""

    eta: float
    zeta: float
    lam: int
    kind: str                       # "G4" or "G5"
    element_pair: tuple[str, str]   # unordered; stored sorted

    def __post_init__(self):
        if self.lam not in (+1, -1):
            raise UserInputError(f"lam must be +1 or -1, got {self.lam}")
        if self.zeta < 0:
            raise UserInputError(f"zeta must be >= 0, got {self.zeta}")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise UserInputError(f"eta must be finite and >= 0, got {self.eta}")
        if self.kind not in ("G4", "G5"):
            raise UserInputError(f"kind must be G4 or G5, got {self.kind!r}")
        object.__setattr__(self, "element_pair", tuple(sorted(self.element_pair)))


@dataclass(frozen=True)
class DescriptorDef:
    params: RadialParams | AngularParams
    cutoff: CutoffParams

    @property
    def label(self) -> str:
        """Unique column label; feeds histogram-spec checksums, so exact reprs."""
        c = f"rin={self.cutoff.inner!r};rout={self.cutoff.outer!r}"
        p = self.params
        if isinstance(p, RadialParams):
            return f"G2[{p.neighbor_element};eta={p.eta!r};rs={p.r_s!r};{c}]"
        pair = ",".join(p.element_pair)
        return f"{p.kind}[{pair};eta={p.eta!r};zeta={p.zeta!r};lambda={p.lam:+d};{c}]"


@dataclass(frozen=True)
class SymmetryFunctionSet:
    """Ordered descriptor definitions per center element.

    The order is fixed and defines the column order of every downstream
    matrix, histogram, and fingerprint.
    """

    elements: tuple[str, ...]
    descriptors: Mapping[str, tuple[DescriptorDef, ...]]

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(
            self, "descriptors", {e: tuple(self.descriptors[e]) for e in self.elements}
        )
        for e in self.elements:
            if not self.descriptors[e]:
                raise UserInputError(f"element {e} has no descriptors")

    @property
    def max_cutoff(self) -> float:
        return max(d.cutoff.outer for defs in self.descriptors.values() for d in defs)

    def column_layout(self) -> tuple[tuple[str, str], ...]:
        """(element, label) per column, in canonical order."""
        return tuple(
            (e, d.label) for e in self.elements for d in self.descriptors[e]
        )


# ---------------------------------------------------------------------------
# Elementary evaluations
# ---------------------------------------------------------------------------

def cutoff_value(r, cut: CutoffParams):
    """Smooth taper: 1 below ``inner``, 0 at and beyond ``outer``.

    Between the radii it follows the quintic smoothstep complement
    f(x) = ((15 - 6x)x - 10)x^3 + 1 with x = (r - inner)/(outer - inner),
    which has f(0)=1, f(1)=0 and zero slope at both ends.
    """
    arr = np.asarray(r, dtype=float)
    x = (arr - cut.inner) / (cut.outer - cut.inner)
    f = ((15.0 - 6.0 * x) * x - 10.0) * x * x * x + 1.0
    out = np.where(arr < cut.inner, 1.0, np.where(arr >= cut.outer, 0.0, f))
    if np.ndim(r) == 0:
        return float(out)
    return out


def radial_g2(distances: np.ndarray, p: RadialParams, cut: CutoffParams) -> float:
    """Sum of exp(-eta (R - r_s)^2) fc(R) over the given neighbor distances.

    ``distances`` must already be filtered to the target neighbor element and
    given in canonical neighbor order.
    """
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        return 0.0
    terms = np.exp(-p.eta * (d - p.r_s) ** 2) * cutoff_value(d, cut)
    return float(np.sum(terms))


def _angular_terms(
    r_ij: np.ndarray, r_ik: np.ndarray, cos_theta: np.ndarray, p: AngularParams, cut: CutoffParams,
    r_jk: np.ndarray | None,
) -> float:
    base = 1.0 + p.lam * np.asarray(cos_theta, dtype=float)
    # 0^0 -> 1 (numpy's convention), so zeta = 0 keeps degenerate angles.
    ang = np.power(base, p.zeta)
    if r_jk is None:
        gauss = np.exp(-p.eta * (r_ij ** 2 + r_ik ** 2))
        taper = cutoff_value(r_ij, cut) * cutoff_value(r_ik, cut)
    else:
        gauss = np.exp(-p.eta * (r_ij ** 2 + r_ik ** 2 + r_jk ** 2))
        taper = cutoff_value(r_ij, cut) * cutoff_value(r_ik, cut) * cutoff_value(r_jk, cut)
    terms = ang * gauss * taper
    # Value-sorted summation: the term multiset is identical for physically
    # equivalent environments (supercell images, permuted atoms), so sorting
    # makes the sum bit-identical across them.
    return float(np.sum(np.sort(terms))) * 2.0 ** (1.0 - p.zeta)


def angular_g4(
    r_ij: np.ndarray, r_ik: np.ndarray, r_jk: np.ndarray, cos_theta: np.ndarray,
    p: AngularParams, cut: CutoffParams,
) -> float:
    """G4 sum over unordered neighbor pairs (each pair counted once)."""
    if np.size(r_ij) == 0:
        return 0.0
    return _angular_terms(
        np.asarray(r_ij, float), np.asarray(r_ik, float), np.asarray(cos_theta, float),
        p, cut, np.asarray(r_jk, float),
    )


def angular_g5(
    r_ij: np.ndarray, r_ik: np.ndarray, cos_theta: np.ndarray,
    p: AngularParams, cut: CutoffParams,
) -> float:
    """G5 sum: like G4 but without the j-k distance factors."""
    if np.size(r_ij) == 0:
        return 0.0
    return _angular_terms(
        np.asarray(r_ij, float), np.asarray(r_ik, float), np.asarray(cos_theta, float),
        p, cut, None,
    )


# ---------------------------------------------------------------------------
# Whole-structure evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DescriptorMatrix:
    """Per-atom descriptor values for one structure, grouped by center element.

    ``blocks[e]`` has one row per element-e atom (structure atom order) and one
    column per descriptor in the symmetry-function set's order for ``e``.
    """

    structure_id: str
    tag: str | None
    blocks: Mapping[str, np.ndarray]
    columns: Mapping[str, tuple[str, ...]]

    def column_layout(self) -> tuple[tuple[str, str], ...]:
        return tuple((e, lbl) for e in self.blocks for lbl in self.columns[e])


class _PairGeometry:
    """Cached pair geometry for one center atom under one cutoff."""

    def __init__(self, dist: np.ndarray, disp: np.ndarray, species: list[str]):
        self.dist = dist
        self.disp = disp
        self.species = species
        self._by_element: dict[str, np.ndarray] = {}
        self._pairs: dict[tuple[str, str], tuple[np.ndarray, ...]] = {}

    def element_indices(self, element: str) -> np.ndarray:
        if element not in self._by_element:
            self._by_element[element] = np.array(
                [m for m, sp in enumerate(self.species) if sp == element], dtype=int
            )
        return self._by_element[element]

    def pair_arrays(self, pair: tuple[str, str]):
        """(r_ij, r_ik, r_jk, cos_theta) over unordered entry pairs matching ``pair``."""
        if pair in self._pairs:
            return self._pairs[pair]
        e1, e2 = pair
        if e1 == e2:
            idx = self.element_indices(e1)
            a, b = np.triu_indices(len(idx), k=1)
            a, b = idx[a], idx[b]
        else:
            ia, ib = self.element_indices(e1), self.element_indices(e2)
            a = np.repeat(ia, len(ib))
            b = np.tile(ib, len(ia))
        r_ij = self.dist[a]
        r_ik = self.dist[b]
        da, db = self.disp[a], self.disp[b]
        r_jk = np.linalg.norm(db - da, axis=1)
        with np.errstate(invalid="ignore"):
            cos = np.einsum("ij,ij->i", da, db) / (r_ij * r_ik)
        cos = np.clip(cos, -1.0, 1.0)
        self._pairs[pair] = (r_ij, r_ik, r_jk, cos)
        return self._pairs[pair]


def compute_structure_descriptors(
    s: Structure,
    sfset: SymmetryFunctionSet,
    nlist: NeighborList | None = None,
) -> DescriptorMatrix:
    """Evaluate every descriptor for every atom of ``s``.

    A neighbor list built with at least ``sfset.max_cutoff`` may be passed to
    avoid recomputation; otherwise one is built here.
    """
    missing = sorted(set(s.species) - set(sfset.elements))
    if missing:
        raise UserInputError(f"element {missing[0]} of structure {s.id!r} not in symmetry-function set")
    if nlist is None:
        nlist = neighbor_list(s, sfset.max_cutoff)
    elif nlist.cutoff < sfset.max_cutoff:
        raise UserInputError(
            f"neighbor list cutoff {nlist.cutoff} smaller than descriptor cutoff {sfset.max_cutoff}"
        )

    blocks = {
        e: np.zeros((0, len(sfset.descriptors[e]))) for e in sfset.elements
    }
    rows: dict[str, list[np.ndarray]] = {e: [] for e in sfset.elements}
    for i, center in enumerate(s.species):
        defs = sfset.descriptors[center]
        dist = nlist.distances[i]
        disp = nlist.displacements[i]
        species = [s.species[j] for j in nlist.indices[i]]

        geoms: dict[CutoffParams, _PairGeometry] = {}
        values = np.empty(len(defs))
        for col, dd in enumerate(defs):
            cut = dd.cutoff
            if cut not in geoms:
                mask = dist < cut.outer
                geoms[cut] = _PairGeometry(
                    dist[mask], disp[mask], [sp for sp, m in zip(species, mask) if m]
                )
            geom = geoms[cut]
            p = dd.params
            if isinstance(p, RadialParams):
                idx = geom.element_indices(p.neighbor_element)
                values[col] = radial_g2(geom.dist[idx], p, cut)
            else:
                r_ij, r_ik, r_jk, cos = geom.pair_arrays(p.element_pair)
                if p.kind == "G4":
                    values[col] = angular_g4(r_ij, r_ik, r_jk, cos, p, cut)
                else:
                    values[col] = angular_g5(r_ij, r_ik, cos, p, cut)
        rows[center].append(values)

    for e in sfset.elements:
        if rows[e]:
            blocks[e] = np.vstack(rows[e])
    for e, block in blocks.items():
        if not np.all(np.isfinite(block)):
            raise UserInputError(f"non-finite descriptor value in structure {s.id!r}, element {e}")
        block.setflags(write=False)
    return DescriptorMatrix(
        structure_id=s.id,
        tag=s.tag,
        blocks=blocks,
        columns={e: tuple(d.label for d in sfset.descriptors[e]) for e in sfset.elements},
    )


def compute_dataset_descriptors(
    structures: Sequence[Structure],
    sfset: SymmetryFunctionSet,
    workers: int = 1,
) -> list[DescriptorMatrix]:
    """Descriptor matrices for many structures, in input order.

    With ``workers > 1`` the per-structure work is farmed out to a process
    pool; results are collected in order, so the output is identical to the
    sequential run.
    """
    if workers <= 1 or len(structures) <= 1:
        return [compute_structure_descriptors(s, sfset) for s in structures]
    import concurrent.futures
    import functools

    fn = functools.partial(compute_structure_descriptors, sfset=sfset)
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, structures, chunksize=max(1, len(structures) // (4 * workers))))

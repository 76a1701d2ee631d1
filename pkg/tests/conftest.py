"""Shared corpus builders for the test suite.

``dyadic_structure`` produces cells and positions whose coordinates are small
dyadic rationals, so supercell replication and neighbor arithmetic are exact
in float64 and physically equivalent structures yield bit-identical
descriptor values.
"""

import numpy as np
import pytest

from dvlae import Structure


def random_cell(rng, lo=2.5, hi=4.5, skew=0.4):
    """Random non-degenerate triclinic cell (rows are lattice vectors)."""
    while True:
        cell = np.diag(rng.uniform(lo, hi, 3))
        cell[1, 0] = rng.uniform(-skew, skew)
        cell[2, 0] = rng.uniform(-skew, skew)
        cell[2, 1] = rng.uniform(-skew, skew)
        cell += rng.uniform(-0.05, 0.05, (3, 3))
        if abs(np.linalg.det(cell)) > 1.0:
            return cell


def random_structure(rng, ident, elements=("Fe", "H"), n_atoms=None, unwrapped=False):
    """Generic random periodic structure; positions may lie outside the cell."""
    n = int(n_atoms if n_atoms is not None else rng.integers(2, 7))
    cell = random_cell(rng)
    lo, hi = (-0.5, 1.5) if unwrapped else (0.0, 1.0)
    frac = rng.uniform(lo, hi, (n, 3))
    species = tuple(elements[i] for i in rng.integers(0, len(elements), n))
    return Structure(
        cell=cell, species=species, positions=frac @ cell,
        periodic=(True, True, True), id=ident,
    )


def dyadic_structure(rng, ident, elements=("Fe", "H"), n_atoms=None, grid=8):
    """Random structure on a 1/grid fractional lattice with dyadic cell entries,
    so all geometry arithmetic is exact in float64."""
    n = int(n_atoms if n_atoms is not None else rng.integers(2, 6))
    diag = rng.integers(5, 9, 3) * 0.5          # 2.5 .. 4.0 in steps of 0.5
    cell = np.diag(diag)
    cell[1, 0] = rng.integers(-2, 3) * 0.25
    cell[2, 0] = rng.integers(-2, 3) * 0.25
    cell[2, 1] = rng.integers(-2, 3) * 0.25
    taken = set()
    frac = []
    while len(frac) < n:
        cand = tuple(int(v) for v in rng.integers(0, grid, 3))
        if cand not in taken:
            taken.add(cand)
            frac.append(cand)
    frac = np.array(frac, dtype=float) / grid
    species = tuple(elements[i] for i in rng.integers(0, len(elements), n))
    return Structure(
        cell=cell, species=species, positions=frac @ cell,
        periodic=(True, True, True), id=ident,
    )


def random_rotation(rng):
    """Uniform proper rotation matrix (det +1)."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rigid_transform(s: Structure, rotation, translation) -> Structure:
    return Structure(
        cell=s.cell @ rotation.T,
        species=s.species,
        positions=s.positions @ rotation.T + translation,
        periodic=s.periodic,
        id=s.id,
        tag=s.tag,
    )


def permute_atoms(s: Structure, perm) -> Structure:
    perm = np.asarray(perm)
    return Structure(
        cell=s.cell,
        species=tuple(s.species[i] for i in perm),
        positions=s.positions[perm],
        periodic=s.periodic,
        id=s.id,
        tag=s.tag,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)

"""Element tables: standard atomic weights and van der Waals radii.

Masses are IUPAC standard (conventional) atomic weights in amu, Z = 1..96.
Radii are Bondi values with the Mantina main-group extension, in angstrom;
elements without a tabulated radius map to ``None``.
"""

from __future__ import annotations

from .errors import UnknownElementError

# (Z, symbol, standard atomic weight, vdW radius)
_ROWS = [
    (1, "H", 1.008, 1.2),
    (2, "He", 4.0026, 1.4),
    (3, "Li", 6.94, 1.82),
    (4, "Be", 9.01218, 1.53),
    (5, "B", 10.81, 1.92),
    (6, "C", 12.011, 1.7),
    (7, "N", 14.007, 1.55),
    (8, "O", 15.999, 1.52),
    (9, "F", 18.9984, 1.47),
    (10, "Ne", 20.1797, 1.54),
    (11, "Na", 22.98977, 2.27),
    (12, "Mg", 24.305, 1.73),
    (13, "Al", 26.98154, 1.84),
    (14, "Si", 28.085, 2.1),
    (15, "P", 30.97376, 1.8),
    (16, "S", 32.06, 1.8),
    (17, "Cl", 35.45, 1.75),
    (18, "Ar", 39.948, 1.88),
    (19, "K", 39.0983, 2.75),
    (20, "Ca", 40.078, 2.31),
    (21, "Sc", 44.95591, None),
    (22, "Ti", 47.867, None),
    (23, "V", 50.9415, None),
    (24, "Cr", 51.9961, None),
    (25, "Mn", 54.93804, None),
    (26, "Fe", 55.845, None),
    (27, "Co", 58.93319, None),
    (28, "Ni", 58.6934, 1.63),
    (29, "Cu", 63.546, 1.4),
    (30, "Zn", 65.38, 1.39),
    (31, "Ga", 69.723, 1.87),
    (32, "Ge", 72.63, 2.11),
    (33, "As", 74.92159, 1.85),
    (34, "Se", 78.971, 1.9),
    (35, "Br", 79.904, 1.85),
    (36, "Kr", 83.798, 2.02),
    (37, "Rb", 85.4678, 3.03),
    (38, "Sr", 87.62, 2.49),
    (39, "Y", 88.90584, None),
    (40, "Zr", 91.224, None),
    (41, "Nb", 92.90637, None),
    (42, "Mo", 95.95, None),
    (43, "Tc", 97.90721, None),
    (44, "Ru", 101.07, None),
    (45, "Rh", 102.9055, None),
    (46, "Pd", 106.42, 1.63),
    (47, "Ag", 107.8682, 1.72),
    (48, "Cd", 112.414, 1.58),
    (49, "In", 114.818, 1.93),
    (50, "Sn", 118.71, 2.17),
    (51, "Sb", 121.76, 2.06),
    (52, "Te", 127.6, 2.06),
    (53, "I", 126.90447, 1.98),
    (54, "Xe", 131.293, 2.16),
    (55, "Cs", 132.90545, 3.43),
    (56, "Ba", 137.327, 2.49),
    (57, "La", 138.90547, None),
    (58, "Ce", 140.116, None),
    (59, "Pr", 140.90766, None),
    (60, "Nd", 144.242, None),
    (61, "Pm", 144.91276, None),
    (62, "Sm", 150.36, None),
    (63, "Eu", 151.964, None),
    (64, "Gd", 157.25, None),
    (65, "Tb", 158.92535, None),
    (66, "Dy", 162.5, None),
    (67, "Ho", 164.93033, None),
    (68, "Er", 167.259, None),
    (69, "Tm", 168.93422, None),
    (70, "Yb", 173.054, None),
    (71, "Lu", 174.9668, None),
    (72, "Hf", 178.49, None),
    (73, "Ta", 180.94788, None),
    (74, "W", 183.84, None),
    (75, "Re", 186.207, None),
    (76, "Os", 190.23, None),
    (77, "Ir", 192.217, None),
    (78, "Pt", 195.084, 1.75),
    (79, "Au", 196.96657, 1.66),
    (80, "Hg", 200.592, 1.55),
    (81, "Tl", 204.38, 1.96),
    (82, "Pb", 207.2, 2.02),
    (83, "Bi", 208.9804, 2.07),
    (84, "Po", 208.98243, 1.97),
    (85, "At", 209.98715, 2.02),
    (86, "Rn", 222.01758, 2.2),
    (87, "Fr", 223.01974, 3.48),
    (88, "Ra", 226.02541, 2.83),
    (89, "Ac", 227.02775, None),
    (90, "Th", 232.0377, None),
    (91, "Pa", 231.03588, None),
    (92, "U", 238.02891, 1.86),
    (93, "Np", 237.04817, None),
    (94, "Pu", 244.06421, None),
    (95, "Am", 243.06138, None),
    (96, "Cm", 247.07035, None),
]

SYMBOLS = {z: sym for z, sym, _, _ in _ROWS}
NUMBERS = {sym: z for z, sym, _, _ in _ROWS}
ATOMIC_MASSES = {z: mass for z, _, mass, _ in _ROWS}
VDW_RADII = {z: r for z, _, _, r in _ROWS if r is not None}


def atomic_number(species) -> int:
    """Accept an atomic number or an element symbol and return Z."""
    if isinstance(species, str):
        try:
            return NUMBERS[species.strip().capitalize()]
        except KeyError:
            raise UnknownElementError(f"unknown element symbol {species!r}") from None
    z = int(species)
    if z not in ATOMIC_MASSES:
        raise UnknownElementError(f"no element data for Z={z}")
    return z


def atomic_mass(z) -> float:
    return ATOMIC_MASSES[atomic_number(z)]


def vdw_radius(z, radii=None) -> float:
    z = atomic_number(z)
    # overrides may be keyed by symbol or atomic number
    table = VDW_RADII if radii is None else {**VDW_RADII, **{atomic_number(k): v for k, v in radii.items()}}
    try:
        return table[z]
    except KeyError:
        raise UnknownElementError(f"no van der Waals radius for {SYMBOLS[z]} (Z={z})") from None

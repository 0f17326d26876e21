"""Small reference structures with known analytic behaviour.

Used by the test-suite, the acceptance checks and the benchmark. Chains are
collinear bars along x whose consistent mass is made negligible by the
caller (tiny density) so that lumped masses dominate.
"""
from __future__ import annotations

import math

import numpy as np

from .lattice import BeamGraph


def strip(n_elem: int, length_mm: float, width_mm: float = 2.0, thickness_mm: float = 5.0,
          clamp_first: bool = True) -> BeamGraph:
    """Straight strip along x split into ``n_elem`` edges; node 0 clamped."""
    x = np.linspace(0.0, length_mm, n_elem + 1)
    nodes = np.stack([x, np.zeros_like(x)], axis=1)
    edges = np.stack([np.arange(n_elem), np.arange(1, n_elem + 1)], axis=1)
    g = BeamGraph(nodes, edges, np.full(n_elem, float(width_mm)), np.full(n_elem, float(thickness_mm)),
                  np.zeros(n_elem + 1, np.int64))
    if clamp_first:
        g.clamped_nodes = np.array([0])
        g.base_nodes = np.array([0])
        g.tip_nodes = np.array([n_elem])
    return g


def cantilever_f1(length_mm, width_mm, thickness_mm, E, rho) -> float:
    """First in-plane bending frequency of a clamped-free Euler-Bernoulli beam."""
    L = length_mm * 1e-3
    A = width_mm * thickness_mm * 1e-6
    I = thickness_mm * 1e-3 * (width_mm * 1e-3) ** 3 / 12.0
    return 1.8751040687**2 / (2 * math.pi) * math.sqrt(E * I / (rho * A * L**4))


def axial_stiffness(E, width_mm, thickness_mm, length_mm) -> float:
    return E * width_mm * thickness_mm * 1e-6 / (length_mm * 1e-3)


def mass_chain(masses_kg, spacing_mm: float = 10.0, width_mm: float = 1.0,
               thickness_mm: float = 1.0) -> BeamGraph:
    """Base node followed by one lumped mass per node, equal bars in between.

    The last node is the response node.
    """
    n = len(masses_kg)
    g = strip(n, n * spacing_mm, width_mm, thickness_mm)
    g.lumped_masses = [(i + 1, float(m)) for i, m in enumerate(masses_kg)]
    return g


def sdof_transmissibility_db(freq_hz, fn_hz, zeta) -> np.ndarray:
    r = np.asarray(freq_hz, float) / fn_hz
    num = 1.0 + (2 * zeta * r) ** 2
    den = (1 - r**2) ** 2 + (2 * zeta * r) ** 2
    return 10.0 * np.log10(num / den)


def mass_in_mass(m_outer, m_res, spacing_mm: float = 10.0, width_mm: float = 1.0,
                 thickness_mm: float = 1.0, res_width_mm: float | None = None) -> BeamGraph:
    """base --k_o-- m_outer --k_r-- m_res, response read at m_outer."""
    g = mass_chain([m_outer, m_res], spacing_mm, width_mm, thickness_mm)
    if res_width_mm is not None:
        g.widths[1] = res_width_mm
    g.tip_nodes = np.array([1])
    return g

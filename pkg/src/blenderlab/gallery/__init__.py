"""Worked example systems: a fat attractor in P^2, a double blender with a cycle, perturbed Henon maps."""
from .attractor import (AttractorParams, AttractorSystem, attractor_build, attractor_certify,
                        base_map_critical_check)
from .double import DoubleBlender, DoubleParams, cycle_check, double_blender_build, double_map, switch_factor
from .henon import (HenonCycle, HenonParams, henon_build, henon_pipeline, henon_repelling_cycles,
                    henon_trapping_certify, nested_trapping)
from .projective import HomogeneousMap, ProjectiveMap, ProjectivePoint, TrappingRegion
from .render import View, pencil_view, render_invariant_set, write_ppm

__all__ = [
    "AttractorParams", "AttractorSystem", "attractor_build", "attractor_certify", "base_map_critical_check",
    "DoubleBlender", "DoubleParams", "cycle_check", "double_blender_build", "double_map", "switch_factor",
    "HenonCycle", "HenonParams", "henon_build", "henon_pipeline", "henon_repelling_cycles",
    "henon_trapping_certify", "nested_trapping",
    "HomogeneousMap", "ProjectiveMap", "ProjectivePoint", "TrappingRegion",
    "View", "pencil_view", "render_invariant_set", "write_ppm",
]

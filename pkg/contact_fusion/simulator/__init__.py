from contact_fusion.simulator.bundle import LoadedBundle, export_bundle, load_bundle
from contact_fusion.simulator.membrane import MembraneGrid, MembraneState, inflate_membrane
from contact_fusion.simulator.obstacles import RigidObstacle, place_obstacle
from contact_fusion.simulator.rendering import render_proximity_depth, render_tactile_depth
from contact_fusion.simulator.scene import REGIME_TARGETS, SimulatedScene, generate_scene, scene_for_cell
from contact_fusion.simulator.solver import ContactOracle, press_object
from contact_fusion.simulator.strain import DotGrid, build_dot_grid, displacement_for_strain, measure_strain

__all__ = [
    "REGIME_TARGETS",
    "ContactOracle",
    "DotGrid",
    "LoadedBundle",
    "MembraneGrid",
    "MembraneState",
    "RigidObstacle",
    "SimulatedScene",
    "build_dot_grid",
    "displacement_for_strain",
    "export_bundle",
    "generate_scene",
    "inflate_membrane",
    "load_bundle",
    "measure_strain",
    "place_obstacle",
    "press_object",
    "render_proximity_depth",
    "render_tactile_depth",
    "scene_for_cell",
]

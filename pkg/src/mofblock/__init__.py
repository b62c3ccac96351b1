"""Block-level crystal structure generation toolkit: lattice geometry,
rigid-block frames and assembly, text encoding, structure matching,
rewards and policy-gradient objectives, and geometric descriptors."""

from .assembly import AssemblySpec, AtomStructure, assemble, disassemble, to_cif
from .codec import CptRecord, ParsedPrediction, parse_response, render_cpt, render_sft, render_sft_response
from .dataset import StructureRecord, emit_corpora, evaluate, load_dataset
from .descriptors import DescriptorReport, density, describe, lcd_grid, unit_cell_volume, void_fraction_grid
from .errors import MofBlockError, ParseError, SchemaViolationError
from .frames import BlockPose, BuildingBlock, LocalFrameTransformer, extract_local_frame, local_frame
from .lattice import LatticeParams, matrix_to_params, min_image_distance, niggli_reduce, params_to_matrix
from .matcher import DEFAULT_TOLERANCES, MatchReport, MatchTolerances, StructureMatcher, structures_match
from .policy_sim import PolicySimulator, Scenario, ToyPolicy, run_training
from .reward import GroupSample, SapoConfig, compute_reward, group_advantages, sapo_gradient, sapo_objective
from .rotations import EulerAngles, euler_to_matrix, matrix_to_euler

__version__ = "0.1.0"

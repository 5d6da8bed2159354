"""Bayesian hierarchical modelling of longitudinal DCE-MRI studies."""

from .kinetics import AifParams, KineticParams, TimeGrid, ctc_model
from .hierarchy import ModelState, StudyLayout
from .studyio import SimulationSpec, StudyData, load_study, save_study, simulate_study
from .sampler import ChainSamples, McmcConfig, initial_state, run_chain

__version__ = "0.1.0"

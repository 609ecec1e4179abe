"""Plackett-Luce ranking aggregation with instance-dependent scores and
per-worker uncertainty vectors, plus the matching minimax-theory harness."""

from ._accel import backend, set_threads
from .data import (
    DataError,
    Dataset,
    ObjectCatalog,
    Preference,
    dataset_from_indices,
    load_dataset,
    one_hot_catalog,
    validate_dataset,
)
from .errors import DegenerateProfileError, DivergenceError, EnumerationCapError
from .estimation import FitConfig, FitResult, evaluate_ranking, fit, kendall_tau
from .network import ScoreModel, init_model, load_checkpoint, save_checkpoint, score_forward
from .plackett_luce import pl_log_likelihood, pl_sample, stage_probability
from .synthgen import SynthSpec, enumerate_permutation_distribution, generate
from .uncertainty import (
    WorkerProfile,
    dateline_log_likelihood,
    preference_log_likelihood,
    weighted_stage_probability,
)

__version__ = "0.1.0"

"""contraction-tuner

Loop-nest schedule tuning for CPU tensor contractions: cursor-based schedule
actions, stride-histogram features, search baselines and a deep Q-learning
policy.
"""

__version__ = "0.1.0"

from .backend_manager import BackendManager
from .config import Config
from .contraction import lower, parse_spec
from .environment import ScheduleEnv, rollout_policy
from .search import run_search

__all__ = ["BackendManager", "Config", "ScheduleEnv", "lower", "parse_spec", "rollout_policy", "run_search"]

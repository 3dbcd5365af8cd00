from .bench import bench_complexity
from .config import ExperimentConfig, dump, expand_sweep, get_preset, load, parse, presets
from .experiment import run, simulate_to, sweep

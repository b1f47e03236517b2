"""Meta-learning initializations by shortening gradient paths across tasks."""

from .errors import ConfigError, DivergenceError, LeapError, NumericalError, UnsupportedError
from .geometry import (GeometryConfig, ManifoldPoint, path_distance, pull_forward_increment,
                       segment_norm, stabilizer_value)
from .meta import (MetaConfig, MetaState, evaluate_transfer, fomaml_meta_step, leap_meta_step,
                   reptile_meta_step, run_leap)
from .tasks import (QuadraticSpec, SinusoidSpec, Task, TaskDistribution, loss_and_grad,
                    sample_task_batch)
from .training import GradientPath, UpdateRule, inner_step, run_inner_training

__version__ = "0.1.0"

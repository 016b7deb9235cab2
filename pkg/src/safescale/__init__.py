"""Safety speed scaling for shared human-robot workcells.

safescale simulates a collaborative box-transfer cell in which a robot's
speed is scaled down by a staircase function of its distance to a human
operator, records execution traces, self-labels the observed scaling
levels by density clustering, and trains small dense networks to predict
the current, future, or window-averaged scaling factor from robot/human
state and goals.
"""

from safescale.safety import Position3, StaircaseSafetyFunction, eval_scaling, eval_scaling_by_distance
from safescale.scene import SceneConfig, default_scene
from safescale.simulate import EpisodeTrace, Sample, SimulationError, run_campaign, simulate_episode
from safescale.labeling import (
    ClusterModel,
    ClusteringError,
    LabeledTrace,
    NoiseSpec,
    SupervisedDataset,
    WindowSpec,
    assign_labels,
    build_dataset,
    cluster_scalings,
    inject_noise,
    split_dataset,
)

__version__ = "0.1.0"

"""Dense-traffic merging workbench.

Traffic simulation with cooperation-aware driver models, a Bayesian
filter over driver cooperation, deep Q-learning on observations or
belief states, and Monte Carlo tree search baselines, plus a batch
evaluation harness that compares the resulting policies.
"""

from .scene import (DriverParams, Lane, LaneGeometry, PackedScene,
                    PhysicalState, SceneState, VehicleState, ego_vehicle)
from .core import (A_HARD, EPS_V, CollisionReport, Neighbors,
                   detect_collision, find_neighbors, step_kinematics,
                   wrap_respawn)
from .drivers import (cidm_accel, equilibrium_gap, idm_accel,
                      time_to_merge, traffic_accelerations)
from .env import (DT, EgoAction, ObsMode, StepOutcome, StepStatus,
                  apply_action, build_observation, env_step,
                  normalize_observation, reward, scene_status)
from .scenarios import (Regime, ScenarioConfig, dense_config, mixed_config,
                        sample_initial_scene)
from .belief import (CooperationBelief, belief_observation, posterior,
                     predict_vehicle, update_belief)
from .nn import (AdamState, QPolicy, adam_step, greedy_action, load_policy,
                 new_policy, q_forward, save_policy, td_loss_grad)
from .replay import ReplayBuffer
from .training import TrainConfig, TrainStage, epsilon, train_dqn
from .mcts import (AssumeCooperation, FullObservation, MctsParams,
                   MergingModel, audit_tree, determinize, plan, search)
from .evaluate import (EvalConfig, Metrics, compare, evaluate, run_episode)
from .policies import POLICY_NAMES

__version__ = "0.1.0"

"""Offline learners and the evaluation harness."""
from .evaluate import EvalResult, episode_returns, evaluate_policy, load_checkpoint, save_checkpoint, shifted_score
from .mlp import Adam, Mlp, expectile, expectile_loss_and_grad, softmax
from .train import Algorithm, LearnerConfig, MlpPolicy, awr_train, awr_weights, bc_train, fit_value, terminal_flags, train

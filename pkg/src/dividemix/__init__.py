"""Learning with noisy labels by co-divided semi-supervised training of two networks."""
from .config import TrainConfig
from .data import Dataset, gen_blobs, inject_asymmetric, inject_symmetric, load_cifar10_binary
from .gmm import clean_posterior, co_divide, fit_gmm_em, per_sample_losses
from .metrics import division_auc, summarize, test_accuracy
from .mixmatch import co_guess, co_refine, mix_pair, mixmatch_transform, semi_losses, sharpen
from .nn import MLP, SGD, SmallCNN, forward_probs, loss_and_grads
from .trainer import TrainingHistory, run_experiment

__version__ = "0.1.0"

"""robust1d: train, attack, and evaluate adversarially robust 1D classifiers.

The package couples a small float64 autodiff engine with character-level CNN
text models, margin/center/contrastive objectives, white-box gradient attacks
(FGSM, PGD) for continuous inputs, and black-box word-scoring attacks with
character transforms for text.
"""

__version__ = "0.1.0"

from .encoding import AlphabetCodec, DEFAULT_ALPHABET, encode_text
from .errors import (ConfigError, ContractError, FormatError, NumericsError,
                     ShapeError, TrainingDiverged)
from .gradcheck import grad_check
from .gradient_attacks import ContinuousAttackSpec, batch_attack, fgsm, pgd
from .losses import (ClassCenters, LossConfig, ce_loss, center_loss,
                     contrastive_loss, marginal_contrastive_loss,
                     marginal_softmax_loss)
from .models import (CharCnnConfig, CharCnnModel, ConvSpec, TabularNet,
                     TabularNetConfig, full_charcnn_config,
                     predict_true_class_prob, softmax, tiny_charcnn_config,
                     tiny_tabular_config)
from .optim import OptimizerState, optimizer_step
from .tensor import Tape, Tensor, backward, zero_grads
from .text_attacks import (DiscreteAttackSpec, TokenizedText, apply_transform,
                           generate_adversarial, score_combined, score_gradient,
                           score_r1s, score_random, score_ths, score_tts, tokenize)

__all__ = [name for name in dir() if not name.startswith("_")]

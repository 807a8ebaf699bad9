from . import tensor, layers, losses, optim, checkpoint
from .tensor import Tensor
from .layers import Encoder, EncoderConfig, Head, HeadConfig
from .losses import contrastive_loss, cross_entropy_loss, mse_loss, cosine_similarity
from .optim import AdamW, LRPlateau, gradient_check
from .checkpoint import save_checkpoint, load_checkpoint

from comgen.nnet.tensor import Tensor
from comgen.nnet.config import ModelConfig

__all__ = ["Tensor", "ModelConfig"]

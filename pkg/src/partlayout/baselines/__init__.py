from .bmvae import BoxMaskVAE
from .bslstm import BoxShapeLSTM, GMMBoxParams, gmm_nll, sample_box_from_gmm
from .cggan import ConditionalGumbelGAN, GumbelConfig, cggan_train_step
from .gumbel import gumbel_argmax, gumbel_noise, gumbel_softmax

__all__ = [
    "BoxMaskVAE",
    "BoxShapeLSTM",
    "GMMBoxParams",
    "gmm_nll",
    "sample_box_from_gmm",
    "ConditionalGumbelGAN",
    "GumbelConfig",
    "cggan_train_step",
    "gumbel_argmax",
    "gumbel_noise",
    "gumbel_softmax",
]

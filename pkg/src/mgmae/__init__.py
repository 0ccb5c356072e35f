"""Multi-filter Gaussian mixture autoencoder for sequence-to-sequence tasks.

An autoencoder learns sentence representations, a diagonal Gaussian mixture
partitions them, and one attention decoder ("filter") per mixture component
is trained on that component's samples.
"""

from .data import EOS, PAD, SOS, UNK, ParallelCorpus, Vocab
from .filterbank import FilterBank, decode_hard, decode_soft, partition, train_filters
from .gmm import GmmModel, assign, fit_em, mixture_log_density, posterior, silhouette
from .harness import ExperimentConfig, cmd_baseline, cmd_run, cmd_sweep_filters
from .seq2seq import (Decoder, Encoder, encode, extract_representations, greedy_decode,
                      train_autoencoder, train_encdec_baseline)

__version__ = "0.1.0"

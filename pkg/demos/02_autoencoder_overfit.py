# A sentence autoencoder memorising five sentences, then reading back its latent codes.

# %%
import numpy as np

from mgmae.data import ParallelCorpus, tokenize
from mgmae.seq2seq import Decoder, Encoder, encode, extract_representations, greedy_decode, train_autoencoder

sentences = [
    "the cat sat on the mat .",
    "what is the capital of texas ?",
    "how many rivers are in ohio ?",
    "i like green apples and pears .",
    "go home now !",
]
corpus = ParallelCorpus.from_tokens([(tokenize(s), tokenize(s)) for s in sentences])
V = len(corpus.src_vocab)
print("vocabulary size", V)

# %% small dimensions keep this to a couple of seconds
enc = Encoder(V, embed_dim=32, hidden_dim=64, seed=0)
dec = Decoder(V, embed_dim=32, hidden_dim=64, seed=1)
history = train_autoencoder(enc, dec, corpus.sources(), epochs=150, seed=2)
print("loss first/last epoch: %.3f / %.4f" % (history[0], history[-1]))

# %% greedy reconstruction
for ids in corpus.sources():
    out = greedy_decode(dec, encode(enc, ids), max_len=20)
    print(" ".join(corpus.src_vocab.decode(out)))

# %% the representation is what the mixture model sees later
reps = extract_representations(enc, corpus.sources())
print("representations", reps.shape)
print("pairwise distances\n", np.round(np.linalg.norm(reps[:, None] - reps[None], axis=-1), 2))

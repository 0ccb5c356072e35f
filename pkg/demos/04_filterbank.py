# One decoder per latent cluster ("filters") on a corpus mixing two question families.

# %%
import numpy as np

from mgmae.data import ParallelCorpus, tokenize, tokenize_logical_form
from mgmae.filterbank import FilterBank, decode_hard, decode_soft, partition, train_filters
from mgmae.gmm import fit_em, posterior
from mgmae.metrics import token_accuracy
from mgmae.seq2seq import Decoder, Encoder, encode, extract_representations, train_autoencoder

states = ["texas", "ohio", "utah", "iowa", "maine", "idaho", "kansas", "oregon"]
rows = []
for s in states:
    rows.append((f"what is the capital of {s} ?", f"answer(capital({s}))"))
    rows.append((f"how many rivers run through the state of {s} ?", f"answer(count(river(loc({s}))))"))
corpus = ParallelCorpus.from_tokens([(tokenize(q), tokenize_logical_form(a)) for q, a in rows])
pairs = list(zip(corpus.sources(), corpus.targets()))
E, H = 24, 32

# %% autoencoder -> representations -> two-component mixture
enc = Encoder(len(corpus.src_vocab), E, H, seed=0)
train_autoencoder(enc, Decoder(len(corpus.src_vocab), E, H, seed=1), corpus.sources(), epochs=30, seed=2)
reps = extract_representations(enc, corpus.sources())
gmm = fit_em(reps, 2, seed=0)
parts = partition(gmm, reps)
for j, idx in enumerate(parts):
    print(f"cluster {j}:", sorted({" ".join(corpus.src_vocab.decode(pairs[i][0])[:2]) for i in idx}))

# %% each filter only ever sees its own cluster; the encoder stays frozen
bank = FilterBank.create(gmm, len(corpus.tgt_vocab), E, H, seed=3)
logs = train_filters(bank, enc, pairs, parts, epochs=40, lr=0.005, seed=4)
print("final filter losses", [round(l[-1], 4) if l else None for l in logs])

# %% hard routing versus posterior-weighted mixing
refs = [t[:-1] for _, t in pairs]
hard = [decode_hard(bank, enc, s, 20) for s, _ in pairs]
soft = [decode_soft(bank, enc, s, 20) for s, _ in pairs]
print("token accuracy hard %.1f  soft %.1f" % (token_accuracy(hard, refs), token_accuracy(soft, refs)))
print("posterior of the first question:", np.round(posterior(gmm, encode(enc, pairs[0][0]).representation.data), 3))
print("decoded:", " ".join(corpus.tgt_vocab.decode(hard[0])))

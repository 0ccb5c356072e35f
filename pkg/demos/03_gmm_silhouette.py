# EM for diagonal Gaussian mixtures, and the silhouette score as a guide to the number of clusters.

# %%
import numpy as np

from mgmae.gmm import assign, fit_em, posterior, silhouette

rng = np.random.default_rng(0)
centers = np.array([[0.0, 0.0, 0.0], [6.0, 0.0, 1.0], [0.0, 6.0, -1.0]])
X = np.vstack([c + rng.standard_normal((150, 3)) for c in centers])

# %% the mean log-likelihood never goes down
model = fit_em(X, 3, seed=0)
print("iterations", len(model.history))
print("log-likelihood", np.round(model.history[:6], 4), "...", round(model.history[-1], 4))
print("weights", np.round(model.weights, 3))
print("means\n", np.round(model.means, 2))

# %% posteriors are soft, assignments are their argmax
print("posterior of a point between two blobs:", np.round(posterior(model, [3.0, 0.0, 0.5]), 3))

# %% silhouette peaks at the true number of blobs
for k in range(2, 7):
    labels = assign(fit_em(X, k, seed=0), X)
    print(f"k={k}  silhouette={silhouette(X, labels):.3f}")

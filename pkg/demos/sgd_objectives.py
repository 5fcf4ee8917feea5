#!/usr/bin/env python3
"""One SGD loop, many convex objectives.

The update is always x <- x - alpha * N * G_i(x) with G_i the gradient of a
single term; swapping the objective only swaps the per-term gradient.
Full-objective evaluation after each epoch runs as a parallel fold.
"""

import numpy as np

from foldml import Dataset, Objective, objective_value, sgd_fit
from foldml.sgd import SgdModel

rng = np.random.default_rng(19)

n, d = 4_000, 6
X = rng.uniform(-1.0, 1.0, size=(n, d))
beta_true = rng.normal(size=d)

# ---- least squares: SGD walks to the closed-form solution ---------------
y = X @ beta_true + rng.normal(0.0, 0.1, size=n)
data = Dataset(X, y)
model, trace = sgd_fit(data, Objective("least_squares"), alpha0=3e-5, epochs=40, rng_seed=0, p=2)
closed_form = np.linalg.solve(X.T @ X, X.T @ y)
print("least squares:")
print("  ridge of the trace:", [round(t.objective, 1) for t in trace[:6]], "...",
      round(trace[-1].objective, 3))
print("  |sgd - closed form| =", f"{np.abs(model.x - closed_form).max():.2e}")

# ---- lasso: the L1 subgradient shrinks useless coordinates --------------
sparse_beta = beta_true.copy()
sparse_beta[2:] = 0.0
y_sparse = X @ sparse_beta + rng.normal(0.0, 0.05, size=n)
lasso_model, _ = sgd_fit(Dataset(X, y_sparse), Objective("lasso", mu=30.0),
                         alpha0=3e-5, epochs=40, rng_seed=0)
print("\nlasso (true support is the first two coordinates):")
print("  coef:", np.round(lasso_model.x, 3))

# ---- hinge and logistic share the +-1 label convention ------------------
labels = np.where(X @ beta_true > 0, 1.0, -1.0)
signed = Dataset(X, labels)
for kind in ("logistic", "svm_hinge"):
    m, tr = sgd_fit(signed, Objective(kind), alpha0=1e-3, epochs=30, rng_seed=1)
    acc = float(np.mean(np.sign(X @ m.x) == labels))
    print(f"\n{kind}: objective {tr[0].objective:.1f} -> {tr[-1].objective:.1f}, "
          f"training accuracy {acc:.3f}")

# ---- recommendation: low-rank completion over (i, j, value) triples ------
L_true = rng.normal(size=(2, 30))
R_true = rng.normal(size=(2, 40))
obs = [(i, j) for i in range(30) for j in range(40) if rng.uniform() < 0.5]
triples = np.array(obs, dtype=float)
values = np.array([L_true[:, i] @ R_true[:, j] for i, j in obs])
rec_data = Dataset(triples, values)
rec = Objective("recommendation", mu=0.02, rank=2)
rec_model, rec_trace = sgd_fit(rec_data, rec, alpha0=1e-4, epochs=80, rng_seed=2)
print(f"\nrecommendation: objective {rec_trace[0].objective:.1f} -> {rec_trace[-1].objective:.4f} "
      f"on {len(obs)} observed entries")
print("  residual check:",
      round(objective_value(rec, rec_model, rec_data, p=2), 4))

# the objective fold is also usable standalone, e.g. for a model you built
zero = SgdModel(x=np.zeros(d))
print("\nleast-squares objective at x=0 equals sum of y^2:",
      np.isclose(objective_value(Objective("least_squares"), zero, data), y @ y))

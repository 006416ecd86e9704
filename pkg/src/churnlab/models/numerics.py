import numpy as np

# probabilities are clipped to [PROB_EPS, 1 - PROB_EPS] before taking log-odds,
# keeping pure leaves and degenerate priors finite
PROB_EPS = 1e-15


def sigmoid(m):
    m = np.asarray(m, dtype=float)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logit(p):
    p = np.clip(np.asarray(p, dtype=float), PROB_EPS, 1.0 - PROB_EPS)
    return np.log(p) - np.log1p(-p)

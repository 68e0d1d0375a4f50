"""Gaussian-process regression over the serving-weight box.

Squared-exponential kernel with one lengthscale per dimension. Targets are
standardized per fit and hyperparameters are picked by exhaustive search
over a fixed grid, maximizing the log marginal likelihood.
"""
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import InsufficientDataError

LENGTHSCALE_GRID = (0.05, 0.1, 0.2, 0.5, 1.0)
SIGNAL_VARIANCE_GRID = (0.5, 1.0, 2.0)
NOISE_VARIANCE_GRID = (1e-4, 1e-3, 1e-2, 1e-1)
JITTER = 1e-8
LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class Kernel:
    lengthscales: tuple
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = tuple(float(x) for x in np.ravel(self.lengthscales))
        if not ls or min(ls) <= 0:
            raise ValueError("lengthscales must be positive")
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        object.__setattr__(self, "lengthscales", ls)

    def __call__(self, a, b):
        a = np.atleast_2d(a) / self.lengthscales
        b = np.atleast_2d(b) / self.lengthscales
        sq = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        return self.signal_variance * np.exp(-0.5 * sq)


@dataclass(frozen=True, eq=False)
class GPModel:
    inputs: np.ndarray
    targets: np.ndarray  # standardized
    y_mean: float
    y_scale: float
    kernel: Kernel
    chol: np.ndarray  # lower factor of K + (noise + jitter) I
    weights: np.ndarray  # (K + noise I)^-1 targets
    constant_fallback: bool = False

    @property
    def n(self):
        return len(self.targets)


def _standardize(values):
    y = np.asarray(values, dtype=float)
    mean = float(y.mean())
    scale = float(y.std())
    fallback = not scale > 0
    if fallback:
        scale = 1.0
    return (y - mean) / scale, mean, scale, fallback


def condition(points, values, kernel: Kernel, standardize=True) -> GPModel:
    """Condition a GP with fixed hyperparameters on the data."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if standardize:
        y, mean, scale, fallback = _standardize(values)
    else:
        y, mean, scale, fallback = np.asarray(values, dtype=float), 0.0, 1.0, False
    gram = kernel(x, x) + (kernel.noise_variance + JITTER) * np.eye(len(x))
    chol = np.linalg.cholesky(gram)
    w = cho_solve((chol, True), y)
    return GPModel(x, y, mean, scale, kernel, chol, w, fallback)


def _hyper_grid(dim):
    for ls in itertools.product(LENGTHSCALE_GRID, repeat=dim):
        for sv in SIGNAL_VARIANCE_GRID:
            for nv in NOISE_VARIANCE_GRID:
                yield ls, sv, nv


def fit(points, values) -> GPModel:
    """Fit by exhaustive marginal-likelihood search over the hyperparameter grid.

    Ties keep the first grid entry (grid order is lengthscales, then signal
    variance, then noise variance, each ascending).
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if len(x) < 2 or len(x) != len(values):
        raise InsufficientDataError(f"need at least 2 matching points and values, got {len(x)} and {len(values)}")
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("inputs must lie in the unit box")
    y, _, _, _ = _standardize(values)
    n, dim = x.shape

    ls_grid = np.array(list(itertools.product(LENGTHSCALE_GRID, repeat=dim)))  # (L, dim)
    diff2 = (x[:, None, :] - x[None, :, :]) ** 2  # (n, n, dim)
    sq = np.einsum("ijd,ld->lij", diff2, 1.0 / ls_grid**2)  # (L, n, n)
    base = np.exp(-0.5 * sq)
    sv = np.array(SIGNAL_VARIANCE_GRID)[:, None, None, None, None]
    nv = np.array(NOISE_VARIANCE_GRID)[None, :, None, None, None]
    eye = np.eye(n)
    # (S, N, L, n, n) stack of regularized Gram matrices
    grams = sv * base[None, None] + (nv + JITTER) * eye
    chol = np.linalg.cholesky(grams)
    z = np.linalg.solve(chol, np.broadcast_to(y, grams.shape[:-1])[..., None])[..., 0]
    lml = (-0.5 * np.sum(z**2, axis=-1)
           - np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
           - 0.5 * n * LOG_2PI)  # (S, N, L)
    # reorder to grid order (L, S, N) before the first-max argmax
    flat = np.transpose(lml, (2, 0, 1)).ravel()
    li, si, ni = np.unravel_index(int(np.argmax(flat)), (len(ls_grid), len(SIGNAL_VARIANCE_GRID), len(NOISE_VARIANCE_GRID)))
    kernel = Kernel(tuple(ls_grid[li]), SIGNAL_VARIANCE_GRID[si], NOISE_VARIANCE_GRID[ni])
    return condition(x, values, kernel)


def predict(model: GPModel, points, standardized=False):
    """Posterior mean and latent variance at each row of ``points``."""
    xs = np.atleast_2d(np.asarray(points, dtype=float))
    kx = model.kernel(xs, model.inputs)  # (q, n)
    mean = kx @ model.weights
    v = solve_triangular(model.chol, kx.T, lower=True)
    var = np.maximum(model.kernel.signal_variance - np.sum(v**2, axis=0), 0.0)
    if standardized:
        return mean, var
    return mean * model.y_scale + model.y_mean, var * model.y_scale**2


def posterior(model: GPModel, x):
    mean, var = predict(model, np.reshape(x, (1, -1)))
    return float(mean[0]), float(var[0])


def log_marginal_likelihood(model: GPModel) -> float:
    """Gaussian log evidence of the standardized targets."""
    z = solve_triangular(model.chol, model.targets, lower=True)
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(model.chol))) - 0.5 * model.n * LOG_2PI)


def sample_prior(kernel: Kernel, points, rng, n_samples=1):
    """Draw noiseless function values from the GP prior at ``points``."""
    x = np.atleast_2d(points)
    gram = kernel(x, x) + 1e-10 * np.eye(len(x))
    chol = np.linalg.cholesky(gram)
    return (chol @ rng.standard_normal((len(x), n_samples))).T

"""Finite metric-measure spaces and robust penalty functions.

A metric-measure space here is a finite set of atoms with a pairwise
distance (or kernel) matrix and a probability weight vector.  The robust
penalties (Tukey, Huber, truncation) act pointwise on scalar distances
and distortions and are shared by every solver in the package.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "METRIC_KINDS",
    "RobustPenalty",
    "penalty_eval",
    "MmSpace",
    "build_space",
    "space_from_distances",
    "cross_distances",
    "distortion_samples",
    "validate_triangle",
    "load_points_csv",
    "load_weights_csv",
    "load_distance_csv",
    "save_points_csv",
]

#: Supported ways of turning ambient coordinates into a pairwise matrix.
METRIC_KINDS = ("euclidean", "sqeuclidean", "inner", "precomputed")

_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class RobustPenalty:
    """Pointwise penalty applied to distances or distance distortions.

    Parameters
    ----------
    kind : {'squared', 'tukey', 'huber', 'truncate'}
        squared : ``|x|**p``
        tukey : ``|x|**p`` capped at ``tau**p``
        huber : ``x**2 / (2 tau)`` below ``tau``, ``|x| - tau/2`` above
        truncate : ``min(|x|, lam)``
    p : float
        Exponent, used by 'squared' and 'tukey'.  Must be >= 1.
    tau : float
        Threshold, used by 'tukey' and 'huber'.  ``tau = inf`` makes the
        Tukey penalty identical to the squared one.
    lam : float
        Truncation level, used by 'truncate'.
    """

    kind: str
    p: float = 2.0
    tau: float = np.inf
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("squared", "tukey", "huber", "truncate"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind in ("squared", "tukey") and not self.p >= 1.0:
            raise ValueError("penalty exponent p must be >= 1")
        if self.kind == "tukey" and not self.tau >= 0.0:
            raise ValueError("tukey threshold tau must be >= 0")
        if self.kind == "huber" and not self.tau > 0.0:
            raise ValueError("huber threshold tau must be > 0")
        if self.kind == "truncate" and not self.lam >= 0.0:
            raise ValueError("truncation level lam must be >= 0")

    @classmethod
    def squared(cls, p=2.0):
        return cls("squared", p=float(p))

    @classmethod
    def tukey(cls, p=2.0, tau=np.inf):
        return cls("tukey", p=float(p), tau=float(tau))

    @classmethod
    def huber(cls, tau):
        return cls("huber", tau=float(tau))

    @classmethod
    def truncate(cls, lam):
        return cls("truncate", lam=float(lam))

    @property
    def root(self):
        """Exponent whose inverse turns an integrated cost into a distance."""
        if self.kind in ("squared", "tukey"):
            return self.p
        if self.kind == "huber":
            return 2.0
        return 1.0

    def __call__(self, x):
        return penalty_eval(self, x)

    def params(self):
        out = {"kind": self.kind}
        if self.kind in ("squared", "tukey"):
            out["p"] = self.p
        if self.kind in ("tukey", "huber"):
            out["tau"] = self.tau
        if self.kind == "truncate":
            out["lam"] = self.lam
        return out


def _abs_power(x, p):
    # exact powering for small integer exponents, |x|^p via exp/log otherwise
    ax = np.abs(x)
    if p == 1.0:
        return ax
    if p == 2.0:
        return x * x
    if float(p).is_integer() and p <= 8:
        return ax ** int(p)
    return ax ** p


def penalty_eval(penalty, x):
    """Evaluate a :class:`RobustPenalty` at scalar or array ``x``.

    Returns a nonnegative value of the same shape as ``x``.
    """
    x = np.asarray(x, dtype=float)
    if penalty.kind == "squared":
        out = _abs_power(x, penalty.p)
    elif penalty.kind == "tukey":
        out = np.minimum(_abs_power(x, penalty.p), penalty.tau ** penalty.p)
    elif penalty.kind == "huber":
        ax = np.abs(x)
        out = np.where(ax <= penalty.tau,
                       x * x / (2.0 * penalty.tau),
                       ax - penalty.tau / 2.0)
    else:  # truncate
        out = np.minimum(np.abs(x), penalty.lam)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class MmSpace:
    """A finite metric-measure space.

    Attributes
    ----------
    dist : ndarray, shape (n, n)
        Pairwise distance (or inner-product kernel) matrix.
    weights : ndarray, shape (n,)
        Probability weights, nonnegative and summing to one.
    points : ndarray, shape (n, d) or None
        Ambient coordinates when the space was built from a point cloud.
    metric : str
        One of :data:`METRIC_KINDS`; records how ``dist`` was produced.
    """

    dist: np.ndarray
    weights: np.ndarray
    points: np.ndarray | None = None
    metric: str = "precomputed"

    def __post_init__(self):
        for arr in (self.dist, self.weights, self.points):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n(self):
        return self.dist.shape[0]

    @property
    def diameter(self):
        return float(self.dist.max())

    def __len__(self):
        return self.n


def _pairwise(points, metric):
    x = np.asarray(points, dtype=float)
    if metric == "inner":
        g = x @ x.T
        return 0.5 * (g + g.T)
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    if metric == "sqeuclidean":
        return d2
    return np.sqrt(d2)


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape[0] != n:
        raise ValueError(f"weights have length {w.shape[0]}, expected {n}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    s = w.sum()
    if abs(s - 1.0) > _WEIGHT_SUM_TOL:
        raise ValueError(f"weights sum to {s!r}, expected 1 within {_WEIGHT_SUM_TOL}")
    return w / s


def build_space(points, weights=None, metric="euclidean"):
    """Build an :class:`MmSpace` from ambient coordinates.

    Parameters
    ----------
    points : array-like, shape (n, d)
        One point per row.  Must be finite.
    weights : array-like, shape (n,), optional
        Probability weights; uniform ``1/n`` when omitted.
    metric : {'euclidean', 'sqeuclidean', 'inner'}
        Pairwise matrix to compute from the coordinates.

    Returns
    -------
    MmSpace
    """
    pts = np.array(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("points must be a nonempty (n, d) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite coordinates")
    if metric not in ("euclidean", "sqeuclidean", "inner"):
        raise ValueError(f"metric must be computable from points, got {metric!r}")
    n = pts.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else _check_weights(weights, n)
    return MmSpace(dist=_pairwise(pts, metric), weights=w, points=pts, metric=metric)


def space_from_distances(dist, weights=None, check_triangle=False, tol=1e-9):
    """Build an :class:`MmSpace` from a precomputed distance matrix.

    The matrix must be square, finite, nonnegative, symmetric and have a
    zero diagonal.  The O(n^3) triangle-inequality check is opt-in.
    """
    d = np.array(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
        raise ValueError("dist must be a square matrix")
    if not np.all(np.isfinite(d)):
        raise ValueError("dist contains non-finite entries")
    if np.any(d < 0):
        raise ValueError("dist has negative entries")
    if not np.allclose(d, d.T, atol=1e-10):
        raise ValueError("dist is not symmetric")
    if np.any(np.abs(np.diag(d)) > 1e-10):
        raise ValueError("dist has a nonzero diagonal")
    if check_triangle:
        validate_triangle(d, tol=tol)
    n = d.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else _check_weights(weights, n)
    return MmSpace(dist=d, weights=w, points=None, metric="precomputed")


def validate_triangle(dist, tol=1e-9):
    """Check ``dist[i, k] <= dist[i, j] + dist[j, k] + tol`` for all triples."""
    d = np.asarray(dist, dtype=float)
    n = d.shape[0]
    for j in range(n):
        slack = d[:, j][:, None] + d[j, :][None, :] - d
        if slack.min() < -tol:
            i, k = np.unravel_index(np.argmin(slack), slack.shape)
            raise ValueError(
                f"triangle inequality violated at ({i}, {j}, {k}) "
                f"by {-slack.min():.3e}")
    return True


def cross_distances(x_space, y_space):
    """Pairwise distances between the atoms of two spaces sharing an ambient space.

    Both spaces must carry points of the same dimension and use the same
    point-based metric; the result is an (m, n) matrix under that metric.
    """
    if x_space.points is None or y_space.points is None:
        raise ValueError("both spaces must carry ambient coordinates")
    if x_space.metric != y_space.metric or x_space.metric == "precomputed":
        raise ValueError("spaces must share a point-based metric")
    xp, yp = x_space.points, y_space.points
    if xp.shape[1] != yp.shape[1]:
        raise ValueError("ambient dimensions differ")
    if x_space.metric == "inner":
        return xp @ yp.T
    # the difference form cancels exactly for coincident points, which the
    # Gram-matrix expansion does not
    d2 = np.sum((xp[:, None, :] - yp[None, :, :]) ** 2, axis=2)
    if x_space.metric == "sqeuclidean":
        return d2
    return np.sqrt(d2)


def distortion_samples(x_space, y_space, pairing=None, size=None, rng=None):
    """Sample distortion magnitudes ``|dX[i, i'] - dY[j, j']|``.

    Parameters
    ----------
    x_space, y_space : MmSpace
        Spaces whose stored matrices are compared entrywise.
    pairing : array-like of (i, j) pairs, optional
        Matched indices.  ``None`` stands for the full product pairing
        (every i matched with every j); in that case ``size`` is required.
    size : int, optional
        Number of 4-tuples to draw uniformly (seeded, with replacement).
        When omitted, all ordered pairs of pairing entries are enumerated,
        self-pairs included.
    rng : numpy Generator or int seed, optional

    Returns
    -------
    ndarray
        Nonnegative distortion values, length ``size`` or ``len(pairing)**2``.
    """
    cx, cy = x_space.dist, y_space.dist
    m, n = cx.shape[0], cy.shape[0]
    if pairing is None:
        if size is None:
            raise ValueError("size is required with the implicit product pairing")
        rng = np.random.default_rng(rng)
        i = rng.integers(0, m, size)
        ip = rng.integers(0, m, size)
        j = rng.integers(0, n, size)
        jp = rng.integers(0, n, size)
        return np.abs(cx[i, ip] - cy[j, jp])
    pairs = np.asarray(pairing, dtype=int)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
        raise ValueError("pairing must be a nonempty list of (i, j) pairs")
    if pairs[:, 0].min() < 0 or pairs[:, 0].max() >= m \
            or pairs[:, 1].min() < 0 or pairs[:, 1].max() >= n:
        raise ValueError("pairing indices out of range")
    k = pairs.shape[0]
    if size is None:
        a = np.repeat(np.arange(k), k)
        b = np.tile(np.arange(k), k)
    else:
        rng = np.random.default_rng(rng)
        a = rng.integers(0, k, size)
        b = rng.integers(0, k, size)
    i, j = pairs[a, 0], pairs[a, 1]
    ip, jp = pairs[b, 0], pairs[b, 1]
    return np.abs(cx[i, ip] - cy[j, jp])


# ---------------------------------------------------------------------------
# CSV interfaces


def _has_header(first_line):
    for tok in first_line.replace(",", " ").split():
        try:
            float(tok)
        except ValueError:
            return True
    return False


def load_points_csv(path):
    """Load a point cloud: one point per row, optional header line."""
    with open(path) as fh:
        first = fh.readline()
    skip = 1 if first.strip() and _has_header(first) else 0
    pts = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return pts


def load_weights_csv(path):
    """Load a single-column weight vector."""
    w = np.loadtxt(path, delimiter=",").ravel()
    return w


def load_distance_csv(path):
    """Load an n x n distance matrix."""
    d = np.loadtxt(path, delimiter=",", ndmin=2)
    if d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got {d.shape}")
    return d


def save_points_csv(points, path):
    np.savetxt(path, np.asarray(points, dtype=float), delimiter=",")

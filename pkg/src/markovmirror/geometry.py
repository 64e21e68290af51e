"""Feasible sets, mirror maps, and prox machinery.

Each geometry couples a feasible set with the mirror map that makes its
prox step closed-form: boxes and Euclidean balls with the half-squared
Euclidean map (norm exponent p = 2), and products of probability
simplexes with the negative-entropy map (p = 1).  The entropy map on a
K-block product is scaled by K so that the Bregman divergence stays
1-strongly convex with respect to the full l1 norm, not just blockwise.

Every geometry also carries a generic projected-gradient prox solver
used to cross-check the closed forms, plus the linear-maximization and
sampling helpers the validation layer needs.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import GeometryError, InputError

# Total probability mass reserved for the simplex floor; after every prox
# step a simplex block y is replaced by (1 - nu) * y + nu / dim so that
# entropy gradients stay finite on subsequent steps.
SIMPLEX_NU = 1e-9


def dual_exponent(p):
    """Return q with 1/p + 1/q = 1; p must lie in [1, 2]."""
    p = float(p)
    if not 1.0 <= p <= 2.0 or not np.isfinite(p):
        raise GeometryError(f"norm exponent p={p!r} outside [1, 2]")
    if p == 1.0:
        return np.inf
    return p / (p - 1.0)


class NormPair:
    """Primal exponent p in [1, 2] together with its dual exponent q."""

    __slots__ = ("p", "q")

    def __init__(self, p):
        self.p = float(p)
        self.q = dual_exponent(p)

    def norm(self, v, axis=None):
        return np.linalg.norm(v, ord=self.p, axis=axis)

    def dual_norm(self, v, axis=None):
        return np.linalg.norm(v, ord=self.q, axis=axis)

    def holder_maximizer(self, v):
        """Unit-p-norm z achieving <v, z> = ||v||_q (used to test the duality identity)."""
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            return np.zeros_like(v)
        if self.p == 1.0:
            z = np.zeros_like(v)
            i = int(np.argmax(np.abs(v)))
            z[i] = np.sign(v[i])
            return z
        q = self.q
        scale = np.linalg.norm(v, ord=q) ** (q - 1.0)
        return np.sign(v) * np.abs(v) ** (q - 1.0) / scale

    def __repr__(self):
        return f"NormPair(p={self.p})"


class Geometry:
    """Base class: feasible set + mirror map + norm pair."""

    kind = "abstract"
    mirror_map = "abstract"

    def __init__(self, d, norm_pair):
        if d < 1:
            raise InputError(f"dimension must be >= 1, got {d}")
        self.d = int(d)
        self.norm_pair = norm_pair

    # -- norms ---------------------------------------------------------
    def norm(self, v, axis=None):
        return self.norm_pair.norm(v, axis=axis)

    def dual_norm(self, v, axis=None):
        return self.norm_pair.dual_norm(v, axis=axis)

    # -- interface filled in by subclasses -----------------------------
    def bregman(self, x, y):
        raise NotImplementedError

    def prox(self, x, xi):
        raise NotImplementedError

    def diameter_sq(self):
        raise NotImplementedError

    def center(self):
        raise NotImplementedError

    def contains(self, x, tol=1e-10):
        raise NotImplementedError

    def project(self, v):
        """Euclidean projection onto the feasible set."""
        raise NotImplementedError

    def linear_argmax(self, coef):
        """argmax over the feasible set of <coef, u>."""
        raise NotImplementedError

    def sample(self, rng, n=None):
        """Draw a feasible point (or an (n, d) batch) for randomized checks."""
        raise NotImplementedError

    def vertices(self):
        raise GeometryError(f"{self.kind} geometry has no finite vertex list")

    def _mirror_grad(self, v):
        raise NotImplementedError

    # -- shared machinery ----------------------------------------------
    def _check_point(self, x, name="x"):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise InputError(f"{name} has shape {x.shape}, expected ({self.d},)")
        if not np.all(np.isfinite(x)):
            raise InputError(f"{name} contains NaN/Inf")
        return x

    def prox_generic(self, x, xi, tol=1e-10, max_iter=10_000):
        """Fallback prox: projected gradient with backtracking on
        h(y) = V(x, y) + <xi, y>, stopped at fixed-point (KKT) residual <= tol.

        Independent of the closed forms; used to cross-validate them.
        """
        x = self._check_point(x)
        xi = self._check_point(xi, "xi")
        if not self.contains(x):
            raise InputError("prox anchored at infeasible x")
        gx = self._mirror_grad(x)

        def h(y):
            return self.bregman(x, y) + float(xi @ y)

        y = x.copy()
        y_prev = y.copy()
        hy = h(y)
        step = 1.0
        mom = 0.0
        t_acc = 1.0
        for _ in range(max_iter):
            g_y = self._mirror_grad(y) - gx + xi
            # unit-step fixed-point residual certifies the KKT system
            resid = np.max(np.abs(y - self.project(y - g_y)))
            if resid <= tol:
                return y
            # momentum keeps the iteration count ~sqrt(kappa); the entropy
            # map's curvature blows up near the floor, so plain projected
            # gradient can exhaust the budget there
            z = self.project(y + mom * (y - y_prev))
            g = self._mirror_grad(z) - gx + xi
            hz = h(z)
            while True:
                y_trial = self.project(z - step * g)
                delta = y_trial - z
                h_trial = h(y_trial)
                if h_trial <= hz + g @ delta + (delta @ delta) / (2.0 * step) + 1e-15:
                    break
                step *= 0.5
                if step < 1e-18:
                    raise GeometryError("prox line search collapsed")
            if h_trial <= hy + 1e-15:
                y_prev, y, hy = y, y_trial, h_trial
                t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc**2))
                mom = (t_acc - 1.0) / t_next
                t_acc = t_next
            else:
                # extrapolation overshot: drop momentum, retry as plain PG
                t_acc = 1.0
                mom = 0.0
                y_prev = y.copy()
            step = min(step * 1.5, 1e6)
        raise GeometryError(
            f"generic prox did not reach KKT residual {tol:g} in {max_iter} iterations"
        )


class BoxGeometry(Geometry):
    """[lo, hi]^d with the half-squared Euclidean mirror map (p = 2)."""

    kind = "box"
    mirror_map = "half-squared-euclidean"

    def __init__(self, d, lo=0.0, hi=1.0):
        super().__init__(d, NormPair(2.0))
        self.lo = float(lo)
        self.hi = float(hi)
        if not self.lo < self.hi:
            raise InputError(f"box needs lo < hi, got [{lo}, {hi}]")

    def bregman(self, x, y):
        x = self._check_point(x)
        y = self._check_point(y, "y")
        diff = y - x
        return 0.5 * float(diff @ diff)

    def _mirror_grad(self, v):
        return v

    def prox(self, x, xi):
        x = self._check_point(x)
        xi = self._check_point(xi, "xi")
        if not self.contains(x):
            raise InputError("prox anchored at infeasible x")
        return np.clip(x - xi, self.lo, self.hi)

    def diameter_sq(self):
        return self.d * (self.hi - self.lo) ** 2 / 8.0

    def center(self):
        return np.full(self.d, 0.5 * (self.lo + self.hi))

    def contains(self, x, tol=1e-10):
        x = np.asarray(x, dtype=float)
        return x.shape == (self.d,) and bool(
            np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol)
        )

    def project(self, v):
        return np.clip(v, self.lo, self.hi)

    def linear_argmax(self, coef):
        coef = self._check_point(coef, "coef")
        return np.where(coef > 0, self.hi, self.lo).astype(float)

    def sample(self, rng, n=None):
        size = (self.d,) if n is None else (n, self.d)
        return rng.uniform(self.lo, self.hi, size=size)

    def vertices(self):
        if self.d > 16:
            raise GeometryError("box vertex enumeration capped at d = 16")
        corners = itertools.product((self.lo, self.hi), repeat=self.d)
        return [np.array(c, dtype=float) for c in corners]


class BallGeometry(Geometry):
    """Euclidean ball with the half-squared Euclidean mirror map (p = 2)."""

    kind = "ball"
    mirror_map = "half-squared-euclidean"

    def __init__(self, d, radius=1.0, center=None):
        super().__init__(d, NormPair(2.0))
        self.radius = float(radius)
        if self.radius <= 0:
            raise InputError(f"ball radius must be positive, got {radius}")
        self._center = (
            np.zeros(d) if center is None else self._check_point(np.asarray(center, float))
        )

    def bregman(self, x, y):
        x = self._check_point(x)
        y = self._check_point(y, "y")
        diff = y - x
        return 0.5 * float(diff @ diff)

    def _mirror_grad(self, v):
        return v

    def prox(self, x, xi):
        x = self._check_point(x)
        xi = self._check_point(xi, "xi")
        if not self.contains(x):
            raise InputError("prox anchored at infeasible x")
        return self.project(x - xi)

    def diameter_sq(self):
        return self.radius**2 / 2.0

    def center(self):
        return self._center.copy()

    def contains(self, x, tol=1e-10):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            return False
        return bool(np.linalg.norm(x - self._center) <= self.radius + tol)

    def project(self, v):
        off = v - self._center
        r = np.linalg.norm(off)
        if r <= self.radius:
            return np.asarray(v, dtype=float).copy()
        return self._center + off * (self.radius / r)

    def linear_argmax(self, coef):
        coef = self._check_point(coef, "coef")
        r = np.linalg.norm(coef)
        if r == 0.0:
            return self.center()
        return self._center + coef * (self.radius / r)

    def sample(self, rng, n=None):
        m = 1 if n is None else n
        g = rng.normal(size=(m, self.d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(size=(m, 1)) ** (1.0 / self.d)
        pts = self._center + g * radii
        return pts[0] if n is None else pts


def _project_block_simplex(v, floor):
    """Euclidean projection of v onto {y : y_i >= floor, sum y = 1}."""
    dim = v.shape[0]
    mass = 1.0 - dim * floor
    w = v - floor
    u = np.sort(w)[::-1]
    cum = np.cumsum(u) - mass
    idx = np.arange(1, dim + 1)
    rho = np.nonzero(u - cum / idx > 0)[0][-1]
    theta = cum[rho] / (rho + 1.0)
    return np.maximum(w - theta, 0.0) + floor


class SimplexGeometry(Geometry):
    """Product of probability simplexes with the negative-entropy map (p = 1).

    A plain simplex is the one-block case.  The entropy map is scaled by
    the number of blocks K: V(x, y) = K * sum_k KL(y_k || x_k), which is
    what 1-strong convexity w.r.t. the full l1 norm requires on products.
    Every prox output is folded onto {y_i >= nu/dim, sum = 1} by mixing a
    nu-fraction of the uniform block back in.
    """

    kind = "simplex-product"
    mirror_map = "negative-entropy"

    def __init__(self, block_dims, nu=SIMPLEX_NU):
        if np.isscalar(block_dims):
            block_dims = (int(block_dims),)
        self.block_dims = tuple(int(b) for b in block_dims)
        if any(b < 2 for b in self.block_dims):
            raise InputError(f"simplex blocks need dimension >= 2, got {self.block_dims}")
        super().__init__(sum(self.block_dims), NormPair(1.0))
        self.nu = float(nu)
        if not 0.0 <= self.nu < 1e-3:
            raise InputError(f"floor mass nu={nu} outside [0, 1e-3)")
        self.n_blocks = len(self.block_dims)
        self._slices = []
        start = 0
        for b in self.block_dims:
            self._slices.append(slice(start, start + b))
            start += b

    def blocks(self, x):
        return [x[s] for s in self._slices]

    def _floor(self, dim):
        return self.nu / dim

    def _check_interior(self, x):
        if np.min(x) <= 0.0:
            raise GeometryError("entropy mirror map needs a strictly interior base point")

    def bregman(self, x, y):
        x = self._check_point(x)
        y = self._check_point(y, "y")
        self._check_interior(x)
        if np.min(y) < 0.0:
            raise GeometryError("bregman target point has negative coordinates")
        # y * log(y/x) with the 0 log 0 = 0 convention, plus mass-correction
        # terms that vanish when both block sums are exactly 1
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(y > 0.0, y * np.log(y / x), 0.0)
        total = 0.0
        for s in self._slices:
            total += float(np.sum(terms[s])) + float(np.sum(x[s]) - np.sum(y[s]))
        return self.n_blocks * total

    def _mirror_grad(self, v):
        self._check_interior(v)
        return self.n_blocks * (1.0 + np.log(v))

    def renormalize(self, y):
        """Fold a nonnegative blockwise-unit vector onto the floored simplex."""
        out = np.empty_like(y)
        for s, b in zip(self._slices, self.block_dims):
            block = y[s]
            block = block / np.sum(block)
            out[s] = (1.0 - self.nu) * block + self._floor(b)
        return out

    def prox(self, x, xi):
        x = self._check_point(x)
        xi = self._check_point(xi, "xi")
        if not self.contains(x):
            raise InputError("prox anchored at infeasible x")
        self._check_interior(x)
        out = np.empty_like(x)
        for s in self._slices:
            # exponential reweighting, stabilized by an additive shift
            a = np.log(x[s]) - xi[s] / self.n_blocks
            a -= np.max(a)
            w = np.exp(a)
            out[s] = w
        return self.renormalize(out)

    def diameter_sq(self):
        # max_y V(center, y) in the nu -> 0 limit: K * sum_k log(dim_k)
        return self.n_blocks * float(sum(np.log(b) for b in self.block_dims))

    def center(self):
        out = np.empty(self.d)
        for s, b in zip(self._slices, self.block_dims):
            out[s] = 1.0 / b
        return out

    def contains(self, x, tol=1e-10):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            return False
        for s, b in zip(self._slices, self.block_dims):
            block = x[s]
            if abs(float(np.sum(block)) - 1.0) > 1e-12 + tol:
                return False
            if np.min(block) < self._floor(b) - tol:
                return False
        return True

    def project(self, v):
        out = np.empty_like(np.asarray(v, dtype=float))
        for s, b in zip(self._slices, self.block_dims):
            out[s] = _project_block_simplex(np.asarray(v[s], float), self._floor(b))
        return out

    def linear_argmax(self, coef):
        coef = self._check_point(coef, "coef")
        out = np.zeros(self.d)
        for s in self._slices:
            block = coef[s]
            out[s.start + int(np.argmax(block))] = 1.0
        return out

    def sample(self, rng, n=None):
        m = 1 if n is None else n
        pts = np.empty((m, self.d))
        for s, b in zip(self._slices, self.block_dims):
            pts[:, s] = rng.dirichlet(np.ones(b), size=m)
        pts = np.apply_along_axis(self.renormalize, 1, pts)
        return pts[0] if n is None else pts

    def vertices(self):
        count = int(np.prod(self.block_dims))
        if count > 4096:
            raise GeometryError("vertex enumeration capped at 4096 combinations")
        out = []
        for combo in itertools.product(*(range(b) for b in self.block_dims)):
            v = np.zeros(self.d)
            for s, i in zip(self._slices, combo):
                v[s.start + i] = 1.0
            out.append(v)
        return out


def prox_nonexpansive_check(geometry, x, eta, zeta, slack=1e-9):
    """True iff ||P_x(eta) - P_x(zeta)||_p <= ||eta - zeta||_q + slack."""
    lhs = geometry.norm(geometry.prox(x, eta) - geometry.prox(x, zeta))
    rhs = geometry.dual_norm(np.asarray(eta, float) - np.asarray(zeta, float))
    return bool(lhs <= rhs + slack)

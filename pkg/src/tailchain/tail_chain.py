"""Limiting tail chains of conditioned Markov chains.

Each model couples three ingredients: update maps (psi_a, psi_b) driving
``M_t = psi_a(M_{t-k:t-1}) + psi_b(M_{t-k:t-1}) eps_t``, an innovation law
for the eps_t, and an initial law for (M_1..M_{k-1}).  Four closed-form
families are implemented (Gaussian autoregressive, logistic and
Husler-Reiss random walks, inverted-logistic pure-scale chain) plus the
regime-switching chain driven by latent Bernoulli mode indicators.

Windows are ordered oldest to newest throughout, matching
:mod:`tailchain.recurrence`.
"""
import numpy as np
from scipy.linalg import toeplitz
from scipy.special import expit, log_ndtr, logsumexp, ndtr, ndtri

from .measures import AsymLogisticMeasure
from .mvnorm import mvn_cdf
from .paths import PathEnsemble
from .recurrence import beta_sequence, gaussian_yule_walker
from .transforms import exp_to_frechet
from .utils import DomainError, ParameterError, replicate_rng


# ---------------------------------------------------------------------------
# innovation and initial laws (inverse-CDF sampling throughout)

class NormalLaw:
    def __init__(self, mean, sd):
        self.mean = float(mean)
        self.sd = float(sd)

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def quantile(self, p):
        return self.mean + self.sd * ndtri(np.asarray(p, dtype=float))

    def sample(self, rng, n):
        return self.quantile(rng.uniform(size=n))


class LogisticProfileLaw:
    """CDF (1 + exp(-x/alpha))^(alpha - m) on R; the logistic kernel limit."""

    def __init__(self, alpha, m):
        self.alpha = float(alpha)
        self.m = float(m)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp((self.alpha - self.m) * np.logaddexp(0.0, -x / self.alpha))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        inner = np.expm1(np.log(p) / (self.alpha - self.m))
        return -self.alpha * np.log(inner)

    def sample(self, rng, n):
        return self.quantile(rng.uniform(size=n))


class WeibullScaleLaw:
    """CDF 1 - exp(-alpha x^(1/alpha)) on (0, inf); the inverted-logistic limit."""

    def __init__(self, alpha):
        self.alpha = float(alpha)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.shape(x))
        pos = x > 0
        out[pos] = -np.expm1(-self.alpha * x[pos] ** (1.0 / self.alpha))
        return out

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        return (-np.log1p(-p) / self.alpha) ** self.alpha

    def sample(self, rng, n):
        return self.quantile(rng.uniform(size=n))


class MultivariateNormalLaw:
    """Initial law sampled coordinatewise by inverse CDF through a Cholesky map."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.chol = np.linalg.cholesky(self.cov)

    @property
    def dim(self):
        return self.mean.shape[0]

    def sample(self, rng, n):
        z = ndtri(rng.uniform(size=(n, self.dim)))
        return self.mean[None, :] + z @ self.chol.T

    def cdf(self, x, points=4096, shifts=8):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p, _ = mvn_cdf(x - self.mean[None, :], self.cov, points=points, shifts=shifts)
        return p


class LogisticProfileInitial:
    """Joint initial law with CDF (1 + sum exp(-x_i/alpha))^(alpha-1) on R^(k-1).

    Sequential conditionals are again of logistic-profile type, so sampling
    is exact coordinatewise inversion.
    """

    def __init__(self, alpha, k):
        self.alpha = float(alpha)
        self.k = int(k)

    @property
    def dim(self):
        return self.k - 1

    def cdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = logsumexp(np.concatenate(
            [np.zeros((x.shape[0], 1)), -x / self.alpha], axis=1), axis=1)
        return np.exp((self.alpha - 1.0) * s)

    def sample(self, rng, n):
        a = self.alpha
        out = np.empty((n, self.dim))
        log_s = np.zeros(n)  # log(1 + sum of previous exp(-x/alpha))
        for j in range(1, self.dim + 1):
            u = rng.uniform(size=n)
            inner = np.expm1(np.log(u) / (a - j))
            out[:, j - 1] = -a * (log_s + np.log(inner))
            log_s = np.logaddexp(log_s, -out[:, j - 1] / a)
        return out


class IIDLaw:
    def __init__(self, law, dim):
        self.law = law
        self.dim = int(dim)

    def sample(self, rng, n):
        cols = [self.law.sample(rng, n) for _ in range(self.dim)]
        return np.stack(cols, axis=1)

    def cdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.prod(self.law.cdf(x), axis=1)


class _EmptyInitial:
    dim = 0

    def sample(self, rng, n):
        return np.empty((n, 0))


# ---------------------------------------------------------------------------
# tail-chain models

class TailChainModel:
    """Base: norming descriptors plus update maps, innovation, initial law."""

    kind = None
    k = None
    m0 = 0.0
    norming = None            # "location-scale" | "difference" | "scale-only"

    def update_functions(self, t):
        raise NotImplementedError

    def alpha_seq(self, T):
        """Location slopes alpha_0..alpha_T (1s for difference norming)."""
        raise NotImplementedError

    def beta_seq(self, T):
        """Scale exponents beta_0..beta_T."""
        raise NotImplementedError

    def a_fn(self, window):
        """The location functional of the kernel limit (0 if none)."""
        raise NotImplementedError

    def b_fn(self, window):
        """The scale functional of the kernel limit (1 if none)."""
        raise NotImplementedError

    def descriptor(self):
        return self.kind


class GaussianARTailChain(TailChainModel):
    """Scaled autoregressive limit of the Gaussian-copula chain.

    Norming: a_t(v) = rho_t^2 v, b_t(v) = v^(1/2).  The update maps are the
    gradient of the location functional at the slope window:
    psi_a(m) = rho_t sum_i (phi_i / rho_{t-i}) m_{t-i}, psi_b = rho_t.
    """

    kind = "gaussian_ar"
    norming = "location-scale"
    beta = 0.5

    def __init__(self, rho, horizon=512):
        rho = np.asarray(rho, dtype=float)
        self.k = rho.shape[0]
        self.yw = gaussian_yule_walker(rho)
        self.rho_seq = self.yw.extend(horizon)
        self.horizon = horizon
        q = self.yw.precision
        self.q_kk = q[-1, -1]
        self.innovation = NormalLaw(0.0, np.sqrt(2.0 / self.q_kk))
        if self.k > 1:
            i = np.arange(1, self.k)
            ri = self.rho_seq[i]
            cov = 2.0 * np.outer(ri, ri) * (toeplitz(self.rho_seq[:self.k - 1])
                                            - np.outer(ri, ri))
            self.initial = MultivariateNormalLaw(np.zeros(self.k - 1), cov)
        else:
            self.initial = _EmptyInitial()

    def _rho(self, t):
        if t >= len(self.rho_seq):
            self.rho_seq = self.yw.extend(max(t + 1, 2 * len(self.rho_seq)))
        return self.rho_seq[t]

    def update_functions(self, t):
        if t < self.k:
            raise DomainError("update functions are defined for t >= k")
        k = self.k
        rho_t = self._rho(t)
        coef = np.array([rho_t * self.yw.phi[k - pos - 1] / self._rho(t - k + pos)
                         for pos in range(k)])

        def psi_a(window):
            return np.asarray(window, dtype=float) @ coef

        def psi_b(window):
            w = np.asarray(window, dtype=float)
            return np.full(w.shape[:-1], rho_t)

        return psi_a, psi_b

    def alpha_seq(self, T):
        return self.yw.extend(T) ** 2

    def beta_seq(self, T):
        b = np.full(int(T) + 1, self.beta)
        b[0] = 1.0
        return b

    def a_fn(self, window):
        w = self.yw.phi[::-1]
        return np.square(np.sum(w * np.sqrt(np.asarray(window, dtype=float)), axis=-1))

    def b_fn(self, window):
        return np.sqrt(self.a_fn(window))

    def descriptor(self):
        return f"gaussian_ar(rho={np.array2string(self.yw.rho, separator=',')})"


class LogisticLocationTailChain(TailChainModel):
    """Random walk with a profile correction; limit of the logistic MEV chain."""

    kind = "logistic_rw"
    norming = "difference"

    def __init__(self, alpha, k):
        if not (0.0 < alpha < 1.0):
            raise ParameterError("alpha must lie in (0,1)")
        self.alpha = float(alpha)
        self.k = int(k)
        self.innovation = LogisticProfileLaw(alpha, k)
        self.initial = LogisticProfileInitial(alpha, k) if k > 1 else _EmptyInitial()

    def update_functions(self, t):
        if t < self.k:
            raise DomainError("update functions are defined for t >= k")
        a = self.alpha

        def psi_a(window):
            w = np.asarray(window, dtype=float)
            return -a * logsumexp(-w / a, axis=-1)

        def psi_b(window):
            w = np.asarray(window, dtype=float)
            return np.ones(w.shape[:-1])

        return psi_a, psi_b

    def alpha_seq(self, T):
        return np.ones(int(T) + 1)

    def beta_seq(self, T):
        b = np.zeros(int(T) + 1)
        b[0] = 1.0
        return b

    def a_fn(self, window):
        w = np.asarray(window, dtype=float)
        return -self.alpha * logsumexp(-w / self.alpha, axis=-1)

    def b_fn(self, window):
        w = np.asarray(window, dtype=float)
        return np.ones(w.shape[:-1])

    def descriptor(self):
        return f"logistic_rw(alpha={self.alpha}, k={self.k})"


class HuslerReissLocationTailChain(TailChainModel):
    """Linear random walk on the profile; limit of the Husler-Reiss MEV chain."""

    kind = "husler_reiss_rw"
    norming = "difference"

    def __init__(self, cov):
        cov = np.asarray(cov, dtype=float)
        d = cov.shape[0]
        self.k = d - 1
        self.cov = cov
        q = np.linalg.inv(cov)
        qvec = q @ np.ones(d)
        self.amat = q - np.outer(qvec, qvec) / qvec.sum()
        self.tau = 1.0 / self.amat[-1, -1]
        self.coef = -self.tau * self.amat[-1, :-1]     # position order 0..k-1
        # innovation variance equals tau (not tau^2): the exact full
        # conditional is Gaussian-shaped with precision A_kk on this scale
        self.innovation = NormalLaw(-self.tau * qvec[-1] / qvec.sum(),
                                    np.sqrt(self.tau))
        if self.k > 1:
            sub = cov[:self.k, :self.k]
            T0 = np.zeros((self.k - 1, self.k))
            for r in range(self.k - 1):
                T0[r, r + 1] = 1.0
                T0[r, 0] = -1.0
            sig0 = T0 @ sub @ T0.T
            shift = np.array([cov[0, 0] - cov[0, j] for j in range(1, self.k)])
            self.initial = MultivariateNormalLaw(-shift, sig0)
        else:
            self.initial = _EmptyInitial()

    def update_functions(self, t):
        if t < self.k:
            raise DomainError("update functions are defined for t >= k")
        coef = self.coef

        def psi_a(window):
            return np.asarray(window, dtype=float) @ coef

        def psi_b(window):
            w = np.asarray(window, dtype=float)
            return np.ones(w.shape[:-1])

        return psi_a, psi_b

    def alpha_seq(self, T):
        return np.ones(int(T) + 1)

    def beta_seq(self, T):
        b = np.zeros(int(T) + 1)
        b[0] = 1.0
        return b

    def a_fn(self, window):
        return np.asarray(window, dtype=float) @ self.coef

    def b_fn(self, window):
        w = np.asarray(window, dtype=float)
        return np.ones(w.shape[:-1])

    def descriptor(self):
        return f"husler_reiss_rw(k={self.k})"


class InvertedLogisticScaleTailChain(TailChainModel):
    """Pure-scale chain; limit of the inverted-logistic survival copula.

    The scale exponent drops a geometric step every k lags, so the update at
    time t only sees the window entries old enough to share the current
    scale block: with j = t mod k the newest j-1 entries are zeroed.
    """

    kind = "inverted_logistic_scale"
    norming = "scale-only"
    m0 = 1.0

    def __init__(self, alpha, k):
        if not (0.0 < alpha < 1.0):
            raise ParameterError("alpha must lie in (0,1)")
        self.alpha = float(alpha)
        self.k = int(k)
        self.beta = 1.0 - alpha
        self.innovation = WeibullScaleLaw(alpha)
        self.initial = (IIDLaw(WeibullScaleLaw(alpha), k - 1)
                        if k > 1 else _EmptyInitial())

    def _b(self, window):
        w = np.asarray(window, dtype=float)
        return np.sum(w ** (1.0 / self.alpha), axis=-1) ** (self.alpha * (1.0 - self.alpha))

    def update_functions(self, t):
        if t < self.k:
            raise DomainError("update functions are defined for t >= k")
        k = self.k
        j = t % k
        keep = k if j == 1 else (1 if j == 0 else k - j + 1)

        def psi_a(window):
            w = np.asarray(window, dtype=float)
            return np.zeros(w.shape[:-1])

        def psi_b(window):
            w = np.asarray(window, dtype=float)
            return self._b(w[..., :keep])

        return psi_a, psi_b

    def alpha_seq(self, T):
        return np.zeros(int(T) + 1)

    def beta_seq(self, T):
        return beta_sequence(self.beta, self.k, T)

    def a_fn(self, window):
        w = np.asarray(window, dtype=float)
        return np.zeros(w.shape[:-1])

    def b_fn(self, window):
        return self._b(window)

    def descriptor(self):
        return f"inverted_logistic_scale(alpha={self.alpha}, k={self.k})"


# ---------------------------------------------------------------------------
# operations

def update_functions(model, t):
    """(psi_a, psi_b) of `model` at time t >= k; windows oldest to newest."""
    return model.update_functions(t)


def finite_level_remainder(model, t, x, v):
    """Remainder of the affine update approximation at finite level v.

    Evaluates how far the exact norming composition at level v sits from its
    limit: r_a compares locations, r_b compares scales.  Both vanish as
    v -> inf; for exactly translation-compatible location functionals
    (logistic, Husler-Reiss) r_a is identically zero.
    """
    if t < model.k:
        raise DomainError("remainders are defined for t >= k")
    x = np.asarray(x, dtype=float)
    psi_a, psi_b = model.update_functions(t)
    alpha = model.alpha_seq(t)
    beta = model.beta_seq(t)
    window_t = np.arange(t - model.k, t)
    a_vec = alpha[window_t] * v
    b_vec = v ** beta[window_t]
    if model.norming == "scale-only":
        arg = b_vec * x
        r_a = np.zeros(np.shape(psi_a(x)))
        r_b = 1.0 - (v ** beta[t]) * psi_b(x) / model.b_fn(arg)
        return r_a, r_b
    arg = a_vec + b_vec * x
    a_t = alpha[t] * v
    b_t = v ** beta[t]
    bfn = model.b_fn(arg)
    r_a = (a_t - model.a_fn(arg) + b_t * psi_a(x)) / bfn
    r_b = 1.0 - b_t * psi_b(x) / bfn
    return r_a, r_b


def simulate_hidden_tail_chain(model, T, n_rep, seed):
    """Ensemble of the limiting chain: M_t = psi_a(window) + psi_b(window) eps_t."""
    if T < model.k:
        raise ParameterError("horizon T must be at least the order k")
    rng = replicate_rng(seed, 0)
    k = model.k
    data = np.empty((n_rep, T + 1))
    data[:, 0] = model.m0
    if k > 1:
        data[:, 1:k] = model.initial.sample(rng, n_rep)
    for t in range(k, T + 1):
        psi_a, psi_b = model.update_functions(t)
        eps = model.innovation.sample(rng, n_rep)
        window = data[:, t - k:t]
        data[:, t] = psi_a(window) + psi_b(window) * eps
    return PathEnsemble(data=data, u=None, seed=seed, model=model.descriptor(),
                        norming=model.norming, extras={"limit": True})


def generic_linear_update(a_fn, b_fn, alpha_window, beta_flags, step=1e-6):
    """Gradient-form location update for a user-supplied smooth functional.

    Returns psi_a(m) = grad a(alpha_window) . (beta_flags * m) and the
    constant psi_b = b(alpha_window); beta_flags marks which window
    positions attain the maximal scale exponent.  Covers the general
    unequal-exponent case that the named families never exercise.
    """
    alpha_window = np.asarray(alpha_window, dtype=float)
    k = alpha_window.shape[0]
    grad = np.empty(k)
    for i in range(k):
        up = alpha_window.copy()
        dn = alpha_window.copy()
        h = step * max(1.0, abs(alpha_window[i]))
        up[i] += h
        dn[i] -= h
        grad[i] = (a_fn(up) - a_fn(dn)) / (2.0 * h)
    flags = np.asarray(beta_flags, dtype=float)
    scale = float(b_fn(alpha_window))

    def psi_a(window):
        return np.asarray(window, dtype=float) @ (grad * flags)

    def psi_b(window):
        w = np.asarray(window, dtype=float)
        return np.full(w.shape[:-1], scale)

    return psi_a, psi_b


# ---------------------------------------------------------------------------
# variance-stabilizing transforms

def lamperti_transform(values, model):
    """Z = X^(1-beta) / (b(1_k) (1-beta)); location-only dynamics when b = a^beta."""
    x = np.asarray(values, dtype=float)
    beta = model.beta
    b1 = float(model.b_fn(np.ones(model.k)))
    return x ** (1.0 - beta) / (b1 * (1.0 - beta))


def lamperti_inverse(values, model):
    z = np.asarray(values, dtype=float)
    beta = model.beta
    b1 = float(model.b_fn(np.ones(model.k)))
    return (z * b1 * (1.0 - beta)) ** (1.0 / (1.0 - beta))


def log_transform(values):
    x = np.asarray(values, dtype=float)
    if np.any(x[np.isfinite(x)] <= 0):
        raise DomainError("log transform requires positive path values")
    return np.log(x)


# ---------------------------------------------------------------------------
# regime-switching chain (asymmetric logistic, order 2)

class RegimeSwitchingTailChain:
    """Hidden tail chain with latent extreme/body mode indicators B_t.

    The mode pair (B_{t-2}, B_{t-1}) selects one of six transition laws:
    staying in the tracked mode shifts a closed-form profile law by the
    matching location functional, while dropping to the body realizes the
    infinite atom of the location view and draws an absolute body value.
    The chain terminates at the first pair of consecutive body states.
    """

    kind = "regime_switching"
    k = 2

    def __init__(self, params):
        self.params = params
        self.measure = AsymLogisticMeasure(params=params)
        self._marg12 = self.measure.margin((1, 2))
        self._marg02 = self.measure.margin((0, 2))
        p = params
        self.m10 = p.theta0 / (p.theta0 + p.theta02)
        self.m01 = p.theta1 / (p.theta1 + p.theta01)
        # latent-mode start: complement of the pair mass theta01 + theta012,
        # calibrated against the reported episode-length statistics
        self.p1_initial = p.theta0 + p.theta02

    def m11(self, x0, x1):
        """Mode-continuation probability given both previous states tracked."""
        p = self.params
        x0 = np.asarray(x0, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        kap = np.log((p.theta012 * (1 - p.nu012) / p.nu012)
                     / (p.theta01 * (1 - p.nu01) / p.nu01))
        s012 = np.logaddexp(-x0 / p.nu012, -x1 / p.nu012)
        s01 = np.logaddexp(-x0 / p.nu01, -x1 / p.nu01)
        logratio = kap + (x0 + x1) * (1.0 / p.nu01 - 1.0 / p.nu012) \
            + (p.nu012 - 2.0) * s012 - (p.nu01 - 2.0) * s01
        return expit(-logratio)

    # --- profile laws -------------------------------------------------
    @staticmethod
    def _w_quantile(u, nu, power):
        """Quantile of (1 + exp(-y/nu))^(nu - power)."""
        inner = np.expm1(np.log(u) / (nu - power))
        return -nu * np.log(inner)

    def location_shift(self, A, x0, x1):
        """a_{A,1}: the location functional of the tracked-mode transition."""
        p = self.params
        if A == (1, 1):
            return -p.nu012 * np.logaddexp(-x0 / p.nu012, -x1 / p.nu012)
        if A == (1, 0):
            return x0
        if A == (0, 1):
            return x1
        raise DomainError(f"no tracked-mode transition from regime {A}")

    def tracked_quantile(self, A, u):
        p = self.params
        if A == (1, 1):
            return self._w_quantile(u, p.nu012, 2.0)
        if A == (1, 0):
            return self._w_quantile(u, p.nu02, 1.0)
        if A == (0, 1):
            return self._w_quantile(u, p.nu01, 1.0)
        raise DomainError(f"no tracked-mode transition from regime {A}")

    def body_cdf(self, A, y, prev_body):
        """G_{A,0}: absolute body-value law; depends on the body neighbour."""
        p = self.params
        y = np.asarray(y, dtype=float)
        if A == (1, 1):
            return -np.expm1(-y)
        yv = np.asarray(prev_body, dtype=float)
        ty = exp_to_frechet(np.clip(y, 1e-12, None))
        tx = exp_to_frechet(yv)
        r = ty / tx
        if A == (1, 0):
            w01 = (1.0 + r ** (-1.0 / p.nu01)) ** (p.nu01 - 1.0)
            w012 = (1.0 + r ** (-1.0 / p.nu012)) ** (p.nu012 - 1.0)
            bracket = p.theta1 + p.theta01 * (1.0 + w01) + p.theta012 * w012
            pair = np.stack([np.broadcast_to(tx, ty.shape), ty], axis=-1)
            log_g = 1.0 / tx - self._marg12.value(pair)
        elif A == (0, 1):
            w02 = (1.0 + r ** (-1.0 / p.nu02)) ** (p.nu02 - 1.0)
            w012 = (1.0 + r ** (-1.0 / p.nu012)) ** (p.nu012 - 1.0)
            bracket = p.theta0 + p.theta01 + p.theta02 * w02 + p.theta012 * w012
            pair = np.stack([np.broadcast_to(tx, ty.shape), ty], axis=-1)
            log_g = 1.0 / tx - self._marg02.value(pair)
        else:
            raise DomainError(f"no body transition from regime {A}")
        out = bracket * np.exp(log_g)
        return np.where(y <= 0, 0.0, np.clip(out, 0.0, 1.0))

    def body_quantile(self, A, u, prev_body):
        if A == (1, 1):
            return -np.log1p(-np.asarray(u, dtype=float))
        u = np.asarray(u, dtype=float)
        lo = np.full(u.shape, 1e-9)
        hi = np.full(u.shape, 60.0)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.body_cdf(A, mid, prev_body) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def initial_value_quantile(self, u, mode):
        """M_1 given the first latent mode: profile mixture or body exponential."""
        p = self.params
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        tracked = mode == 1
        if np.any(tracked):
            w = p.theta01 / (p.theta01 + p.theta012)
            ut = u[tracked]
            pick01 = ut < w          # deterministic composition split
            vals = np.empty(ut.shape)
            vals[pick01] = self._w_quantile(ut[pick01] / w, p.nu01, 1.0)
            vals[~pick01] = self._w_quantile((ut[~pick01] - w) / (1 - w), p.nu012, 1.0)
            out[tracked] = vals
        if np.any(~tracked):
            out[~tracked] = -np.log1p(-u[~tracked])
        return out


def simulate_regime_tail_chain(params, T, n_rep, seed):
    """Ensemble of the regime-switching chain with full mode bookkeeping.

    Returns a PathEnsemble whose extras carry the latent modes (int8, -1
    after termination), the termination times, and atom flags marking steps
    whose location-normalized view sits at an infinite atom (body-mode
    steps).  Path values are NaN after termination.
    """
    model = RegimeSwitchingTailChain(params)
    rng = replicate_rng(seed, 0)
    n = int(n_rep)
    values = np.full((n, T + 1), np.nan)
    modes = np.full((n, T + 1), -1, dtype=np.int8)
    term = np.zeros(n, dtype=int)

    values[:, 0] = 0.0
    modes[:, 0] = 1
    b1 = (rng.uniform(size=n) < model.p1_initial).astype(np.int8)
    modes[:, 1] = b1
    values[:, 1] = model.initial_value_quantile(rng.uniform(size=n), b1)

    alive = np.ones(n, dtype=bool)
    for t in range(2, T + 1):
        if not np.any(alive):
            break
        a2 = modes[:, t - 2]
        a1 = modes[:, t - 1]
        v2 = values[:, t - 2]
        v1 = values[:, t - 1]
        p_stay = np.zeros(n)
        both = alive & (a2 == 1) & (a1 == 1)
        p_stay[both] = model.m11(v2[both], v1[both])
        hot_cold = alive & (a2 == 1) & (a1 == 0)
        p_stay[hot_cold] = model.m10
        cold_hot = alive & (a2 == 0) & (a1 == 1)
        p_stay[cold_hot] = model.m01
        b = (rng.uniform(size=n) < p_stay).astype(np.int8)
        u = rng.uniform(size=n)
        for A, mask in ((((1, 1)), both), (((1, 0)), hot_cold), (((0, 1)), cold_hot)):
            if not np.any(mask):
                continue
            stay = mask & (b == 1)
            drop = mask & (b == 0)
            if np.any(stay):
                shift = model.location_shift(A, v2[stay], v1[stay])
                values[stay, t] = shift + model.tracked_quantile(A, u[stay])
            if np.any(drop):
                prev_body = v1[drop] if A == (1, 0) else v2[drop]
                values[drop, t] = model.body_quantile(A, u[drop], prev_body)
        modes[alive, t] = b[alive]
        died = alive & (modes[:, t - 1] == 0) & (b == 0)
        term[died] = t
        alive = alive & ~died
    term[alive] = 0  # 0 marks "did not terminate within the horizon"

    atom = np.where(modes >= 0, (modes == 0).astype(np.int8), np.int8(0))
    # blank out everything after termination
    for r in np.where(term > 0)[0]:
        values[r, term[r] + 1:] = np.nan
        modes[r, term[r] + 1:] = -1
        atom[r, term[r] + 1:] = 0
    ens = PathEnsemble(data=values, u=None, seed=seed,
                       model=f"regime_switching(asym_logistic)",
                       norming="difference",
                       extras={"modes": modes, "termination": term,
                               "atom_flag": atom, "limit": True})
    return ens


def mode_zero_times(modes_row):
    """Times t >= 1 with mode 0 (the latent process's drop times)."""
    return np.where(modes_row[1:] == 0)[0] + 1

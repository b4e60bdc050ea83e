"""Elliptical noise families: constants, density generators, sampling.

Supported families and parameters:

==============  =======================  =========================
family          parameters               nests / notes
==============  =======================  =========================
gaussian        none                     baseline, constants (1, 1)
kotz            N, r, s                  gaussian at N=1, s=1, r=1/2
student_t       m (degrees of freedom)   heavy tails, needs m > 4
pearson_ii      m                        bounded support
pearson_vii     N, m                     student_t-like family
==============  =======================  =========================

The moment constants are defined through the radial law R of the family at a
given dimension: ``c0 = E(R^2)/dim`` and ``kappa0 = E(R^4)/(dim (dim+2))``,
so that a matrix draw Y with scale Theta kron Sigma has
``Cov(vec Y) = c0 * (Theta kron Sigma)``. ``dim=1`` (the default) gives the
classical one-dimensional table of constants; data-facing code passes the
matrix dimension K*D.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "EllipticalModel",
    "MatrixEllipticalSpec",
    "moment_constants",
    "generator_eval",
    "kotz_h_derivative",
    "sample_matrix_elliptical",
    "parse_model_spec",
]

_FAMILIES = {
    "gaussian": (),
    "kotz": ("N", "r", "s"),
    "student_t": ("m",),
    "pearson_ii": ("m",),
    "pearson_vii": ("N", "m"),
}

_ALIASES = {
    "normal": "gaussian",
    "gauss": "gaussian",
    "t": "student_t",
    "studentt": "student_t",
    "student-t": "student_t",
    "pearson2": "pearson_ii",
    "pearsonii": "pearson_ii",
    "pii": "pearson_ii",
    "pearson7": "pearson_vii",
    "pearsonvii": "pearson_vii",
    "pvii": "pearson_vii",
}


@dataclass(frozen=True)
class EllipticalModel:
    """A density-generator family tag plus its parameter map."""

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        fam = _ALIASES.get(self.family.lower(), self.family.lower())
        object.__setattr__(self, "family", fam)
        if fam not in _FAMILIES:
            raise ValueError(
                "unknown family %r; choose from %s" % (self.family, sorted(_FAMILIES))
            )
        wanted = set(_FAMILIES[fam])
        got = set(self.params)
        if got != wanted:
            raise ValueError(
                "family %r needs parameters %s, got %s"
                % (fam, sorted(wanted) or "none", sorted(got) or "none")
            )
        p = {k: float(v) for k, v in self.params.items()}
        object.__setattr__(self, "params", p)
        if fam == "kotz":
            if p["r"] <= 0 or p["s"] <= 0:
                raise ValueError("kotz requires r > 0 and s > 0")
        elif fam == "student_t":
            if p["m"] <= 0:
                raise ValueError("student_t requires m > 0")
        elif fam == "pearson_ii":
            if p["m"] <= -1:
                raise ValueError("pearson_ii requires m > -1")
        elif fam == "pearson_vii":
            if p["N"] <= 0 or p["m"] <= 0:
                raise ValueError("pearson_vii requires N > 0 and m > 0")

    def label(self):
        if not self.params:
            return self.family
        inner = ",".join("%s=%g" % (k, self.params[k]) for k in sorted(self.params))
        return "%s:%s" % (self.family, inner)


def parse_model_spec(text):
    """Parse a CLI model spec like ``kotz:N=2,s=1,r=0.5`` or ``gaussian``.

    Also accepts brace syntax ``kotz:{N:2,s:1,r:0.5}``.
    """
    text = text.strip()
    if ":" not in text:
        return EllipticalModel(text)
    fam, rest = text.split(":", 1)
    rest = rest.strip().strip("{}")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        if "=" in item:
            key, val = item.split("=", 1)
        elif ":" in item:
            key, val = item.split(":", 1)
        else:
            raise ValueError("cannot parse model parameter %r in %r" % (item, text))
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise ValueError("model parameter %r in %r is not a number" % (item, text))
    return EllipticalModel(fam, params)


def _kotz_gamma_args(p, dim):
    base = (2 * p["N"] + dim - 2) / (2 * p["s"])
    if base <= 0:
        raise ValueError(
            "kotz constants undefined at dimension %d: need 2N + dim - 2 > 0" % dim
        )
    return base


def moment_constants(model, dim=1):
    """Second/fourth moment constants (c0, kappa0) of a family.

    ``dim`` is the dimension of the radial law the constants refer to;
    the default 1 reproduces the classical table values. Raises when the
    required moment does not exist.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    p = model.params
    if model.family == "gaussian":
        return 1.0, 1.0
    if model.family == "kotz":
        a = _kotz_gamma_args(p, dim)
        inv_s = 1.0 / p["s"]
        c0 = math.exp(gammaln(a + inv_s) - gammaln(a)) / (dim * p["r"] ** inv_s)
        k0 = math.exp(gammaln(a + 2 * inv_s) - gammaln(a)) / (
            dim * (dim + 2) * p["r"] ** (2 * inv_s)
        )
        return c0, k0
    if model.family == "student_t":
        m = p["m"]
        if m <= 4:
            raise ValueError("student_t fourth-moment constants need m > 4")
        return m / (m - 2), m * m / ((m - 2) * (m - 4))
    if model.family == "pearson_ii":
        m = p["m"]
        return 1.0 / (dim + 2 * m + 2), 1.0 / ((dim + 2 * m + 2) * (dim + 2 * m + 4))
    # pearson_vii
    n2, m = 2 * p["N"], p["m"]
    if n2 <= dim + 4:
        raise ValueError("pearson_vii fourth-moment constants need 2N > dim + 4")
    return m / (n2 - dim - 2), m * m / ((n2 - dim - 2) * (n2 - dim - 4))


def _log_norm_const(model, dim):
    # log of the constant in front of the generator kernel at this dimension
    p = model.params
    half = dim / 2.0
    if model.family == "gaussian":
        return -half * math.log(2 * math.pi)
    if model.family == "kotz":
        a = _kotz_gamma_args(p, dim)
        return (
            math.log(p["s"])
            + a * math.log(p["r"])
            + gammaln(half)
            - half * math.log(math.pi)
            - gammaln(a)
        )
    if model.family == "student_t":
        m = p["m"]
        return gammaln((m + dim) / 2) - gammaln(m / 2) - half * math.log(math.pi * m)
    if model.family == "pearson_ii":
        m = p["m"]
        return gammaln(half + m + 1) - gammaln(m + 1) - half * math.log(math.pi)
    n, m = model.params["N"], model.params["m"]
    if n <= half:
        raise ValueError("pearson_vii generator needs N > dim/2")
    return gammaln(n) - gammaln(n - half) - half * math.log(math.pi * m)


def generator_eval(model, y, dim):
    """Normalized density generator h(y) at the given dimension.

    h is normalized so the elliptical density with identity scale is
    h(|x|^2) on R^dim.
    """
    if y < 0:
        raise ValueError("generator argument must be nonnegative")
    c = math.exp(_log_norm_const(model, dim))
    p = model.params
    if model.family == "gaussian":
        return c * math.exp(-y / 2.0)
    if model.family == "kotz":
        if y == 0 and p["N"] < 1:
            raise ValueError("kotz generator diverges at y=0 for N < 1")
        return c * y ** (p["N"] - 1) * math.exp(-p["r"] * y ** p["s"])
    if model.family == "student_t":
        m = p["m"]
        return c * (1 + y / m) ** (-(m + dim) / 2.0)
    if model.family == "pearson_ii":
        if y > 1:
            return 0.0
        return c * (1 - y) ** p["m"]
    return c * (1 + y / p["m"]) ** (-p["N"])


def kotz_h_derivative(model, y, k, dim, max_order=12):
    """k-th derivative of the normalized Kotz generator at y > 0.

    For s = 1 this uses the product-rule closed form; for general s a
    coefficient recurrence over powers y^(N-1-k+j*s) that stays together
    under differentiation. Orders above ``max_order`` are refused.
    """
    if model.family != "kotz":
        raise ValueError("kotz_h_derivative requires a kotz model")
    if y <= 0:
        raise ValueError("derivatives are evaluated at y > 0")
    if k < 0:
        raise ValueError("derivative order must be >= 0")
    if k > max_order:
        raise ValueError("derivative order %d above cap %d" % (k, max_order))
    p = model.params
    n, r, s = p["N"], p["r"], p["s"]
    c = math.exp(_log_norm_const(model, dim))
    if s == 1.0:
        # sum_i C(k,i) * falling(N-1, i) * y^{N-1-i} * (-r)^{k-i} * e^{-ry}
        total = 0.0
        for i in range(k + 1):
            fall = 1.0
            for t in range(i):
                fall *= n - 1 - t
            total += math.comb(k, i) * fall * y ** (n - 1 - i) * (-r) ** (k - i)
        return c * total * math.exp(-r * y)
    # coefficients a_j of y^{N-1-k+j*s}, exact under the recurrence
    # a'_{j} = a_j * (N-1-k+js) shifting down, minus r*s carried from j-1
    coef = [1.0]
    for step in range(k):
        new = [0.0] * (len(coef) + 1)
        for j, a in enumerate(coef):
            new[j] += a * (n - 1 - step + j * s)
            new[j + 1] += -a * r * s
        coef = new
    total = sum(a * y ** (n - 1 - k + j * s) for j, a in enumerate(coef))
    return c * total * math.exp(-r * y ** s)


def _psd_sqrt(a, name):
    a = np.asarray(a, dtype=float)
    lam, v = np.linalg.eigh(0.5 * (a + a.T))
    tol = 1e-9 * max(np.abs(lam).max(), 1e-300)
    if lam.min() < -tol:
        raise ValueError("%s is not positive semidefinite" % name)
    return (v * np.sqrt(np.clip(lam, 0.0, None))) @ v.T


@dataclass(frozen=True)
class MatrixEllipticalSpec:
    """A matrix elliptical law: mean, row scale, column scale, family."""

    mu: np.ndarray
    sigma_K: np.ndarray
    sigma_D: np.ndarray
    model: EllipticalModel

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sk = np.asarray(self.sigma_K, dtype=float)
        sd = np.asarray(self.sigma_D, dtype=float)
        if mu.ndim != 2:
            raise ValueError("mu must be a K x D matrix")
        k, d = mu.shape
        if sk.shape != (k, k):
            raise ValueError("sigma_K must be %d x %d, got %s" % (k, k, sk.shape))
        if sd.shape != (d, d):
            raise ValueError("sigma_D must be %d x %d, got %s" % (d, d, sd.shape))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_K", 0.5 * (sk + sk.T))
        object.__setattr__(self, "sigma_D", 0.5 * (sd + sd.T))
        _psd_sqrt(self.sigma_K, "sigma_K")
        lam = np.linalg.eigvalsh(self.sigma_D)
        if lam.min() <= 1e-12 * max(lam.max(), 1e-300):
            raise ValueError("sigma_D must be positive definite")


def _radius(model, dim, n, rng):
    p = model.params
    if model.family == "kotz":
        shape = (2 * p["N"] + dim - 2) / (2 * p["s"])
        if shape <= 0:
            raise ValueError("kotz sampling needs 2N + KD - 2 > 0")
        g = rng.gamma(shape, 1.0, size=n)
        return (g / p["r"]) ** (1.0 / (2 * p["s"]))
    if model.family == "pearson_ii":
        return np.sqrt(rng.beta(dim / 2.0, p["m"] + 1.0, size=n))
    if model.family == "pearson_vii":
        if p["N"] <= dim / 2.0:
            raise ValueError("pearson_vii sampling needs N > KD/2")
        g1 = rng.gamma(dim / 2.0, 1.0, size=n)
        g2 = rng.gamma(p["N"] - dim / 2.0, 1.0, size=n)
        return np.sqrt(p["m"] * g1 / g2)
    raise ValueError("no radial sampler for family %r" % model.family)


def sample_matrix_elliptical(spec, n, seed):
    """Draw n matrices from the law; deterministic under the seed.

    Representation: X = mu + R * A U B with vec(U) uniform on the unit
    sphere of R^(KD), A A' = sigma_K, B' B = sigma_D, and R the family's
    radial variate at dimension KD. Gaussian and student_t use their exact
    normal-based shortcuts.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    k, d = spec.mu.shape
    dim = k * d
    a = _psd_sqrt(spec.sigma_K, "sigma_K")
    b = _psd_sqrt(spec.sigma_D, "sigma_D")
    z = rng.normal(size=(n, k, d))
    core = a @ z @ b
    if spec.model.family == "gaussian":
        xs = spec.mu + core
    elif spec.model.family == "student_t":
        m = spec.model.params["m"]
        w = np.sqrt(m / rng.chisquare(m, size=n))
        xs = spec.mu + core * w[:, None, None]
    else:
        norms = np.sqrt((z ** 2).sum(axis=(1, 2)))
        r = _radius(spec.model, dim, n, rng)
        xs = spec.mu + core * (r / norms)[:, None, None]
    return list(xs)

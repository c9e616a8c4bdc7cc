"""Independent derivations of the constants frozen in the C++ unit tests.

Run with `python3 tests/oracle/derive_constants.py`; every printed value is
pasted into the test that names it. Uses exact rationals, numpy and scipy
quadrature, never the library under test.
"""

from fractions import Fraction as F
import itertools
import math

import numpy as np
from scipy import integrate


def show(name, value):
    if isinstance(value, (list, tuple, np.ndarray)):
        print(f"{name} = {{{', '.join(repr(float(v)) for v in value)}}}")
    else:
        print(f"{name} = {float(value)!r}")


def linear_levels(steps, start, end):
    return [F(start) + F(t, steps) * (F(end) - F(start)) for t in range(steps + 1)]


def continuous_coeffs(bt, bn, w):
    at, an = 1 - bt, 1 - bn
    return an - w * at, bn - w * w * bt


# Continuous kernel coefficients on the default linear schedule.
lv = linear_levels(100, F(1), F(1, 100))
w = F(1, 2)
for t in (0, 1, 98):
    a, b = continuous_coeffs(lv[t], lv[t + 1], w)
    show(f"continuous step {t}: beta_t, beta_next, a, b", [lv[t], lv[t + 1], a, b])
beta = F(1, 5)
show("equilibrium beta=0.2 w=0.5: a, b", [(1 - w) * (1 - beta), (1 - w * w) * beta])

# Categorical mixing weights.
w95 = F(95, 100)
show("annealed_b(1.0, 0.999, 0.95)", (F(999, 1000) - w95) / (1 - w95))
show("equilibrium_b(0.5, 0.95)", F(1, 2) * (1 - w95) / (1 - w95 * F(1, 2)))
lc = linear_levels(500, F(1), F(1, 2))
show("categorical step 0 and 250 b", [(lc[t + 1] - w95 * lc[t]) / (1 - w95 * lc[t]) for t in (0, 250)])

# Transition mixture row for x = 2, f = (0.2, 0.3, 0.5), w = 0.95, b = 1/21.
b = F(1, 21)
f = [F(2, 10), F(3, 10), F(5, 10)]
row = [(1 - b) * (1 - w95) * fk for fk in f] + [b]
row[1] += (1 - b) * w95
show("row x=2 f=(.2,.3,.5) w=.95 b=1/21", row)


def element_flows(beta, w, K):
    # Flows between a clean symbol z and the absorbing symbol at constant beta,
    # computed by enumerating x for a single element with z fixed.
    b = beta * (1 - w) / (1 - w * beta)
    p_x_is_z = (1 - beta)
    into = p_x_is_z * b
    # From x = K+1: y = z requires the fresh draw (1-b)(1-w) from the posterior
    # point mass at z.
    out = beta * (1 - b) * (1 - w)
    return into, out


for beta_v, w_v in [(F(1, 10), F(1, 2)), (F(1, 2), F(95, 100)), (F(9, 10), F(95, 100))]:
    into, out = element_flows(beta_v, w_v, 2)
    closed = beta_v * (1 - w_v) * (1 - beta_v) / (1 - w_v * beta_v)
    assert into == out == closed
    show(f"flow beta={float(beta_v)} w={float(w_v)}", closed)

# Linear-Gaussian marginal: X ~ N(1, 0.25), Y | X ~ N(0.5 X - 1, 0.1).
show("linear gaussian (1, .25, .5, -1, .1): mean, var", [F(1, 2) * 1 - 1, F(1, 4) * F(1, 4) + F(1, 10)])


def quad_posterior(weights, means, variances, x, beta, alpha):
    def prior(z):
        return sum(wk * math.exp(-(z - m) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
                   for wk, m, v in zip(weights, means, variances))

    def lik(z):
        return math.exp(-(x - alpha * z) ** 2 / (2 * beta)) / math.sqrt(2 * math.pi * beta)

    zs = np.linspace(-12, 12, 200001)
    dens = np.array([prior(z) * lik(z) for z in zs])
    mass = integrate.simpson(dens, x=zs)
    mean = integrate.simpson(dens * zs, x=zs) / mass
    var = integrate.simpson(dens * (zs - mean) ** 2, x=zs) / mass
    return mass, mean, var


mass, mean, var = quad_posterior([1.0], [0.3], [0.2], 0.7, 0.4, 0.6)
show("one component posterior (x=.7, beta=.4, alpha=.6): p(x), mean, var", [mass, mean, var])
mass, mean, var = quad_posterior([0.5, 0.5], [-1.0, 1.0], [0.1, 0.1], 0.2, 0.5, 0.5)
show("two component posterior (x=.2, beta=.5, alpha=.5): p(x), mean, var", [mass, mean, var])


def exact_transition_density(weights, means, variances, x, y, beta, w):
    alpha = 1 - beta
    a = (1 - w) * alpha
    bb = (1 - w * w) * beta
    # Marginalize the true posterior mixture: sum_k r_k N(y; w x + a m_k, b + a^2 v_k).
    comps = []
    for wk, m, v in zip(weights, means, variances):
        px = wk * math.exp(-(x - alpha * m) ** 2 / (2 * (alpha ** 2 * v + beta))) / math.sqrt(
            2 * math.pi * (alpha ** 2 * v + beta))
        pm = (alpha * v * x + beta * m) / (alpha ** 2 * v + beta)
        pv = v * beta / (alpha ** 2 * v + beta)
        comps.append((px, pm, pv))
    total = sum(c[0] for c in comps)
    dens = 0.0
    for px, pm, pv in comps:
        s2 = bb + a * a * pv
        dens += px / total * math.exp(-(y - w * x - a * pm) ** 2 / (2 * s2)) / math.sqrt(2 * math.pi * s2)
    return dens


show("exact transition density two comps x=.2 y=-.3 beta=.2 w=.5",
     exact_transition_density([0.5, 0.5], [-1.0, 1.0], [0.1, 0.1], 0.2, -0.3, 0.2, 0.5))

# Noisy marginal and joint posterior for D = 2, K = 2, p(z) = (.1, .2, .3, .4).
pz = {(1, 1): 0.1, (1, 2): 0.2, (2, 1): 0.3, (2, 2): 0.4}
beta = 0.5
px = []
for x in itertools.product([1, 2, 3], repeat=2):
    total = 0.0
    for z, p in pz.items():
        lik = 1.0
        for xi, zi in zip(x, z):
            lik *= beta if xi == 3 else ((1 - beta) if xi == zi else 0.0)
        total += p * lik
    px.append(total)
show("noisy marginal D2 K2 beta=.5", px)
show("joint posterior x=(3,2)", [0.0, pz[(1, 2)] / (pz[(1, 2)] + pz[(2, 2)]), 0.0, pz[(2, 2)] / (pz[(1, 2)] + pz[(2, 2)])])

# Stationary vector of a 3-state chain by eigen-decomposition.
P = np.array([[0.5, 0.3, 0.2], [0.1, 0.8, 0.1], [0.25, 0.25, 0.5]])
vals, vecs = np.linalg.eig(P.T)
pi = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
show("stationary of P", pi / pi.sum())

# Energy distance between two small point sets.
A = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
B = np.array([[1.0, 1.0], [2.0, -1.0]])


def pd(u, v):
    return np.linalg.norm(u[:, None, :] - v[None, :, :], axis=-1)


ab = pd(A, B).mean()
aa_v, bb_v = pd(A, A).mean(), pd(B, B).mean()
aa_u = pd(A, A).sum() / (len(A) * (len(A) - 1))
bb_u = pd(B, B).sum() / (len(B) * (len(B) - 1))
show("energy distance U, V", [2 * ab - aa_u - bb_u, 2 * ab - aa_v - bb_v])

# Sinusoidal embedding of beta = 0.5 with 8 features.
dim, s = 8, 1000.0
freqs = [10000 ** (-2 * k / dim) for k in range(dim // 2)]
show("embed(0.5, 8)", [math.sin(s * 0.5 * f) for f in freqs] + [math.cos(s * 0.5 * f) for f in freqs])

# Adam on a scalar with b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01.
theta, m, v = 0.5, 0.0, 0.0
trace = []
for step, g in enumerate([0.1, -0.2, 0.3], start=1):
    m = 0.9 * m + 0.1 * g
    v = 0.999 * v + 0.001 * g * g
    mhat, vhat = m / (1 - 0.9 ** step), v / (1 - 0.999 ** step)
    theta -= 0.01 * mhat / (math.sqrt(vhat) + 1e-8)
    trace.append(theta)
show("adam trace", trace)

# Constant-level inpainting fixed point for an observed dim: iterate the
# mean/variance recursions of y = w x + a zbar + N(0, b).
w, beta, zbar = 0.5, 0.3, 0.8
alpha = 1 - beta
a, bb = (1 - w) * alpha, (1 - w * w) * beta
E, V = 0.0, 1.0
for _ in range(200):
    E, V = w * E + a * zbar, w * w * V + bb
show("inpaint fixed point mean, var", [E, V])

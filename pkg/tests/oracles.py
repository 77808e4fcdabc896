"""Independent reference computations for the test suite.

Nothing here imports the package under test; every expected value comes
from direct arithmetic on small probability tables.
"""

import numpy as np
from scipy.special import expit

# Discrete toy RCT: binary C, T, Y with T independent of C.
TOY_PC1 = 0.4
TOY_PT1 = 0.3
# P(Y=1 | T=t, C=c), indexed [t][c]
TOY_PY = np.array([[0.20, 0.50], [0.45, 0.90]])
# confounding function P*(T=1 | C=c), indexed [c]
TOY_ZETA = np.array([0.8, 0.2])

# Homogeneous-effect variant: P(Y=1|t,c) = 0.2 + 0.3 c + 0.25 t, ATE 0.25.
HOMOG_PY = np.array([[0.20, 0.50], [0.45, 0.75]])
HOMOG_ATE = 0.25


def toy_rct_arrays(n, seed, py=TOY_PY, pc1=TOY_PC1, pt1=TOY_PT1):
    rng = np.random.default_rng(seed)
    c = (rng.random(n) < pc1).astype(int)
    t = (rng.random(n) < pt1).astype(int)
    y = (rng.random(n) < py[t, c]).astype(float)
    return c, t, y


def toy_true_ate(py=TOY_PY, pc1=TOY_PC1):
    pc = np.array([1 - pc1, pc1])
    return float(np.sum(pc * (py[1] - py[0])))


def toy_target_table(py=TOY_PY, pc1=TOY_PC1, zeta=TOY_ZETA):
    """Exact P(C) P*(T|C) P(Y|T,C) as a dict {(c, t, y): prob}."""
    out = {}
    for c in (0, 1):
        pc = pc1 if c else 1 - pc1
        for t in (0, 1):
            pt = zeta[c] if t else 1 - zeta[c]
            for y in (0, 1):
                p_y = py[t, c] if y else 1 - py[t, c]
                out[(c, t, y)] = pc * pt * p_y
    return out


def gentzel_pc1(zeta=TOY_ZETA, pc1=TOY_PC1, pt1=TOY_PT1):
    """P(C=1 | S=1) under Bernoulli(f(C)) == T selection."""
    keep = [zeta[c] * pt1 + (1 - zeta[c]) * (1 - pt1) for c in (0, 1)]
    return pc1 * keep[1] / (pc1 * keep[1] + (1 - pc1) * keep[0])


def expected_kept(c, t, zeta=TOY_ZETA):
    """Mean and variance of the number of rows the rejection sampler keeps.

    Uses the same empirical arm fractions and bound as the sampler, but
    recomputed cell by cell.
    """
    p1 = t.mean()
    p_arm = {0: 1 - p1, 1: p1}
    pstar = {(tt, cc): (zeta[cc] if tt else 1 - zeta[cc]) for tt in (0, 1) for cc in (0, 1)}
    present = {(tt, cc) for tt, cc in zip(t, c)}
    m = max(pstar[k] for k in present) / min(p_arm[tt] for tt, _ in present)
    mean = var = 0.0
    for (tt, cc), ps in pstar.items():
        k = int(np.sum((t == tt) & (c == cc)))
        a = ps / (p_arm[tt] * m)
        mean += k * a
        var += k * a * (1 - a)
    return mean, var, m


def setting1_gentzel_bias():
    """Asymptotic bias of the oracle adjustment under Bernoulli(f(C)) == T selection in Setting 1.

    Selection keeps P(C) distorted but E[Y|T,C] intact, so the adjusted
    estimate converges to sum_c P(c | S=1) (1.5 + 2c) while the truth uses P(c) = 0.5.
    """
    f = expit(np.array([-1.0, 1.5]))
    keep = f * 0.3 + (1 - f) * 0.7
    pc1_s = 0.5 * keep[1] / (0.5 * keep[1] + 0.5 * keep[0])
    return abs((1.5 + 2 * pc1_s) - 2.5), pc1_s


def odds_ratio_2x2(n11, n10, n01, n00):
    return n11 * n00 / (n10 * n01)


def confounded_toy_arrays(n, seed, py=HOMOG_PY, pc1=TOY_PC1, zeta=TOY_ZETA):
    """Observational toy drawn directly from P(C) P*(T|C) P(Y|T,C)."""
    rng = np.random.default_rng(seed)
    c = (rng.random(n) < pc1).astype(int)
    t = (rng.random(n) < zeta[c]).astype(int)
    y = (rng.random(n) < py[t, c]).astype(float)
    return c, t, y


def oracle_nuisances(c, py=HOMOG_PY, zeta=TOY_ZETA):
    """Exact q0, q1, g, qx for the confounded toy, evaluated per row."""
    g = zeta[c]
    q0, q1 = py[0, c], py[1, c]
    return q0, q1, g, g * q1 + (1 - g) * q0


def exact_backdoor_table(table):
    """Backdoor adjustment evaluated on a {(c, t, y): prob} table."""
    est = 0.0
    for c in (0, 1):
        pc = sum(p for (cc, _, _), p in table.items() if cc == c)
        means = []
        for t in (1, 0):
            pct = table[(c, t, 0)] + table[(c, t, 1)]
            means.append(table[(c, t, 1)] / pct)
        est += pc * (means[0] - means[1])
    return est

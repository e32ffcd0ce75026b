"""Random polynomial systems with a known feasible point."""

import numpy as np

from gmmcluster.sos import MatrixSosConstraint, Polynomial, PolynomialSystem
from gmmcluster.sos.polynomial import monomials_of_degree


def random_polynomial(rng, d, deg, nvars=None, offset=0):
    nvars = d if nvars is None else nvars
    coeffs = {}
    for k in range(deg + 1):
        for e in monomials_of_degree(d, k):
            if rng.random() < 0.6:
                full = [0] * nvars
                full[offset:offset + d] = e
                coeffs[tuple(full)] = float(rng.standard_normal())
    return Polynomial(coeffs, nvars)


def random_feasible_system(rng, d, t):
    """System over R^d of degree <= t satisfied by a random point x0."""
    x0 = rng.uniform(-1, 1, d)
    eqs, ineqs, certs = [], [], []
    for _ in range(int(rng.integers(0, 3))):
        p = random_polynomial(rng, d, int(rng.integers(1, t + 1)))
        eqs.append(p - p.evaluate(x0))
    for _ in range(int(rng.integers(1, 4))):
        p = random_polynomial(rng, d, int(rng.integers(1, t + 1)))
        ineqs.append(p - p.evaluate(x0) + float(rng.uniform(0, 1)))
    if rng.random() < 0.5:
        # y^T A(x) y with A(x0) positive semidefinite, aux dimension 2
        m = 2
        entries = {}
        for i in range(m):
            for j in range(i, m):
                q = random_polynomial(rng, d, int(rng.integers(0, t + 1)), nvars=d)
                entries[(i, j)] = q
        A0 = np.zeros((m, m))
        for (i, j), q in entries.items():
            A0[i, j] = A0[j, i] = q.evaluate(x0)
        shift = max(0.0, -np.linalg.eigvalsh(A0)[0]) + float(rng.uniform(0, 1))
        target = Polynomial({}, d + m)
        for (i, j), q in entries.items():
            qq = q + (shift if i == j else 0.0)
            e = [0] * (d + m)
            e[d + i] += 1
            e[d + j] += 1
            yy = Polynomial({tuple(e): 1.0 if i == j else 2.0}, d + m)
            target = target + qq.embed(d + m) * yy
        certs.append(MatrixSosConstraint(target, d, m, 2, description="random psd form"))
    return PolynomialSystem(d, eqs, ineqs, certs), x0

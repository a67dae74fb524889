"""Independent reference computations used by the test suite.

Everything here is deliberately built from first principles (scipy.stats
densities, quadrature, finite differences, exhaustive enumeration) and never
reuses the package's convolution identities or derivative formulas, so a
match is evidence rather than tautology.
"""

import itertools
import math

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm


def kde_pdf_1d(points, h):
    """Plain 1-d Gaussian KDE density built from scipy.stats.norm;
    vectorized over array-valued query points."""
    points = np.asarray(points, dtype=float)
    sd = math.sqrt(h)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return norm.pdf(x[..., None], loc=points, scale=sd).mean(axis=-1)

    return pdf


def ucv_oracle_1d(points, h):
    """Integrated squared estimate minus twice the mean leave-one-out
    density, each term computed by brute force."""
    points = np.asarray(points, dtype=float)
    n = points.size
    pdf = kde_pdf_1d(points, h)
    lo = points.min() - 14.0 * math.sqrt(h)
    hi = points.max() + 14.0 * math.sqrt(h)
    integral, _ = quad(lambda x: pdf(x) ** 2, lo, hi, limit=300)
    loo_mean = 0.0
    for i in range(n):
        rest = np.delete(points, i)
        loo_mean += np.mean(norm.pdf(points[i], loc=rest, scale=math.sqrt(h)))
    loo_mean /= n
    return integral - 2.0 * loo_mean


def scv_oracle_1d(points, h, g):
    """Roughness penalty plus the integrated squared difference between the
    pilot estimate and its extra smoothing by the candidate bandwidth; the
    smoothing convolution is computed by grid quadrature, not in closed
    form. The trapezoid rule on these analytic, rapidly decaying integrands
    converges far below the comparison tolerance."""
    points = np.asarray(points, dtype=float)
    n = points.size
    pilot = kde_pdf_1d(points, g)
    reach = 14.0 * math.sqrt(h + g)
    outer = np.linspace(points.min() - reach, points.max() + reach, 1601)
    inner_reach = reach + 14.0 * math.sqrt(h)
    inner = np.linspace(points.min() - inner_reach, points.max() + inner_reach, 4001)

    pilot_inner = pilot(inner)
    kernel = norm.pdf(outer[:, None] - inner[None, :], scale=math.sqrt(h))
    smoothed = np.trapezoid(kernel * pilot_inner[None, :], inner, axis=1)
    second_term = np.trapezoid((smoothed - pilot(outer)) ** 2, outer)
    iv = (4.0 * math.pi) ** -0.5 / (n * math.sqrt(h))
    return iv + second_term


def pi_oracle_1d(points, h, g):
    """Roughness penalty plus a quarter of h^2 times the integrated squared
    second derivative of the half-pilot estimate; the derivative comes from
    five-point central differences of the plain density."""
    points = np.asarray(points, dtype=float)
    n = points.size
    half_pilot = kde_pdf_1d(points, g / 2.0)
    step = 0.02 * math.sqrt(g / 2.0)

    def second_derivative(x):
        return (
            -half_pilot(x + 2 * step)
            + 16.0 * half_pilot(x + step)
            - 30.0 * half_pilot(x)
            + 16.0 * half_pilot(x - step)
            - half_pilot(x - 2 * step)
        ) / (12.0 * step * step)

    reach = 14.0 * math.sqrt(g)
    grid = np.linspace(points.min() - reach, points.max() + reach, 3001)
    psi4 = np.trapezoid(second_derivative(grid) ** 2, grid)
    iv = (4.0 * math.pi) ** -0.5 / (n * math.sqrt(h))
    return iv + 0.25 * h * h * psi4


def gaussian_fourth_derivative_fd(cov, delta, step_scale=0.02):
    """Mixed fourth-order partials of the centered Gaussian density at delta
    by nested central differences of scipy's multivariate pdf."""
    from scipy.stats import multivariate_normal

    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    mvn = multivariate_normal(mean=np.zeros(d), cov=cov)
    steps = step_scale * np.sqrt(np.diag(cov))

    def partial(f, axis):
        e = np.zeros(d)
        e[axis] = steps[axis]

        def deriv(x):
            return (f(x + e) - f(x - e)) / (2.0 * steps[axis])

        return deriv

    tensor = np.empty((d,) * 4)
    for idx in itertools.product(range(d), repeat=4):
        f = mvn.pdf
        for axis in idx:
            f = partial(f, axis)
        tensor[idx] = f(np.asarray(delta, dtype=float))
    return tensor


def markov_equivalent_bruteforce(arcs_a, arcs_b, nodes):
    """Two DAGs are Markov equivalent iff they share skeleton and
    unshielded colliders."""

    def skeleton(arcs):
        return {frozenset(a) for a in arcs}

    def colliders(arcs):
        arcs = set(arcs)
        skel = skeleton(arcs)
        result = set()
        for v in nodes:
            parents = [u for (u, w) in arcs if w == v]
            for p, q in itertools.combinations(sorted(parents), 2):
                if frozenset((p, q)) not in skel:
                    result.add((p, q, v))
        return result

    return skeleton(arcs_a) == skeleton(arcs_b) and colliders(arcs_a) == colliders(
        arcs_b
    )


def all_dags(nodes):
    """Every DAG over the node set, as a frozenset of arcs."""
    pairs = list(itertools.combinations(nodes, 2))
    graphs = []
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        arcs = set()
        for (a, b), state in zip(pairs, states):
            if state == 1:
                arcs.add((a, b))
            elif state == 2:
                arcs.add((b, a))
        if _is_acyclic(nodes, arcs):
            graphs.append(frozenset(arcs))
    return graphs


def _is_acyclic(nodes, arcs):
    remaining = set(nodes)
    arcs = set(arcs)
    while remaining:
        sinks = [n for n in remaining if not any(u == n for u, v in arcs if v in remaining)]
        if not sinks:
            return False
        remaining -= set(sinks)
    return True


def compelled_arcs_bruteforce(nodes, arcs):
    """An arc is compelled iff it keeps one orientation in every Markov
    equivalent DAG; returns (directed set, undirected frozenset pairs)."""
    arcs = frozenset(arcs)
    equivalents = [
        g for g in all_dags(tuple(nodes)) if markov_equivalent_bruteforce(arcs, g, nodes)
    ]
    directed = set()
    undirected = set()
    for u, v in arcs:
        if all((u, v) in g for g in equivalents):
            directed.add((u, v))
        else:
            undirected.add(frozenset((u, v)))
    return directed, undirected
